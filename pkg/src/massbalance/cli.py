"""Command-line front end.

Subcommands::

    massbalance analyze  SCENARIO  [--seed S] [--out FILE]
    massbalance simulate CONFIG    [--seed S] [--out FILE]
    massbalance sweep    CONFIG    --n 4,64,1024 [--seeds 8] [--workers W] [--seed S] [--out FILE]
    massbalance lemma-check [--p-grid ...] [--n-grid ...] [--trials T] [--seed S] [--out FILE]
    massbalance adaptive SCENARIO  --target M [controller knobs] [--seed S] [--out FILE]

``CONFIG`` is a versioned simulation-config JSON file or a preset name
(``desk`` / ``paper``).  Machine output goes to ``--out`` (stdout when
omitted); human-readable tables go to stderr so pipes stay clean.

Exit codes: 0 success, 1 validation failure, 2 numeric divergence,
64 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from importlib import resources

import numpy as np

from . import __version__
from .adaptive import ControllerConfig, run_controller
from .emit import dump_json, format_float, write_trajectory_csv
from .errors import MassBalanceError, ScenarioError
from .sampling import expected_unsampled_second_moment
from .scenario import parse_scenario
from .simulate import SimulationConfig, run_simulation, sweep_rollout_sizes
from .update import one_step_report

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DIVERGED = 2
EXIT_USAGE = 64

CONFIG_VERSION = 1
_PRESET_FILES = {"desk": "desk_scale.json", "paper": "paper_scale.json"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse, but usage problems raise instead of exiting with code 2."""

    def error(self, message):
        raise _UsageError(message)


def _write_out(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _read_file(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise ScenarioError([("unreadable", f"{path}: {exc}")]) from exc


def load_sim_config(source: str) -> SimulationConfig:
    """Resolve a preset name or a versioned JSON config file."""
    if source in _PRESET_FILES:
        text = (
            resources.files("massbalance.presets").joinpath(_PRESET_FILES[source]).read_text()
        )
    else:
        text = _read_file(source)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([("bad-json", str(exc))]) from exc
    if not isinstance(raw, dict):
        raise ScenarioError([("bad-type", "config top level must be an object")])
    version = raw.pop("version", None)
    if version != CONFIG_VERSION:
        raise ScenarioError(
            [("unknown-version", f"supported config version is {CONFIG_VERSION}, got {version}")]
        )
    try:
        return SimulationConfig.from_dict(raw)
    except MassBalanceError as exc:
        raise ScenarioError([("bad-value", str(exc))]) from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise _UsageError(f"expected a comma-separated integer list, got {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise _UsageError(f"expected a comma-separated float list, got {text!r}") from exc


def _seed_list(spec: str, root_seed: int) -> list[int]:
    if "," in spec:
        return _int_list(spec)
    try:
        count = int(spec)
    except ValueError as exc:
        raise _UsageError(f"--seeds takes a count or a comma list, got {spec!r}") from exc
    if count < 1:
        raise _UsageError("--seeds count must be >= 1")
    return list(range(root_seed, root_seed + count))


def _print_table(rows: list[tuple[str, str]]) -> None:
    width = max(len(k) for k, _ in rows)
    for key, val in rows:
        print(f"  {key:<{width}}  {val}", file=sys.stderr)


# -- subcommands ------------------------------------------------------------


def _cmd_analyze(args) -> int:
    scenario = parse_scenario(_read_file(args.scenario))
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    built = scenario.build()
    if built.batch is None:
        raise ScenarioError([("missing-field", "analyze needs a batch in the scenario")])
    report = one_step_report(built.dist, built.batch, built.rewards, built.eta)
    payload = report.as_dict()
    _print_table(
        [
            ("delta_q_closed_form", format_float(report.delta_q_closed_form)),
            ("delta_q_jacobian", format_float(report.delta_q_jacobian)),
            ("delta_q_exact", format_float(report.delta_q_exact)),
            ("margin", format_float(report.margin)),
            ("s_r", format_float(report.stats.s_r)),
            ("positivity", report.positivity.outcome.value),
            ("scenario", report.positivity.scenario.value),
        ]
    )
    _write_out(dump_json(payload, {"scenario": json.loads(scenario.to_json())}), args.out)
    return EXIT_OK


def _apply_sim_overrides(cfg: SimulationConfig, args) -> SimulationConfig:
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "steps", None) is not None:
        cfg = replace(cfg, steps=args.steps)
    return cfg


def _cmd_simulate(args) -> int:
    cfg = _apply_sim_overrides(load_sim_config(args.config), args)
    metrics = run_simulation(cfg)
    from io import StringIO

    buf = StringIO()
    write_trajectory_csv(buf, {(cfg.n_rollouts, cfg.seed): metrics}, cfg.to_dict())
    _write_out(buf.getvalue(), args.out)
    if metrics.diverged_at_step is not None:
        print(f"diverged at step {metrics.diverged_at_step}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _run_one(payload):
    cfg_dict, n, seed = payload
    cfg = replace(SimulationConfig.from_dict(cfg_dict), n_rollouts=n, seed=seed)
    return (n, seed), run_simulation(cfg)


def _cmd_sweep(args) -> int:
    cfg = _apply_sim_overrides(load_sim_config(args.config), args)
    n_values = _int_list(args.n)
    seeds = _seed_list(args.seeds, cfg.seed)
    if args.workers and args.workers > 1:
        # each run's stream depends only on (component, seed), so parallel
        # execution is bitwise-identical to serial; order is restored by key
        from concurrent.futures import ProcessPoolExecutor

        jobs = [(cfg.to_dict(), n, s) for n in n_values for s in seeds]
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            runs = dict(pool.map(_run_one, jobs))
    else:
        runs = sweep_rollout_sizes(cfg, n_values, seeds)
    from io import StringIO

    buf = StringIO()
    sweep_config = dict(cfg.to_dict(), sweep_n=n_values, sweep_seeds=seeds)
    write_trajectory_csv(buf, runs, sweep_config)
    _write_out(buf.getvalue(), args.out)
    diverged = [key for key, m in runs.items() if m.diverged_at_step is not None]
    if diverged:
        print(f"diverged runs: {sorted(diverged)}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _cmd_lemma_check(args) -> int:
    p_grid = _float_list(args.p_grid)
    n_grid = _int_list(args.n_grid)
    if any(not 0.0 < p < 1.0 for p in p_grid):
        raise ScenarioError([("bad-value", "p grid values must lie strictly in (0, 1)")])
    if any(n < 1 for n in n_grid):
        raise ScenarioError([("bad-value", "n grid values must be >= 1")])
    if args.trials < 1:
        raise ScenarioError([("bad-value", "--trials must be >= 1")])
    rng = np.random.default_rng(np.random.SeedSequence([6, args.seed or 0]))
    lines = [
        "# " + json.dumps({"tool": "massbalance", "version": __version__}, sort_keys=True),
        "# config: "
        + json.dumps(
            {"p_grid": p_grid, "n_grid": n_grid, "trials": args.trials, "seed": args.seed or 0},
            sort_keys=True,
        ),
        "p,n,analytic,estimate,std_error,z_score",
    ]
    for p in p_grid:
        for n in n_grid:
            analytic = expected_unsampled_second_moment(p, n)
            missed = rng.binomial(n, p, size=args.trials) == 0
            miss_rate = float(np.mean(missed))
            estimate = p * p * miss_rate
            se = p * p * float(np.sqrt(miss_rate * (1 - miss_rate) / args.trials))
            if se == 0.0:
                # all-or-nothing outcome: score against the rule-of-three
                # bound (the resolution floor of a trials-sized sample)
                z = (estimate - analytic) / (p * p * 3.0 / args.trials)
            else:
                z = (estimate - analytic) / se
            lines.append(
                f"{format_float(p)},{n},{format_float(analytic)},"
                f"{format_float(estimate)},{format_float(se)},{format_float(z)}"
            )
    _write_out("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _cmd_adaptive(args) -> int:
    scenario = parse_scenario(_read_file(args.scenario))
    built = scenario.build()
    config = ControllerConfig(
        m_target=args.target,
        n_initial=args.n_initial,
        n_max=args.n_max,
        growth_factor=args.growth_factor,
        shrink_threshold=args.shrink_threshold,
        pilot_sample_size=args.pilot,
        max_iterations=args.max_iterations,
    )
    trace = run_controller(built.dist, built.rewards, config, args.seed or 0)
    _print_table(
        [
            ("final_n", str(trace.final_n)),
            ("final_margin", format_float(trace.final_margin)),
            ("converged", str(trace.converged).lower()),
            ("stop_reason", trace.stop_reason),
            ("actions", " ".join(s.action for s in trace.steps)),
        ]
    )
    controller_cfg = {
        "m_target": config.m_target,
        "n_initial": config.n_initial,
        "n_max": config.n_max,
        "growth_factor": config.growth_factor,
        "shrink_threshold": config.shrink_threshold,
        "pilot_sample_size": config.pilot_sample_size,
        "max_iterations": config.max_iterations,
        "seed": args.seed or 0,
    }
    _write_out(dump_json(trace.as_dict(), controller_cfg), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="massbalance", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"massbalance {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="root seed override")
        p.add_argument("--out", default=None, help="output file (default: stdout)")

    p = sub.add_parser("analyze", help="one-step mass-balance report for a scenario")
    p.add_argument("scenario")
    common(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("simulate", help="run one trajectory, emit the metrics CSV")
    p.add_argument("config", help="config file or preset name (desk | paper)")
    p.add_argument("--steps", type=int, default=None, help="override step count")
    common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="trajectory grid over rollout counts and seeds")
    p.add_argument("config", help="config file or preset name (desk | paper)")
    p.add_argument("--n", required=True, help="comma list of rollout counts")
    p.add_argument("--seeds", default="1", help="seed count or comma list (default 1)")
    p.add_argument("--steps", type=int, default=None, help="override step count")
    p.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("lemma-check", help="analytic vs Monte Carlo unsampled mass")
    p.add_argument("--p-grid", default="0.01,0.1,0.3,0.5,0.9")
    p.add_argument("--n-grid", default="1,4,16,64")
    p.add_argument("--trials", type=int, default=1_000_000)
    common(p)
    p.set_defaults(func=_cmd_lemma_check)

    p = sub.add_parser("adaptive", help="walk the rollout count to the margin target")
    p.add_argument("scenario")
    p.add_argument("--target", type=float, required=True, help="margin target (> 0)")
    p.add_argument("--n-initial", type=int, default=4)
    p.add_argument("--n-max", type=int, default=65536)
    p.add_argument("--growth-factor", type=float, default=2.0)
    p.add_argument("--shrink-threshold", type=float, default=4.0)
    p.add_argument("--pilot", type=int, default=16)
    p.add_argument("--max-iterations", type=int, default=32)
    common(p)
    p.set_defaults(func=_cmd_adaptive)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    except MassBalanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
