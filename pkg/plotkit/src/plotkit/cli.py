"""Command-line front end.

Subcommands::

    massbalance-plot trajectories SWEEP.csv --out FIG.png [--metrics a,b] [--log-y]
    massbalance-plot decay        LEMMA.csv --out FIG.png [--log-x] [--log-y]

Exit codes: 0 success, 1 unusable input (schema/empty/unreadable), 64 usage.
"""

from __future__ import annotations

import argparse
import sys

from .reader import PlotkitError
from .render import TRAJECTORY_METRICS, PlotSpec, render_decay, render_trajectories

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_USAGE = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _metrics(text: str) -> tuple[str, ...]:
    parts = tuple(p for p in text.split(",") if p)
    if not parts:
        raise _UsageError("--metrics needs at least one column name")
    return parts


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="massbalance-plot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trajectories", help="metric panels from a trajectory/sweep CSV")
    p.add_argument("csv")
    p.add_argument("--out", required=True, help="output image path (.png, .svg, ...)")
    p.add_argument(
        "--metrics",
        default=",".join(TRAJECTORY_METRICS),
        help="comma list of metric columns (default: all three)",
    )
    p.add_argument("--group-by", default="n", help="column that labels the series")
    p.add_argument("--log-x", action="store_true")
    p.add_argument("--log-y", action="store_true")
    p.add_argument("--dpi", type=int, default=100)
    p.set_defaults(kind="trajectories")

    p = sub.add_parser("decay", help="analytic vs Monte Carlo unsampled-mass curves")
    p.add_argument("csv")
    p.add_argument("--out", required=True)
    p.add_argument("--log-x", action="store_true")
    p.add_argument("--log-y", action="store_true")
    p.add_argument("--dpi", type=int, default=100)
    p.set_defaults(kind="decay")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.kind == "trajectories":
            spec = PlotSpec(
                input_path=args.csv,
                output_path=args.out,
                metrics=_metrics(args.metrics),
                group_key=args.group_by,
                log_x=args.log_x,
                log_y=args.log_y,
                dpi=args.dpi,
            )
            path = render_trajectories(spec)
        else:
            spec = PlotSpec(
                input_path=args.csv,
                output_path=args.out,
                log_x=args.log_x,
                log_y=args.log_y,
                dpi=args.dpi,
            )
            path = render_decay(spec)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlotkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(path, file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
