"""Deterministic file emission: trajectory CSVs and result JSON.

Every emitted file starts with comment lines carrying the resolved
configuration (one canonical JSON object) and the tool version, so a result
can always be traced back to what produced it.  Nothing time- or
machine-dependent is ever written: equal inputs give byte-equal files.

Trajectory CSV schema (fixed)::

    run_id,n,seed,step,q_pos,fraction_improved,worst_drop

Floats are serialized with 17 significant digits, enough for bit-faithful
float64 round-trips.  Rows are ordered by (n, seed, step).
"""

from __future__ import annotations

import json
from typing import IO, Mapping

from . import __version__
from .simulate import TrajectoryMetrics

__all__ = ["format_float", "write_trajectory_csv", "dump_json"]

TRAJECTORY_COLUMNS = ("run_id", "n", "seed", "step", "q_pos", "fraction_improved", "worst_drop")


def format_float(x: float) -> str:
    """17 significant digits: lossless for float64, stable across runs."""
    return format(float(x), ".17g")


def _header_lines(config: Mapping, extra: Mapping | None = None) -> list[str]:
    meta = {"tool": "massbalance", "version": __version__}
    if extra:
        meta.update(extra)
    return [
        "# " + json.dumps(meta, sort_keys=True),
        "# config: " + json.dumps(config, sort_keys=True),
    ]


def write_trajectory_csv(
    fh: IO[str],
    runs: Mapping[tuple[int, int], TrajectoryMetrics],
    config: Mapping,
) -> None:
    """Write a (possibly single-run) trajectory table in canonical order."""
    for line in _header_lines(config):
        fh.write(line + "\n")
    fh.write(",".join(TRAJECTORY_COLUMNS) + "\n")
    for n, seed in sorted(runs):
        metrics = runs[(n, seed)]
        run_id = f"n{n}-s{seed}"
        for step in range(metrics.q_pos.size):
            fh.write(
                f"{run_id},{n},{seed},{step},"
                f"{format_float(metrics.q_pos[step])},"
                f"{format_float(metrics.fraction_improved[step])},"
                f"{format_float(metrics.worst_drop[step])}\n"
            )


def dump_json(payload: Mapping, config: Mapping) -> str:
    """Result JSON with the same provenance envelope as the CSVs."""
    doc = {
        "tool": "massbalance",
        "version": __version__,
        "config": config,
        "result": payload,
    }
    return json.dumps(doc, indent=2, sort_keys=True)
