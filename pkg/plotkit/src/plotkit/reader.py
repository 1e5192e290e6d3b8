"""Reading the massbalance CSV formats.

Both file kinds share the same envelope: `#`-prefixed comment lines carrying
one JSON object each (tool/version, then the resolved config), a header row,
then data rows.  The reader is a pure view — values are parsed but never
aggregated or recomputed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

TRAJECTORY_COLUMNS = ("run_id", "n", "seed", "step", "q_pos", "fraction_improved", "worst_drop")
DECAY_COLUMNS = ("p", "n", "analytic", "estimate", "std_error", "z_score")


class PlotkitError(Exception):
    """Base for everything this package raises on purpose."""


class SchemaError(PlotkitError, ValueError):
    """Input header does not carry the columns a plot needs."""

    def __init__(self, missing: list[str], found: list[str]):
        self.missing = list(missing)
        self.found = list(found)
        super().__init__(
            f"missing column(s): {', '.join(self.missing)} "
            f"(file has: {', '.join(self.found) or 'nothing'})"
        )


class EmptyInputError(PlotkitError, ValueError):
    """Header parsed fine but there are no data rows to draw."""


@dataclass(frozen=True)
class Table:
    """One parsed CSV: comment metadata, column names, and raw cell values."""

    metadata: dict
    config: dict
    header: tuple[str, ...]
    cells: tuple[tuple[str, ...], ...]

    def column(self, name: str) -> list[str]:
        idx = self.header.index(name)
        return [row[idx] for row in self.cells]

    def floats(self, name: str) -> np.ndarray:
        return np.array([float(x) for x in self.column(name)])


def _parse_comment(line: str) -> dict:
    body = line.lstrip("#").strip()
    if body.startswith("config:"):
        body = body[len("config:") :].strip()
    try:
        parsed = json.loads(body)
    except json.JSONDecodeError:
        return {}
    return parsed if isinstance(parsed, dict) else {}


def read_table(path: str, required: tuple[str, ...]) -> Table:
    """Read a CSV, enforce the required columns, reject empty bodies."""
    metadata: dict = {}
    config: dict = {}
    header: tuple[str, ...] | None = None
    cells: list[tuple[str, ...]] = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                parsed = _parse_comment(line)
                if "config:" in line and not config:
                    config = parsed
                elif not metadata:
                    metadata = parsed
                continue
            if header is None:
                header = tuple(line.split(","))
                continue
            row = tuple(line.split(","))
            if len(row) != len(header):
                raise SchemaError(
                    missing=[f"row of width {len(row)} vs header width {len(header)}"],
                    found=list(header),
                )
            cells.append(row)
    if header is None:
        raise EmptyInputError(f"{path}: no header row found")
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(missing, list(header))
    if not cells:
        raise EmptyInputError(f"{path}: header only, no data rows to plot")
    return Table(metadata=metadata, config=config, header=header, cells=tuple(cells))
