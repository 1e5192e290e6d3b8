"""Figure rendering for massbalance CSV outputs.

A pure view over the files the ``massbalance`` command emits: trajectory
sweeps become multi-panel training-dynamics figures (one line per run,
legend per rollout count) and lemma-check tables become analytic-vs-Monte-
Carlo decay plots.  Nothing is aggregated or recomputed — every plotted
number exists verbatim in the input file — and this package never imports
the producer, only its documented file formats.
"""

from .reader import (
    DECAY_COLUMNS,
    EmptyInputError,
    PlotkitError,
    SchemaError,
    Table,
    TRAJECTORY_COLUMNS,
    read_table,
)
from .render import (
    PlotSpec,
    TRAJECTORY_METRICS,
    build_decay_figure,
    build_trajectory_figure,
    render_decay,
    render_trajectories,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "PlotkitError",
    "SchemaError",
    "EmptyInputError",
    "Table",
    "read_table",
    "TRAJECTORY_COLUMNS",
    "DECAY_COLUMNS",
    "PlotSpec",
    "TRAJECTORY_METRICS",
    "build_trajectory_figure",
    "build_decay_figure",
    "render_trajectories",
    "render_decay",
]
