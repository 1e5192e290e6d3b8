"""Figure construction and deterministic image output.

Trajectory figures mirror the simulator's three headline metrics: one panel
per metric, step on the x axis, one line per run, colored and legended by
the rollout count.  Decay figures show the analytic unsampled-mass curve
against its Monte Carlo estimates, one color per token probability.

Rendering is deterministic: groups are sorted, style is fixed, and the PNG
writer is stripped of software metadata, so identical inputs give identical
images.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .reader import DECAY_COLUMNS, Table, read_table

TRAJECTORY_METRICS = ("q_pos", "fraction_improved", "worst_drop")
_METRIC_LABELS = {
    "q_pos": "total correct mass",
    "fraction_improved": "fraction of correct tokens improved",
    "worst_drop": "worst single-token drop",
}
_BASE_COLUMNS = ("run_id", "n", "seed", "step")


@dataclass(frozen=True)
class PlotSpec:
    """What to read, what to draw, where to write it."""

    input_path: str
    output_path: str
    metrics: tuple[str, ...] = TRAJECTORY_METRICS
    group_key: str = "n"
    log_x: bool = False
    log_y: bool = False
    dpi: int = 100

    def __post_init__(self):
        if not self.metrics:
            raise ValueError("need at least one metric to plot")


def _group_rows(table: Table, group_key: str) -> dict[tuple[int, str], list[int]]:
    """Row indices per (group value, run id), groups sorted numerically."""
    groups = table.column(group_key)
    run_ids = table.column("run_id")
    out: dict[tuple[int, str], list[int]] = {}
    for i, (g, rid) in enumerate(zip(groups, run_ids)):
        out.setdefault((int(g), rid), []).append(i)
    return dict(sorted(out.items()))


def build_trajectory_figure(spec: PlotSpec) -> plt.Figure:
    """Assemble the metric panels without writing anything to disk."""
    table = read_table(spec.input_path, required=_BASE_COLUMNS + tuple(spec.metrics))
    runs = _group_rows(table, spec.group_key)
    group_values = sorted({g for g, _ in runs})
    colors = {g: plt.cm.tab10(i % 10) for i, g in enumerate(group_values)}

    fig, axes = plt.subplots(
        1, len(spec.metrics), figsize=(4.0 * len(spec.metrics), 3.2), squeeze=False
    )
    steps = table.floats("step")
    for ax, metric in zip(axes[0], spec.metrics):
        values = table.floats(metric)
        seen_groups = set()
        for (g, rid), idx in runs.items():
            label = f"{spec.group_key}={g}" if g not in seen_groups else None
            seen_groups.add(g)
            ax.plot(steps[idx], values[idx], color=colors[g], label=label, linewidth=1.2)
        ax.set_xlabel("step")
        ax.set_ylabel(_METRIC_LABELS.get(metric, metric))
        if spec.log_x:
            ax.set_xscale("log")
        if spec.log_y:
            ax.set_yscale("log")
        ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def render_trajectories(spec: PlotSpec) -> str:
    """Render the trajectory figure; returns the written path."""
    fig = build_trajectory_figure(spec)
    _save(fig, spec)
    return spec.output_path


def build_decay_figure(spec: PlotSpec) -> plt.Figure:
    """Analytic unsampled-mass curves vs their Monte Carlo estimates."""
    table = read_table(spec.input_path, required=DECAY_COLUMNS[:4])
    p_vals = table.column("p")
    n_vals = table.floats("n")
    analytic = table.floats("analytic")
    estimate = table.floats("estimate")
    distinct_p = sorted(set(p_vals), key=float)
    colors = {p: plt.cm.tab10(i % 10) for i, p in enumerate(distinct_p)}

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for p in distinct_p:
        idx = [i for i, v in enumerate(p_vals) if v == p]
        order = np.argsort(n_vals[idx])
        rows = np.array(idx)[order]
        ax.plot(n_vals[rows], analytic[rows], color=colors[p], label=f"p={float(p):g}")
        ax.plot(n_vals[rows], estimate[rows], "o", color=colors[p], markersize=4)
    ax.set_xlabel("rollout count")
    ax.set_ylabel("expected unsampled mass")
    if spec.log_x:
        ax.set_xscale("log")
    if spec.log_y:
        ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def render_decay(spec: PlotSpec) -> str:
    """Render the decay figure; returns the written path."""
    fig = build_decay_figure(spec)
    _save(fig, spec)
    return spec.output_path


def _save(fig: plt.Figure, spec: PlotSpec) -> None:
    kwargs = {"dpi": spec.dpi}
    if spec.output_path.endswith(".png"):
        kwargs["metadata"] = {"Software": None}  # no version strings in the bytes
    fig.savefig(spec.output_path, **kwargs)
    plt.close(fig)
