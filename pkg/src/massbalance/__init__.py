"""Probability-mass bookkeeping for one-step policy updates over softmax vocabularies.

The package answers, exactly and cheaply, what a single reward-weighted
gradient step does to the total probability of the correct tokens: where the
mass comes from, when the aggregate change is provably positive, how the
cost of *unsampled* tokens decays with rollout width, and how to pick a
rollout count adaptively.  A small simulator reproduces the multi-step
picture that the one-step algebra predicts.

Quick tour::

    >>> import numpy as np
    >>> from massbalance import (
    ...     LabeledDistribution, RolloutBatch, RewardScheme, one_step_report,
    ... )
    >>> dist = LabeledDistribution(np.zeros(4), np.array([True, True, False, False]))
    >>> batch = RolloutBatch(np.array([0]), np.array([2]), 2)
    >>> report = one_step_report(dist, batch, RewardScheme(), eta=0.1)
    >>> round(report.delta_q_closed_form, 6)
    0.003125
    >>> report.positivity.is_guaranteed_positive
    True

See ``demos/`` in the repository for narrative walkthroughs of each
capability, and the ``massbalance`` command-line tool for file-driven use.
"""

from .adaptive import (
    ControllerConfig,
    ControllerStep,
    ControllerTrace,
    estimate_margin,
    run_controller,
)
from .dist import (
    LabeledDistribution,
    MassStats,
    RewardScheme,
    RolloutBatch,
    compute_mass_stats,
    expected_pass_at_k,
    pass_at_k,
    softmax,
)
from .errors import (
    InvalidBatchError,
    InvalidInputError,
    MassBalanceError,
    ScenarioError,
    SimulationDivergedError,
    UnsupportedRewardError,
)
from .sampling import (
    DecayCurve,
    decay_curve,
    expected_total_unsampled,
    expected_unsampled_second_moment,
    sample_batch,
)
from .scenario import (
    BuiltScenario,
    ScenarioFile,
    parse_scenario,
    serialize_scenario,
)
from .simulate import (
    AdamParams,
    AdamState,
    SimulationConfig,
    TrajectoryMetrics,
    adaptive_moment_step,
    desk_preset,
    paper_preset,
    run_simulation,
    sweep_rollout_sizes,
)
from .update import (
    ClosedFormTerms,
    PositivityOutcome,
    PositivityReport,
    PositivityScenario,
    UpdateReport,
    cauchy_schwarz_sufficient,
    delta_p_decomposition,
    delta_q_closed_form,
    exact_resoftmax_delta_q,
    first_order_delta_p,
    logit_step,
    margin,
    one_step_report,
    positivity_condition,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # distributions & stats
    "LabeledDistribution",
    "RewardScheme",
    "RolloutBatch",
    "MassStats",
    "softmax",
    "compute_mass_stats",
    "pass_at_k",
    "expected_pass_at_k",
    # one-step update analysis
    "ClosedFormTerms",
    "UpdateReport",
    "PositivityOutcome",
    "PositivityScenario",
    "PositivityReport",
    "logit_step",
    "first_order_delta_p",
    "delta_q_closed_form",
    "delta_p_decomposition",
    "exact_resoftmax_delta_q",
    "positivity_condition",
    "cauchy_schwarz_sufficient",
    "margin",
    "one_step_report",
    # sampling theory
    "DecayCurve",
    "decay_curve",
    "expected_total_unsampled",
    "expected_unsampled_second_moment",
    "sample_batch",
    # scenario documents
    "ScenarioFile",
    "BuiltScenario",
    "parse_scenario",
    "serialize_scenario",
    # adaptive control
    "ControllerConfig",
    "ControllerStep",
    "ControllerTrace",
    "estimate_margin",
    "run_controller",
    # simulator
    "AdamParams",
    "AdamState",
    "SimulationConfig",
    "TrajectoryMetrics",
    "adaptive_moment_step",
    "run_simulation",
    "sweep_rollout_sizes",
    "desk_preset",
    "paper_preset",
    # errors
    "MassBalanceError",
    "InvalidInputError",
    "InvalidBatchError",
    "UnsupportedRewardError",
    "ScenarioError",
    "SimulationDivergedError",
]
