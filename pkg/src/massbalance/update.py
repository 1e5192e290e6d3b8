"""One-step mass-balance analysis of a policy-gradient update.

Given a labeled distribution, a rollout batch, per-label rewards and a step
size, this module answers: where does the correct-token probability mass go
after exactly one surrogate-loss gradient step?

Three independent routes to the same number are kept deliberately separate:

* ``delta_q_closed_form`` — the moment-based closed form (three named terms:
  the two in-batch contributions and the unsampled coupling);
* ``logit_step`` + ``first_order_delta_p`` — push the logit perturbation
  through the softmax Jacobian and sum the per-token first-order changes;
* ``exact_resoftmax_delta_q`` — re-normalize the perturbed logits exactly,
  which differs from both of the above at second order in the step size.

For the +1/-1 reward scheme the aggregate change additionally splits into the
sampled-correct share and the unsampled-correct share
(``delta_p_decomposition``), and two qualitative checks are available: the
exact sign test (``positivity_condition``) and a cheaper sufficient test
(``cauchy_schwarz_sufficient``).  ``margin`` is the step-size-free quantity
the adaptive rollout controller thresholds on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dist import (
    LabeledDistribution,
    MassStats,
    RewardScheme,
    RolloutBatch,
    compute_mass_stats,
    softmax,
)
from .errors import InvalidInputError, UnsupportedRewardError

__all__ = [
    "ClosedFormTerms",
    "PositivityOutcome",
    "PositivityScenario",
    "PositivityReport",
    "UpdateReport",
    "logit_step",
    "first_order_delta_p",
    "delta_q_closed_form",
    "delta_p_decomposition",
    "exact_resoftmax_delta_q",
    "positivity_condition",
    "cauchy_schwarz_sufficient",
    "margin",
    "one_step_report",
]

# Below this magnitude, equality comparisons switch from relative to absolute.
NEAR_ZERO_ABS = 1e-14


def _check_eta(eta: float) -> float:
    e = float(eta)
    if not (np.isfinite(e) and e > 0.0):
        raise InvalidInputError(f"eta must be finite and > 0, got {eta!r}")
    return e


def _check_n(n: int) -> int:
    ni = int(n)
    if ni != n or ni < 1:
        raise InvalidInputError(f"n must be a positive integer, got {n!r}")
    return ni


def logit_step(
    dist: LabeledDistribution,
    batch: RolloutBatch,
    rewards: RewardScheme,
    eta: float,
) -> np.ndarray:
    """Logit perturbation of one gradient step on the reward-weighted surrogate.

    Each token moves by ``(eta / n) * p_j * (R_j - s_r)`` where ``R_j`` is the
    label reward on sampled tokens and zero on unsampled ones, and ``s_r`` is
    the probability-weighted reward over the sampled sets.  The perturbation
    lives in temperature-scaled logit space.  An empty batch moves nothing.
    """
    e = _check_eta(eta)
    stats = compute_mass_stats(dist, batch, rewards)  # also validates the pairing
    if batch.is_empty:
        return np.zeros(dist.vocab_size)
    p = dist.probs
    r = np.zeros(dist.vocab_size)
    r[batch.sampled_correct] = rewards.r_correct
    r[batch.sampled_incorrect] = rewards.r_wrong
    return (e / batch.draw_count) * p * (r - stats.s_r)


def first_order_delta_p(dist: LabeledDistribution, delta_z: np.ndarray) -> np.ndarray:
    """First-order probability response to a logit perturbation.

    This is the softmax Jacobian applied to ``delta_z``:
    ``dp_i = p_i * (dz_i - sum_j p_j dz_j)``.  The result sums to zero up to
    roundoff (mass is only moved, never created).
    """
    dz = np.asarray(delta_z, dtype=np.float64)
    if dz.shape != (dist.vocab_size,):
        raise InvalidInputError(
            f"delta_z shape {dz.shape} does not match vocab size {dist.vocab_size}"
        )
    if not np.all(np.isfinite(dz)):
        raise InvalidInputError("delta_z contains non-finite entries")
    p = dist.probs
    return p * (dz - float(np.sum(p * dz)))


@dataclass(frozen=True)
class ClosedFormTerms:
    """The three additive pieces of the aggregate correct-mass change.

    All three carry the ``eta / n`` scale.  ``total`` is their exact sum.
    Both in-batch terms are provably nonnegative; only the coupling term can
    pull the total negative.
    """

    term_in_batch_correct: float
    term_in_batch_incorrect: float
    term_unsampled_coupling: float

    @property
    def total(self) -> float:
        return (
            self.term_in_batch_correct
            + self.term_in_batch_incorrect
            + self.term_unsampled_coupling
        )


def delta_q_closed_form(
    stats: MassStats, rewards: RewardScheme, eta: float, n: int
) -> ClosedFormTerms:
    """Aggregate first-order change of the correct mass, from moments alone.

    scale * [ (r_c - s_r) * q_neg * a2            <- sampled correct pull up
            + (s_r - r_w) * q_pos * b2            <- sampled incorrect push down
            + s_r * (q_pos*u_neg2 - q_neg*u_pos2) <- unsampled coupling ]
    with scale = eta / n.
    """
    e = _check_eta(eta)
    ni = _check_n(n)
    scale = e / ni
    return ClosedFormTerms(
        term_in_batch_correct=scale * (rewards.r_correct - stats.s_r) * stats.q_neg * stats.a2,
        term_in_batch_incorrect=scale * (stats.s_r - rewards.r_wrong) * stats.q_pos * stats.b2,
        term_unsampled_coupling=scale
        * stats.s_r
        * (stats.q_pos * stats.u_neg2 - stats.q_neg * stats.u_pos2),
    )


def _require_binary(rewards: RewardScheme, what: str) -> None:
    if not rewards.is_binary:
        raise UnsupportedRewardError(
            f"{what} is only defined for the +1/-1 reward scheme, "
            f"got ({rewards.r_correct}, {rewards.r_wrong})"
        )


def delta_p_decomposition(
    dist: LabeledDistribution,
    batch: RolloutBatch,
    rewards: RewardScheme,
    eta: float,
) -> tuple[float, float]:
    """Split the correct-mass change into sampled and unsampled correct shares.

    Only defined for +1/-1 rewards.  Returns ``(delta_p_in, delta_p_out)``;
    their sum equals the closed-form total exactly (same moments, rearranged).
    """
    _require_binary(rewards, "delta_p_decomposition")
    e = _check_eta(eta)
    stats = compute_mass_stats(dist, batch, rewards)
    if batch.is_empty:
        return 0.0, 0.0
    scale = e / batch.draw_count
    s = stats.s_r
    delta_in = scale * (
        (1.0 - s) * (1.0 - stats.p_pos) * stats.a2
        + (1.0 + s) * stats.p_pos * stats.b2
        + s * stats.p_pos * stats.u2
    )
    delta_out = scale * (
        -s * stats.u_pos2
        - (1.0 - s) * stats.p_pos_out * stats.a2
        + (1.0 + s) * stats.p_pos_out * stats.b2
        + s * stats.p_pos_out * stats.u2
    )
    return float(delta_in), float(delta_out)


def exact_resoftmax_delta_q(dist: LabeledDistribution, delta_z: np.ndarray) -> float:
    """Exact correct-mass change after re-normalizing the perturbed logits.

    Applies ``delta_z`` in temperature-scaled logit space and re-softmaxes;
    no linearization.  The gap to the closed form is O(|delta_z|^2).
    """
    dz = np.asarray(delta_z, dtype=np.float64)
    if dz.shape != (dist.vocab_size,):
        raise InvalidInputError(
            f"delta_z shape {dz.shape} does not match vocab size {dist.vocab_size}"
        )
    if not np.all(np.isfinite(dz)):
        raise InvalidInputError("delta_z contains non-finite entries")
    mask = dist.correct_mask
    before = dist.probs
    after = softmax(dist.effective_logits + dz, 1.0)
    return float(np.sum(after[mask]) - np.sum(before[mask]))


class PositivityOutcome(str, enum.Enum):
    POSITIVE = "positive"
    BOUNDARY = "boundary"
    NEGATIVE = "negative"


class PositivityScenario(str, enum.Enum):
    FULLY_SAMPLED = "fully_sampled"
    BALANCED = "balanced"
    REWARD_POSITIVE = "reward_positive"
    REWARD_NEGATIVE = "reward_negative"


_CLAUSES = {
    PositivityScenario.FULLY_SAMPLED: "no unsampled coupling; in-batch terms decide alone",
    PositivityScenario.BALANCED: "weighted reward zero; coupling vanishes",
    PositivityScenario.REWARD_POSITIVE: "coupling helps iff q_pos*u_neg2 >= q_neg*u_pos2",
    PositivityScenario.REWARD_NEGATIVE: "coupling helps iff q_neg*u_pos2 >= q_pos*u_neg2",
}


@dataclass(frozen=True)
class PositivityReport:
    """Exact sign test for the aggregate correct-mass change.

    ``condition_lhs`` are the (nonnegative) in-batch terms and
    ``condition_rhs`` the coupling threshold, both without the ``eta/n``
    scale; the change is positive iff lhs > rhs.  Ties within ``1e-14``
    (absolute, in the scale of the larger side) report ``boundary``.
    """

    is_guaranteed_positive: bool
    condition_lhs: float
    condition_rhs: float
    outcome: PositivityOutcome
    scenario: PositivityScenario
    clause: str


def _classify_scenario(stats: MassStats) -> PositivityScenario:
    if stats.u_pos2 == 0.0 and stats.u_neg2 == 0.0:
        return PositivityScenario.FULLY_SAMPLED
    if abs(stats.s_r) <= NEAR_ZERO_ABS:
        return PositivityScenario.BALANCED
    if stats.s_r > 0.0:
        return PositivityScenario.REWARD_POSITIVE
    return PositivityScenario.REWARD_NEGATIVE


def positivity_condition(stats: MassStats, rewards: RewardScheme) -> PositivityReport:
    """Necessary-and-sufficient sign test, scale-free.

    lhs = (r_c - s_r) q_neg a2 + (s_r - r_w) q_pos b2
    rhs = s_r (q_neg u_pos2 - q_pos u_neg2)

    ``lhs - rhs`` equals the margin, so the verdict always agrees with the
    sign of the closed-form change.
    """
    lhs = (
        (rewards.r_correct - stats.s_r) * stats.q_neg * stats.a2
        + (stats.s_r - rewards.r_wrong) * stats.q_pos * stats.b2
    )
    rhs = stats.s_r * (stats.q_neg * stats.u_pos2 - stats.q_pos * stats.u_neg2)
    gap = lhs - rhs
    tol = NEAR_ZERO_ABS * max(1.0, abs(lhs), abs(rhs))
    if abs(gap) <= tol:
        outcome = PositivityOutcome.BOUNDARY
    elif gap > 0.0:
        outcome = PositivityOutcome.POSITIVE
    else:
        outcome = PositivityOutcome.NEGATIVE
    scenario = _classify_scenario(stats)
    return PositivityReport(
        is_guaranteed_positive=outcome is PositivityOutcome.POSITIVE,
        condition_lhs=float(lhs),
        condition_rhs=float(rhs),
        outcome=outcome,
        scenario=scenario,
        clause=_CLAUSES[scenario],
    )


def cauchy_schwarz_sufficient(stats: MassStats, rewards: RewardScheme) -> bool:
    """Cheap sufficient test for a strictly positive correct-mass change.

    Bounds the unsampled second moments by the squared unsampled first
    moments, so it needs no per-token information beyond the first moments
    and the in-batch second moments.  +1/-1 rewards only.  One-directional:
    ``True`` guarantees a strictly positive change; ``False`` says nothing.
    """
    _require_binary(rewards, "cauchy_schwarz_sufficient")
    s = stats.s_r
    lhs = (1.0 - s) * stats.q_neg * stats.a2 + (1.0 + s) * stats.q_pos * stats.b2
    rhs = abs(s) * (stats.q_neg * stats.p_pos_out**2 + stats.q_pos * stats.p_neg_out**2)
    # strict: at lhs == rhs the true change can sit exactly at zero
    return bool(lhs > rhs)


def margin(stats: MassStats, rewards: RewardScheme) -> float:
    """Scale-free signed margin; equals the closed-form total times n/eta."""
    return float(
        (rewards.r_correct - stats.s_r) * stats.q_neg * stats.a2
        + (stats.s_r - rewards.r_wrong) * stats.q_pos * stats.b2
        + stats.s_r * (stats.q_pos * stats.u_neg2 - stats.q_neg * stats.u_pos2)
    )


@dataclass(frozen=True)
class UpdateReport:
    """Everything the one-step analysis produces, in one record.

    ``delta_p_in`` / ``delta_p_out`` are ``None`` unless the reward scheme is
    +1/-1 (the split is only defined there).  ``delta_q_jacobian`` is the
    independent Jacobian-route value and should agree with
    ``delta_q_closed_form`` to roundoff; ``delta_q_exact`` differs at second
    order in ``eta``.
    """

    stats: MassStats
    rewards: RewardScheme
    eta: float
    n: int
    delta_z: np.ndarray
    delta_p_first_order: np.ndarray
    terms: ClosedFormTerms
    delta_q_closed_form: float
    delta_q_jacobian: float
    delta_q_exact: float
    delta_p_in: Optional[float]
    delta_p_out: Optional[float]
    margin: float
    positivity: PositivityReport
    cauchy_schwarz: Optional[bool]

    def as_dict(self) -> dict:
        """JSON-friendly view (arrays become lists)."""
        return {
            "stats": self.stats.as_dict(),
            "rewards": {"r_correct": self.rewards.r_correct, "r_wrong": self.rewards.r_wrong},
            "eta": self.eta,
            "n": self.n,
            "delta_z": self.delta_z.tolist(),
            "delta_p_first_order": self.delta_p_first_order.tolist(),
            "terms": {
                "in_batch_correct": self.terms.term_in_batch_correct,
                "in_batch_incorrect": self.terms.term_in_batch_incorrect,
                "unsampled_coupling": self.terms.term_unsampled_coupling,
            },
            "delta_q_closed_form": self.delta_q_closed_form,
            "delta_q_jacobian": self.delta_q_jacobian,
            "delta_q_exact": self.delta_q_exact,
            "delta_p_in": self.delta_p_in,
            "delta_p_out": self.delta_p_out,
            "margin": self.margin,
            "positivity": {
                "is_guaranteed_positive": self.positivity.is_guaranteed_positive,
                "condition_lhs": self.positivity.condition_lhs,
                "condition_rhs": self.positivity.condition_rhs,
                "outcome": self.positivity.outcome.value,
                "scenario": self.positivity.scenario.value,
                "clause": self.positivity.clause,
            },
            "cauchy_schwarz": self.cauchy_schwarz,
        }


def one_step_report(
    dist: LabeledDistribution,
    batch: RolloutBatch,
    rewards: RewardScheme,
    eta: float,
) -> UpdateReport:
    """Run every route through the one-step analysis and bundle the results."""
    e = _check_eta(eta)
    stats = compute_mass_stats(dist, batch, rewards)
    dz = logit_step(dist, batch, rewards, e)
    dp = first_order_delta_p(dist, dz)
    mask = dist.correct_mask

    if batch.is_empty:
        terms = ClosedFormTerms(0.0, 0.0, 0.0)
        n_eff = 0
    else:
        n_eff = batch.draw_count
        terms = delta_q_closed_form(stats, rewards, e, n_eff)

    if rewards.is_binary:
        d_in, d_out = delta_p_decomposition(dist, batch, rewards, e)
        cs = cauchy_schwarz_sufficient(stats, rewards)
    else:
        d_in = d_out = None
        cs = None

    return UpdateReport(
        stats=stats,
        rewards=rewards,
        eta=e,
        n=n_eff,
        delta_z=dz,
        delta_p_first_order=dp,
        terms=terms,
        delta_q_closed_form=terms.total,
        delta_q_jacobian=float(np.sum(dp[mask])),
        delta_q_exact=exact_resoftmax_delta_q(dist, dz),
        delta_p_in=d_in,
        delta_p_out=d_out,
        margin=margin(stats, rewards),
        positivity=positivity_condition(stats, rewards),
        cauchy_schwarz=cs,
    )
