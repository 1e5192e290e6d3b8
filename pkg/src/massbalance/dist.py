"""Labeled token distributions and the mass statistics a one-step update needs.

The objects here are deliberately dumb containers plus a handful of pure
functions.  A :class:`LabeledDistribution` is a logit vector with a boolean
correctness label per token; probabilities are always *derived* from the
logits (never stored) so there is a single source of truth.  A
:class:`RolloutBatch` records which tokens a sampler actually drew, split by
label, with draw multiplicities kept around for the surrogate loss; all the
closed-form theory only consumes set membership.

:func:`compute_mass_stats` reduces a (distribution, batch) pair to the first
and second probability moments over the sampled-correct / sampled-incorrect /
unsampled partitions.  Every downstream formula is a function of these
moments, so this is the one place vocab-sized reductions happen.  Sums over
the vocabulary use ``np.sum``, whose pairwise reduction keeps error growth
logarithmic in the vocab size (we care up to V = 128 000).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidBatchError, InvalidInputError

__all__ = [
    "LabeledDistribution",
    "RewardScheme",
    "RolloutBatch",
    "MassStats",
    "softmax",
    "compute_mass_stats",
    "pass_at_k",
    "expected_pass_at_k",
]


def softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Stable softmax of ``logits / temperature``.

    Subtracts the max before exponentiating.  Raises if any input is
    non-finite, the temperature is not a positive finite number, or the
    spread of logits is so extreme that some probability underflows to
    exactly zero (every token must keep nonzero mass).
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise InvalidInputError(f"logits must be a 1-d vector of length >= 2, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits contain non-finite entries")
    if not (np.isfinite(temperature) and temperature > 0.0):
        raise InvalidInputError(f"temperature must be finite and > 0, got {temperature!r}")
    scaled = z / float(temperature)
    with np.errstate(over="ignore", under="ignore"):
        # the shift can overflow to -inf for astronomically spread logits;
        # exp maps that to 0, which the underflow guard below rejects
        shifted = scaled - scaled.max()
        expz = np.exp(shifted)
    p = expz / np.sum(expz)
    if np.any(p == 0.0):
        raise InvalidInputError(
            "softmax underflow: logit spread too large for float64; some tokens got zero mass"
        )
    return p


@dataclass(frozen=True)
class LabeledDistribution:
    """A softmax token distribution with a correct/incorrect label per token.

    ``probs`` is recomputed from the logits on demand.  Both label classes
    must be non-empty: the theory is about moving mass between them.
    """

    logits: np.ndarray
    correct_mask: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        z = np.asarray(self.logits, dtype=np.float64)
        mask = np.asarray(self.correct_mask, dtype=bool)
        if mask.shape != z.shape:
            raise InvalidInputError(
                f"correct_mask shape {mask.shape} does not match logits shape {z.shape}"
            )
        # validate eagerly (softmax raises on bad logits/temperature)
        p = softmax(z, self.temperature)
        if not mask.any() or mask.all():
            raise InvalidInputError("need at least one correct and one incorrect token")
        total = float(np.sum(p))
        if not (1.0 - 1e-12 <= total <= 1.0 + 1e-12):
            raise InvalidInputError(f"probabilities sum to {total!r}, outside 1 +/- 1e-12")
        z.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "logits", z)
        object.__setattr__(self, "correct_mask", mask)
        object.__setattr__(self, "temperature", float(self.temperature))

    @property
    def vocab_size(self) -> int:
        return int(self.logits.size)

    @property
    def probs(self) -> np.ndarray:
        """Token probabilities, derived fresh from the logits."""
        return softmax(self.logits, self.temperature)

    @property
    def effective_logits(self) -> np.ndarray:
        """Temperature-scaled logits; one-step perturbations live in this space."""
        return self.logits / self.temperature

    def correct_indices(self) -> np.ndarray:
        return np.nonzero(self.correct_mask)[0]

    def incorrect_indices(self) -> np.ndarray:
        return np.nonzero(~self.correct_mask)[0]


@dataclass(frozen=True)
class RewardScheme:
    """Per-label rewards: ``r_correct`` for correct tokens, ``r_wrong`` otherwise.

    Unsampled tokens implicitly receive zero.  The defaults are the +1/-1
    scheme; several operations are only defined for it (they raise
    ``UnsupportedRewardError`` for anything else).
    """

    r_correct: float = 1.0
    r_wrong: float = -1.0

    def __post_init__(self):
        rc, rw = float(self.r_correct), float(self.r_wrong)
        if not (np.isfinite(rc) and np.isfinite(rw)):
            raise InvalidInputError("rewards must be finite")
        if not (rc >= 0.0 >= rw):
            raise InvalidInputError(f"need r_correct >= 0 >= r_wrong, got ({rc}, {rw})")
        if not rc > rw:
            raise InvalidInputError("need r_correct > r_wrong")
        object.__setattr__(self, "r_correct", rc)
        object.__setattr__(self, "r_wrong", rw)

    @property
    def is_binary(self) -> bool:
        """True for the canonical +1/-1 scheme."""
        return self.r_correct == 1.0 and self.r_wrong == -1.0


def _as_index_array(indices: Iterable[int], name: str) -> np.ndarray:
    arr = np.asarray(sorted(int(i) for i in indices), dtype=np.int64)
    if arr.size and arr[0] < 0:
        raise InvalidBatchError(f"{name} contains negative indices: {arr[arr < 0].tolist()}")
    if np.unique(arr).size != arr.size:
        raise InvalidBatchError(f"{name} contains duplicate indices")
    return arr


@dataclass(frozen=True)
class RolloutBatch:
    """The outcome of drawing ``draw_count`` i.i.d. tokens from a distribution.

    ``sampled_correct`` / ``sampled_incorrect`` are the *distinct* drawn
    indices split by label; ``draw_multiplicities`` maps each drawn index to
    how many of the draws hit it.  ``draw_count == 0`` is the empty batch.
    """

    sampled_correct: np.ndarray
    sampled_incorrect: np.ndarray
    draw_count: int
    draw_multiplicities: Mapping[int, int] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        a = _as_index_array(np.asarray(self.sampled_correct).ravel(), "sampled_correct")
        b = _as_index_array(np.asarray(self.sampled_incorrect).ravel(), "sampled_incorrect")
        if np.intersect1d(a, b).size:
            raise InvalidBatchError(
                f"index sets overlap: {np.intersect1d(a, b).tolist()}"
            )
        n = int(self.draw_count)
        if n < 0:
            raise InvalidBatchError(f"draw_count must be >= 0, got {n}")
        mult = self.draw_multiplicities
        if mult is None:
            mult = {int(i): 1 for i in np.concatenate([a, b])}
        else:
            mult = {int(k): int(v) for k, v in dict(mult).items()}
        members = set(a.tolist()) | set(b.tolist())
        if set(mult) != members:
            raise InvalidBatchError(
                "draw_multiplicities keys must equal the union of the index sets"
            )
        if any(c < 1 for c in mult.values()):
            raise InvalidBatchError("every drawn index needs multiplicity >= 1")
        if sum(mult.values()) != n:
            raise InvalidBatchError(
                f"multiplicities sum to {sum(mult.values())}, draw_count is {n}"
            )
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "sampled_correct", a)
        object.__setattr__(self, "sampled_incorrect", b)
        object.__setattr__(self, "draw_count", n)
        object.__setattr__(self, "draw_multiplicities", mult)

    @classmethod
    def empty(cls) -> "RolloutBatch":
        return cls(np.empty(0, np.int64), np.empty(0, np.int64), 0, {})

    @classmethod
    def from_draws(cls, draws: np.ndarray, correct_mask: np.ndarray) -> "RolloutBatch":
        """Collapse a raw draw sequence into a batch using the given labels."""
        d = np.asarray(draws, dtype=np.int64).ravel()
        mask = np.asarray(correct_mask, dtype=bool)
        if d.size and (d.min() < 0 or d.max() >= mask.size):
            raise InvalidBatchError("draws contain indices outside the vocabulary")
        tokens, counts = np.unique(d, return_counts=True)
        is_corr = mask[tokens] if tokens.size else np.empty(0, bool)
        return cls(
            tokens[is_corr],
            tokens[~is_corr],
            int(d.size),
            {int(t): int(c) for t, c in zip(tokens, counts)},
        )

    @property
    def is_empty(self) -> bool:
        return self.draw_count == 0

    def sampled_indices(self) -> np.ndarray:
        return np.concatenate([self.sampled_correct, self.sampled_incorrect])


@dataclass(frozen=True)
class MassStats:
    """First/second probability moments over the batch-induced partition.

    First moments: ``p_pos``/``p_neg`` over sampled correct/incorrect tokens,
    ``p_out`` over everything unsampled (split as ``p_pos_out``/``p_neg_out``),
    ``q_pos``/``q_neg`` over all correct/incorrect tokens.  Second moments
    (sums of squared probabilities): ``a2`` sampled correct, ``b2`` sampled
    incorrect, ``u2`` unsampled (split ``u_pos2``/``u_neg2``), and ``p2`` the
    whole-vocabulary diagnostic.  ``s_r`` is the probability-weighted reward
    over the sampled sets.
    """

    p_pos: float
    p_neg: float
    p_out: float
    p_pos_out: float
    p_neg_out: float
    q_pos: float
    q_neg: float
    a2: float
    b2: float
    u2: float
    u_pos2: float
    u_neg2: float
    p2: float
    s_r: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _validate_batch_against(dist: LabeledDistribution, batch: RolloutBatch) -> None:
    v = dist.vocab_size
    for name, idx, want in (
        ("sampled_correct", batch.sampled_correct, True),
        ("sampled_incorrect", batch.sampled_incorrect, False),
    ):
        if idx.size == 0:
            continue
        if idx.max() >= v:
            bad = idx[idx >= v].tolist()
            raise InvalidBatchError(f"{name} indices out of range for V={v}: {bad}")
        labels = dist.correct_mask[idx]
        if want and not labels.all():
            raise InvalidBatchError(
                f"sampled_correct contains incorrect-labeled tokens: {idx[~labels].tolist()}"
            )
        if not want and labels.any():
            raise InvalidBatchError(
                f"sampled_incorrect contains correct-labeled tokens: {idx[labels].tolist()}"
            )


def compute_mass_stats(
    dist: LabeledDistribution, batch: RolloutBatch, rewards: RewardScheme
) -> MassStats:
    """Reduce (distribution, batch, rewards) to the moments the theory consumes."""
    _validate_batch_against(dist, batch)
    p = dist.probs
    mask = dist.correct_mask
    p_sq = p * p

    in_a = np.zeros(dist.vocab_size, dtype=bool)
    in_a[batch.sampled_correct] = True
    in_b = np.zeros(dist.vocab_size, dtype=bool)
    in_b[batch.sampled_incorrect] = True
    unsampled = ~(in_a | in_b)

    p_pos = float(np.sum(p[in_a]))
    p_neg = float(np.sum(p[in_b]))
    q_pos = float(np.sum(p[mask]))
    q_neg = float(np.sum(p[~mask]))
    p_pos_out = float(np.sum(p[unsampled & mask]))
    p_neg_out = float(np.sum(p[unsampled & ~mask]))
    u_pos2 = float(np.sum(p_sq[unsampled & mask]))
    u_neg2 = float(np.sum(p_sq[unsampled & ~mask]))

    return MassStats(
        p_pos=p_pos,
        p_neg=p_neg,
        p_out=p_pos_out + p_neg_out,
        p_pos_out=p_pos_out,
        p_neg_out=p_neg_out,
        q_pos=q_pos,
        q_neg=q_neg,
        a2=float(np.sum(p_sq[in_a])),
        b2=float(np.sum(p_sq[in_b])),
        u2=u_pos2 + u_neg2,
        u_pos2=u_pos2,
        u_neg2=u_neg2,
        p2=float(np.sum(p_sq)),
        s_r=rewards.r_correct * p_pos + rewards.r_wrong * p_neg,
    )


def pass_at_k(q_pos: float, k: int) -> float:
    """Chance that at least one of ``k`` independent draws lands on a correct token."""
    q = float(q_pos)
    if not (0.0 <= q <= 1.0):
        raise InvalidInputError(f"q_pos must lie in [0, 1], got {q!r}")
    ki = int(k)
    if ki != k or ki < 1:
        raise InvalidInputError(f"k must be a positive integer, got {k!r}")
    return 1.0 - (1.0 - q) ** ki


def expected_pass_at_k(q_values: Sequence[float], k: int) -> float:
    """Mean pass@k over a population of per-task correct masses."""
    qs = np.asarray(list(q_values), dtype=np.float64)
    if qs.size == 0:
        raise InvalidInputError("need at least one q_pos value")
    if np.any((qs < 0.0) | (qs > 1.0)) or not np.all(np.isfinite(qs)):
        raise InvalidInputError("q_pos values must lie in [0, 1]")
    ki = int(k)
    if ki != k or ki < 1:
        raise InvalidInputError(f"k must be a positive integer, got {k!r}")
    return float(1.0 - np.mean((1.0 - qs) ** ki))
