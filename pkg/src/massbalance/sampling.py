"""What i.i.d. rollout sampling leaves behind, and how fast it decays.

A token with probability ``p`` is missed by all ``n`` draws with probability
``(1 - p)**n``, so its expected contribution to the unsampled second moment is
``p**2 * (1 - p)**n``.  Summed over a label class this is exactly the expected
coupling mass the one-step closed form charges against unsampled tokens, and
it decays monotonically as the rollout count grows — the quantitative reason
wider sampling protects correct tokens.

Evaluation happens in log space, ``exp(2*log(p) + n*log1p(-p))``, so the curve
stays accurate far below the double-precision underflow cliff of the direct
product; results that underflow anyway clamp to exactly zero.

Also home to :func:`sample_batch`, the one place a RolloutBatch is drawn from
a distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dist import LabeledDistribution, RolloutBatch
from .errors import InvalidInputError

__all__ = [
    "expected_unsampled_second_moment",
    "expected_total_unsampled",
    "DecayCurve",
    "decay_curve",
    "sample_batch",
]


def _check_rollout_count(n: int) -> int:
    ni = int(n)
    if ni != n or ni < 0:
        raise InvalidInputError(f"rollout count must be a nonnegative integer, got {n!r}")
    return ni


def expected_unsampled_second_moment(p, n: int):
    """``p**2 * (1 - p)**n`` evaluated in log space; scalar or elementwise.

    ``p`` must lie in [0, 1].  Endpoints are exact: 0 at ``p == 0``, and at
    ``p == 1`` the token is always drawn for ``n >= 1`` (0) but never for
    ``n == 0`` (1).  Underflow clamps to 0.
    """
    ni = _check_rollout_count(n)
    arr = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any((arr < 0.0) | (arr > 1.0)):
        raise InvalidInputError("p must lie in [0, 1]")
    if ni == 0:
        out = arr * arr
        return float(out) if np.isscalar(p) or arr.ndim == 0 else out

    interior = (arr > 0.0) & (arr < 1.0)
    out = np.zeros_like(arr)
    with np.errstate(under="ignore"):
        pi = arr[interior]
        out[interior] = np.exp(2.0 * np.log(pi) + ni * np.log1p(-pi))
    # p == 0 and p == 1 rows stay exactly 0 for n >= 1
    return float(out) if np.isscalar(p) or arr.ndim == 0 else out


def expected_total_unsampled(dist: LabeledDistribution, n: int) -> tuple[float, float]:
    """Expected unsampled second moments summed per label class.

    Returns ``(correct_total, incorrect_total)`` for a batch of ``n`` i.i.d.
    draws from the distribution.
    """
    p = dist.probs
    contrib = expected_unsampled_second_moment(p, n)
    mask = dist.correct_mask
    return float(np.sum(contrib[mask])), float(np.sum(contrib[~mask]))


@dataclass(frozen=True)
class DecayCurve:
    """Per-class expected unsampled second moments along a rollout-count grid."""

    n_values: np.ndarray
    correct_totals: np.ndarray
    incorrect_totals: np.ndarray

    def __post_init__(self):
        for name in ("n_values", "correct_totals", "incorrect_totals"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.n_values.size == self.correct_totals.size == self.incorrect_totals.size):
            raise InvalidInputError("decay curve arrays must share a length")


def decay_curve(dist: LabeledDistribution, n_values: Sequence[int]) -> DecayCurve:
    """Evaluate :func:`expected_total_unsampled` along an increasing n grid."""
    ns = [int(n) for n in n_values]
    if len(ns) == 0:
        raise InvalidInputError("need at least one rollout count")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise InvalidInputError(f"rollout counts must be strictly increasing, got {ns}")
    pairs = [expected_total_unsampled(dist, n) for n in ns]
    return DecayCurve(
        n_values=np.asarray(ns, dtype=np.int64),
        correct_totals=np.asarray([c for c, _ in pairs]),
        incorrect_totals=np.asarray([w for _, w in pairs]),
    )


def sample_batch(
    dist: LabeledDistribution, n: int, rng: np.random.Generator
) -> RolloutBatch:
    """Draw ``n`` i.i.d. tokens (categorical, with replacement) into a batch."""
    ni = _check_rollout_count(n)
    if ni == 0:
        return RolloutBatch.empty()
    draws = rng.choice(dist.vocab_size, size=ni, replace=True, p=dist.probs)
    return RolloutBatch.from_draws(draws, dist.correct_mask)
