"""Adaptive rollout-count control driven by the estimated update margin.

The margin is the scale-free signed version of the one-step correct-mass
change; a batch with a positive margin improves the correct mass, and the
expected adverse coupling shrinks as the rollout count grows.  The controller
estimates the margin at the current rollout count from a pilot set of sampled
batches and walks the count geometrically:

* estimate below the target        -> grow (x growth_factor, capped at n_max)
* estimate >= shrink multiple      -> shrink (/ growth_factor, floored at n_initial)
* otherwise                        -> hold; done

A shrink the floor clamps to no change is recorded once; if the next estimate
still calls for shrinking an already-floored count, the controller holds
instead of spinning (the margin is comfortably above target, so this is a
success).  Non-convergence (hitting n_max with the target unmet, or running
out of iterations) is reported on the trace rather than raised.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dist import LabeledDistribution, RewardScheme, compute_mass_stats
from .errors import InvalidInputError
from .sampling import sample_batch
from .seeding import STREAM_CONTROLLER, STREAM_PILOT, fold_seed, seed_stream
from .update import margin

__all__ = [
    "ControllerConfig",
    "ControllerStep",
    "ControllerTrace",
    "estimate_margin",
    "run_controller",
]


@dataclass(frozen=True)
class ControllerConfig:
    """Knobs for :func:`run_controller`; defaults suit small desk scenarios."""

    m_target: float
    n_initial: int = 4
    n_max: int = 65536
    growth_factor: float = 2.0
    shrink_threshold: float = 4.0
    pilot_sample_size: int = 16
    max_iterations: int = 32

    def __post_init__(self):
        if not (np.isfinite(self.m_target) and self.m_target > 0.0):
            raise InvalidInputError(f"m_target must be finite and > 0, got {self.m_target!r}")
        if not 1 <= self.n_initial <= self.n_max:
            raise InvalidInputError(
                f"need 1 <= n_initial <= n_max, got ({self.n_initial}, {self.n_max})"
            )
        if not self.growth_factor > 1.0:
            raise InvalidInputError(f"growth_factor must exceed 1, got {self.growth_factor!r}")
        if not self.shrink_threshold > 1.0:
            raise InvalidInputError(
                f"shrink_threshold must exceed 1, got {self.shrink_threshold!r}"
            )
        if self.pilot_sample_size < 1:
            raise InvalidInputError("pilot_sample_size must be >= 1")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")


def estimate_margin(
    dist: LabeledDistribution,
    rewards: RewardScheme,
    n: int,
    pilot_sample_size: int,
    seed: int,
) -> float:
    """Mean margin over ``pilot_sample_size`` sampled batches of ``n`` draws.

    Each pilot draws from its own derived stream, so pilots are independent
    and the estimate is reproducible (and order-insensitive under a parallel
    evaluation).  ``pilot_sample_size = 1`` is the single-batch mode.
    """
    if int(n) < 1:
        raise InvalidInputError(f"n must be >= 1, got {n!r}")
    if int(pilot_sample_size) < 1:
        raise InvalidInputError("pilot_sample_size must be >= 1")
    values = np.empty(int(pilot_sample_size))
    for i in range(int(pilot_sample_size)):
        rng = seed_stream(STREAM_PILOT, seed, n, i)
        batch = sample_batch(dist, int(n), rng)
        values[i] = margin(compute_mass_stats(dist, batch, rewards), rewards)
    return float(np.mean(values))


@dataclass(frozen=True)
class ControllerStep:
    """One controller iteration: the count probed, its estimate, the decision."""

    n: int
    estimated_margin: float
    action: str  # "grow" | "shrink" | "hold"


@dataclass(frozen=True)
class ControllerTrace:
    """Full decision history plus the terminal state."""

    steps: tuple[ControllerStep, ...]
    final_n: int
    final_margin: float
    converged: bool
    stop_reason: str  # "target-band" | "n-max" | "max-iterations"

    @property
    def n_sequence(self) -> list[int]:
        return [s.n for s in self.steps]

    def as_dict(self) -> dict:
        return {
            "steps": [
                {"n": s.n, "estimated_margin": s.estimated_margin, "action": s.action}
                for s in self.steps
            ],
            "final_n": self.final_n,
            "final_margin": self.final_margin,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
        }


def _grow(n: int, cfg: ControllerConfig) -> int:
    return min(cfg.n_max, max(n + 1, int(round(n * cfg.growth_factor))))


def _shrink(n: int, cfg: ControllerConfig) -> int:
    return max(cfg.n_initial, min(n - 1, int(round(n / cfg.growth_factor))))


def run_controller(
    dist: LabeledDistribution,
    rewards: RewardScheme,
    config: ControllerConfig,
    seed: int,
) -> ControllerTrace:
    """Walk the rollout count until the estimated margin lands in the target band.

    Success requires the final estimate to be at least ``m_target``; the trace
    never claims convergence below it.
    """
    n = config.n_initial
    steps: list[ControllerStep] = []
    prior_shrink_clamped = False

    for iteration in range(config.max_iterations):
        est = estimate_margin(
            dist,
            rewards,
            n,
            config.pilot_sample_size,
            fold_seed(STREAM_CONTROLLER, seed, iteration),
        )
        if est < config.m_target:
            if n >= config.n_max:
                steps.append(ControllerStep(n, est, "hold"))
                return ControllerTrace(tuple(steps), n, est, False, "n-max")
            steps.append(ControllerStep(n, est, "grow"))
            n = _grow(n, config)
            prior_shrink_clamped = False
            continue
        if est >= config.shrink_threshold * config.m_target:
            shrunk = _shrink(n, config)
            if shrunk == n and prior_shrink_clamped:
                # second consecutive futile shrink: margin is safely above
                # target and the floor blocks further savings -> success
                steps.append(ControllerStep(n, est, "hold"))
                return ControllerTrace(tuple(steps), n, est, True, "target-band")
            steps.append(ControllerStep(n, est, "shrink"))
            prior_shrink_clamped = shrunk == n
            n = shrunk
            continue
        steps.append(ControllerStep(n, est, "hold"))
        return ControllerTrace(tuple(steps), n, est, True, "target-band")

    last = steps[-1]
    return ControllerTrace(tuple(steps), last.n, last.estimated_margin, False, "max-iterations")
