"""
Walking the rollout count until the expected gain clears a target
=================================================================

An adverse setup: one correct token holds most of the correct mass but
small pilot batches rarely draw it.  With a realistic (tiny) pilot budget
the margin estimate at small counts is noisy enough to come out negative;
the controller doubles the count until the estimate clears the target,
then stops.
"""

import numpy as np

from massbalance import (
    ControllerConfig,
    LabeledDistribution,
    RewardScheme,
    estimate_margin,
    run_controller,
)

# 32 tokens, 5 correct; the first correct token dominates its class.
logits = np.zeros(32)
logits[0] = 2.2
mask = np.zeros(32, dtype=bool)
mask[:5] = True
dist = LabeledDistribution(logits, mask)
rewards = RewardScheme(r_correct=1.0, r_wrong=0.0)

# First, the underlying trend: with plenty of pilots the averaged margin
# is small at narrow counts and grows as the dominant token gets covered.
print("pilot-averaged margin by rollout count")
for n in (1, 2, 4, 8, 16, 32):
    est = estimate_margin(dist, rewards, n, pilot_sample_size=256, seed=0)
    print(f"  n={n:<3} margin={est:+.5f}")

# Now the controller, starting from n=2 with just two pilots per decision
# (deliberately noisy, like a real budget).
config = ControllerConfig(
    m_target=0.01,
    n_initial=2,
    n_max=256,
    growth_factor=2.0,
    shrink_threshold=4.0,
    pilot_sample_size=2,
    max_iterations=20,
)
trace = run_controller(dist, rewards, config, seed=25)

print("\ncontroller trace")
for step in trace.steps:
    print(f"  n={step.n:<4} estimate={step.estimated_margin:+.5f}  -> {step.action}")
print(f"\nstopped: {trace.stop_reason}, converged={trace.converged}, "
      f"final n={trace.final_n}, final margin={trace.final_margin:+.5f}")
