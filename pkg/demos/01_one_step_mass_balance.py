"""
Where one gradient step moves the probability mass
==================================================

A tiny vocabulary, one batch of sampled tokens, and the exact bookkeeping
of how much probability the correct tokens gain -- computed three ways
that must agree.
"""

import numpy as np

from massbalance import (
    LabeledDistribution,
    RewardScheme,
    RolloutBatch,
    one_step_report,
)

# Eight tokens; the first three are "correct". Logits are deliberately
# uneven so every term in the balance is nonzero.
logits = np.array([1.2, 0.4, -0.3, 0.8, 0.0, -0.5, 0.1, -1.0])
correct = np.array([True, True, True, False, False, False, False, False])
dist = LabeledDistribution(logits, correct)

print("token probabilities:", np.round(dist.probs, 4))
print("correct mass before:", round(float(dist.probs[correct].sum()), 4))

# Pretend five rollouts hit tokens {0, 2} (correct) and {3, 4} (incorrect),
# with token 3 drawn twice.
batch = RolloutBatch(
    sampled_correct=np.array([0, 2]),
    sampled_incorrect=np.array([3, 4]),
    draw_count=5,
    draw_multiplicities={0: 1, 2: 1, 3: 2, 4: 1},
)

report = one_step_report(dist, batch, RewardScheme(), eta=0.05)

# The same number from three independent routes: the closed-form expression,
# a sum over the full softmax Jacobian, and literally re-running softmax on
# the updated logits (exact, includes higher-order terms).
print("\ncorrect-mass change, closed form :", report.delta_q_closed_form)
print("correct-mass change, Jacobian    :", report.delta_q_jacobian)
print("correct-mass change, re-softmax  :", report.delta_q_exact)

# Split the first-order change between correct tokens that were in the batch
# and correct tokens that were not: the unsampled ones foot part of the bill.
print("\n  gain on sampled-correct tokens :", report.delta_p_in)
print("  drift on unsampled-correct     :", report.delta_p_out)

# The verdict and the two sides of the sign test it derives from.
p = report.positivity
print("\nverdict:", p.outcome.value, f"({p.scenario.value} regime)")
print("  lhs - rhs =", p.condition_lhs - p.condition_rhs, "== margin:", report.margin)
