"""
The cost of not sampling a token, and how fast it fades
=======================================================

A token the batch never draws gets dragged by the shared coupling term.
Its expected contribution is p^2 (1-p)^n -- geometric in the rollout
count n.  We tabulate the analytic curve and corroborate one cell with a
brute-force Monte Carlo.
"""

import numpy as np

from massbalance import (
    LabeledDistribution,
    decay_curve,
    expected_unsampled_second_moment,
)

rng = np.random.default_rng(0)

# One mid-sized skewed distribution: 24 tokens, 6 correct.
logits = rng.normal(size=24)
mask = np.zeros(24, dtype=bool)
mask[:6] = True
dist = LabeledDistribution(logits, mask)

grid = [1, 2, 4, 8, 16, 32, 64, 128, 256]
curve = decay_curve(dist, grid)

print(f"{'n':>5}  {'unsampled correct':>18}  {'unsampled incorrect':>20}")
for n, c, i in zip(curve.n_values, curve.correct_totals, curve.incorrect_totals):
    print(f"{n:>5}  {c:>18.3e}  {i:>20.3e}")

# Each doubling of n squares the per-token survival factor (1-p)^n, so the
# totals collapse fast; by n=256 nothing is left to worry about.

# Single-token spot check against simulation: p = 0.3, n = 16.
p, n, trials = 0.3, 16, 200_000
analytic = expected_unsampled_second_moment(p, n)
missed = rng.binomial(n, p, size=trials) == 0
mc = p * p * missed.mean()
se = p * p * np.sqrt(missed.mean() * (1 - missed.mean()) / trials)
print(f"\np={p}, n={n}:")
print("  analytic   :", analytic)
print("  Monte Carlo:", mc, "+/-", round(float(3 * se), 8), "(3 standard errors)")
