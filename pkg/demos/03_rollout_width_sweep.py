"""
Wider rollout batches make training kinder to what the model knows
==================================================================

A multi-step run at three rollout widths, same seeds.  Narrow batches
leave most correct tokens unsampled each step, so individual tokens get
dragged below where they started; wide batches wash that out.

The command-line twin of this script:

    massbalance sweep desk --n 4,64,1024 --seeds 4 --out sweep.csv
"""

import numpy as np

from massbalance import desk_preset, sweep_rollout_sizes

# Trimmed-down desk run so the demo finishes in a few seconds.
base = desk_preset(steps=200)
widths = [4, 64, 1024]
seeds = range(4)

runs = sweep_rollout_sizes(base, widths, seeds)

print(f"vocabulary {base.vocab_size}, {base.num_correct} correct tokens, "
      f"{base.steps} steps, {len(list(seeds))} paired seeds\n")
print(f"{'width':>6}  {'final correct mass':>19}  {'worst single-token drop':>24}  "
      f"{'improved at end':>16}")
for n in widths:
    final_q = np.mean([runs[(n, s)].q_pos[-1] for s in seeds])
    worst = np.mean([abs(min(runs[(n, s)].worst_drop)) for s in seeds])
    improved = np.mean([runs[(n, s)].fraction_improved[-1] for s in seeds])
    print(f"{n:>6}  {final_q:>19.4f}  {worst:>24.3e}  {improved:>16.3f}")

# Reading the table: final mass climbs with the width while the worst
# per-token drop falls by orders of magnitude -- broad sampling buys
# stability, not just throughput.
