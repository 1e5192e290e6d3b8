"""Deterministic stream splitting for every stochastic entry point.

One user-facing root seed fans out into independent per-component streams via
``numpy.random.SeedSequence`` keyed on a fixed integer stream id plus the seed
plus optional sub-keys:

    SeedSequence([STREAM_<COMPONENT>, seed, *subkeys])

The rule is part of the public contract: the same (component, seed, subkeys)
triple always yields the same generator, and distinct triples yield
statistically independent streams, which is what makes batch sampling, pilot
margins, simulated trajectories, and sweeps reproducible bit-for-bit across
runs, platforms, and worker processes.
"""

from __future__ import annotations

import numpy as np

# Fixed component ids.  Never renumber; append only.
STREAM_SCENARIO = 1   # scenario-file distribution/correct-set generators
STREAM_BATCH = 2      # one-off rollout batch sampling
STREAM_PILOT = 3      # controller pilot batches
STREAM_SIM = 4        # simulated trajectories
STREAM_CONTROLLER = 5 # controller per-iteration estimate seeds


def seed_stream(*keys: int) -> np.random.Generator:
    """Return the generator for an integer key path (component id first)."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def fold_seed(*keys: int) -> int:
    """Collapse a key path to a single integer seed (for APIs taking one int)."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])
