"""
Seeded random sub-streams.

Every random draw in an experiment comes from a generator derived from
(seed, purpose, *key).  Changing how one purpose consumes randomness
(e.g. a different fading spec) therefore never shifts another purpose's
stream, and identical (seed, config) pairs replay bit-for-bit.
"""

import numpy as np

# Purpose codes (part of the reproducibility contract: never renumber)
DEVICE_SELECTION = 1
BATCH_SAMPLING = 2
FADING = 3
CHANNEL_NOISE = 4
LOSS_DATA = 5
REPLICATE = 6


def substream(seed: int, purpose: int, *key: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, purpose, *key)``."""
    entropy = [int(seed), int(purpose), *(int(k) for k in key)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def replicate_seeds(seed: int, count: int) -> list[int]:
    """Derive ``count`` replica seeds from a base seed."""
    ss = np.random.SeedSequence([int(seed), REPLICATE])
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in ss.spawn(count)]
