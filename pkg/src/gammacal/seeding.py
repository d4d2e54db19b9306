"""Seed derivation.

Every random stage gets its own integer seed derived from a tuple of
non-negative integer keys (base seed, experiment, replicate, stage, ...)
through ``numpy.random.SeedSequence``, so streams never overlap and work
items can run in any order or process.
"""

import numpy as np

# stage labels used by the harness and calibrators
STAGE_DATA = 1
STAGE_CROSSFIT = 2
STAGE_BOOTSTRAP = 3
STAGE_FOREST = 4
STAGE_SHIFT = 5
STAGE_RCT = 6


def derive(*keys):
    """64-bit integer seed for the key tuple."""
    words = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def rng(*keys):
    return np.random.Generator(np.random.Philox(derive(*keys)))
