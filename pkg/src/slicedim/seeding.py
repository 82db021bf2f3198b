"""Counter-based RNG derivation for reproducible, order-independent sampling.

Every random draw in the package comes from a generator keyed by
(master_seed, stream, index).  Parallel workers can therefore evaluate
samples in any order and still reproduce the sequential result bit for bit.
"""
from __future__ import annotations

import numpy as np

# Stream tags.  Fixed for the life of the file format: changing one changes
# every downstream sample.
STREAM_FAMILY = 1
STREAM_ROTATION = 2
STREAM_OFFSET = 3
STREAM_Z = 4
STREAM_AUDIT = 5
STREAM_GRID_OFFSET = 6
STREAM_CELL_KERNEL = 7
STREAM_HAAR_CHECK = 8

_MASK = (1 << 63) - 1


def rng_for(*keys: int) -> np.random.Generator:
    """Return a Generator deterministically derived from integer keys."""
    entropy = [int(k) & _MASK for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
