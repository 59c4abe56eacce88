"""Seed lanes.

Every random stream in the package is addressed by a base seed plus a tuple of
non-negative integers, so that results do not depend on execution order.
"""

import numpy as np

TRAJECTORY = 0
CRITERION = 1
MONTECARLO = 2
INITIAL_POINT = 3
PILOT = 4

_SEED_LIMIT = 1 << 64


def stream(seed: int, *lane: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, *lane)``."""
    if not 0 <= seed < _SEED_LIMIT:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(v) for v in lane))
    return np.random.Generator(np.random.PCG64(ss))
