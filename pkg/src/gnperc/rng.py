"""Counter-based, splittable random streams.

Every stream is a Philox generator keyed by ``(seed, *keys)`` through
``numpy.random.SeedSequence``'s spawn key, so a stream can be rebuilt
from its key alone and parallel workers never share state.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def _seed_sequence(seed, keys):
    return np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(k) for k in keys))


def stream(seed, *keys):
    """Return an independent ``Generator`` for the key ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(_seed_sequence(seed, keys)))


def derive_seed(seed, *keys):
    """Derive a 64-bit child seed, e.g. the seed of trial ``i``."""
    state = _seed_sequence(seed, keys).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
