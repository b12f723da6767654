"""Seed handling.

Every experiment derives from one master seed through numpy's
``SeedSequence``.  Circuit ``i`` owns ``SeedSequence(master, spawn_key=(i,))``
and that child is split once more into fixed purposes, in this order::

    TABLE, SAMPLING, ANALYSIS = 0, 1, 2

so adding circuits or running them on any number of threads never changes
the stream a given (circuit, purpose) pair sees.  Bit generator is PCG64.
"""
from __future__ import annotations

import numpy as np

TABLE, SAMPLING, ANALYSIS = 0, 1, 2
_PURPOSES = 3


def generator(seed) -> np.random.Generator:
    """A PCG64 generator from an int seed or a ``SeedSequence``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(_check_seed(seed))
    return np.random.Generator(np.random.PCG64(seed))


def _check_seed(seed) -> int:
    seed = int(seed)
    if seed < 0 or seed >= 1 << 64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def circuit_seeds(master_seed: int, circuit: int) -> list[np.random.SeedSequence]:
    """The per-purpose seed sequences for one circuit."""
    child = np.random.SeedSequence(_check_seed(master_seed), spawn_key=(int(circuit),))
    return child.spawn(_PURPOSES)


def derive_int(seed: np.random.SeedSequence) -> int:
    """A 64-bit integer seed drawn from a sequence, for APIs that take ints."""
    return int(seed.generate_state(1, dtype=np.uint64)[0])
