"""Counter-based random streams.

Every stochastic routine in sheetlab takes a ``numpy.random.Generator``.  Streams
are Philox generators keyed by a ``SeedSequence`` built from ``(seed, *path)``,
so trial ``i`` of an experiment always sees the same numbers no matter how many
workers run the experiment or in which order trials complete.
"""

import numpy as np

SEED_MAX = 2**64 - 1


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def substream(seed, *path):
    """Return the generator for ``(seed, *path)``.

    >>> a = substream(42, 3).standard_normal()
    >>> b = substream(42, 3).standard_normal()
    >>> a == b
    True
    """
    entropy = [check_seed(seed)] + [int(p) for p in path]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def as_generator(rng):
    """Accept a Generator, an integer seed, or None (seed 0)."""
    if isinstance(rng, np.random.Generator):
        return rng
    return substream(0 if rng is None else rng)
