"""Deterministic stream derivation for reproducible, parallelizable runs.

All randomness enters through seeded ``numpy.random.Generator`` streams.
Substreams are derived from a master seed by extending the SeedSequence
spawn key with integer path components, so the stream for (seed, run, t)
never depends on how many other streams were created before it.
"""

from __future__ import annotations

import numpy as np

RngLike = "int | np.random.SeedSequence | np.random.Generator"


def seed_sequence(seed) -> np.random.SeedSequence:
    """Normalize an int or SeedSequence to a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (int, np.integer)):
        return np.random.SeedSequence(int(seed))
    raise TypeError(f"expected int or SeedSequence, got {type(seed).__name__}")


def child_sequence(seed, *path: int) -> np.random.SeedSequence:
    """SeedSequence for the substream at ``path`` under ``seed``.

    A pure function of (seed, path); sibling substreams are statistically
    independent regardless of creation order.
    """
    base = seed_sequence(seed)
    return np.random.SeedSequence(
        entropy=base.entropy, spawn_key=tuple(base.spawn_key) + tuple(int(p) for p in path)
    )


def substream(seed, *path: int) -> np.random.Generator:
    """Generator over the substream at ``path`` under ``seed``."""
    return np.random.default_rng(child_sequence(seed, *path))


def as_generator(rng) -> np.random.Generator:
    """Accept an int seed, SeedSequence, or Generator; return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(seed_sequence(rng))
