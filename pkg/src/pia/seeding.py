"""Seed-derived random streams.

Every random draw in the package comes from a generator keyed by
``(seed, namespace, *index)``. Streams with different keys are
statistically independent, and a given key always yields the same
generator, so results do not depend on evaluation order or thread count.
"""

import zlib

import numpy as np

__all__ = ["stream", "namespace_id"]


def namespace_id(namespace: str) -> int:
    return zlib.crc32(namespace.encode("utf-8"))


def stream(seed: int, namespace: str, *index: int) -> np.random.Generator:
    """Return the generator for ``(seed, namespace, *index)``."""
    key = (namespace_id(namespace),) + tuple(int(i) for i in index)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))
