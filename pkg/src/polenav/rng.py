"""Seeded random streams.

Every stochastic component draws from its own ``numpy.random.Generator``
derived from a root seed plus a tuple of integer tags, so streams never
interfere and any single stream can be reproduced in isolation.
"""

import zlib

import numpy as np


def _tag(value):
    if isinstance(value, str):
        return zlib.crc32(value.encode("utf-8"))
    return int(value)


def make_rng(seed, *tags):
    """Return an independent PCG64 generator for ``(seed, *tags)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag(t) & 0xFFFFFFFF for t in tags]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(seed, *tags):
    """A 64-bit seed for a child component, stable across runs."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag(t) & 0xFFFFFFFF for t in tags])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
