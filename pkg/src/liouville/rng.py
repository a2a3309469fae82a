"""Seeded random streams.

Every stochastic step draws from a named sub-stream of one integer seed, so a
single scenario seed reproduces sampling, bootstrap and jitter independently.
"""
import zlib

import numpy as np


def substream(seed, name: str) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(int(seed or 0), spawn_key=(key,)))


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
