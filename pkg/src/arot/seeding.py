"""Deterministic RNG substreams keyed by a master seed and a path of labels.

Every random draw in the package comes from ``substream(seed, *keys)``, so
results do not depend on evaluation order or worker count.
"""
import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, (bool, np.bool_)):
        return int(k)
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError("substream keys must be non-negative")
        return int(k)
    if isinstance(k, float):
        # alphas and similar grid values
        return zlib.crc32(repr(k).encode())
    return zlib.crc32(str(k).encode())


def seed_sequence(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))


def substream(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, *keys))


def derive_seed(seed: int, *keys) -> int:
    """A 63-bit integer seed for a child computation."""
    hi, lo = seed_sequence(seed, *keys).generate_state(2)
    return int((int(hi) << 31) ^ int(lo))


def node_rng(seed: int, depth: int, position: int) -> np.random.Generator:
    return substream(seed, "node", depth, position)
