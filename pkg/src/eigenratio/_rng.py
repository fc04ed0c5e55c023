"""Seed handling.

Every randomized routine accepts a 64-bit master seed.  Replicate ``r`` of
stage ``tag`` draws from ``SeedSequence(seed, spawn_key=(tag, r))`` so its
stream never depends on how replicates are scheduled.
"""

from __future__ import annotations

import zlib

import numpy as np

# stage tags keep substreams for different jobs disjoint
STAGE_GRAPH = 1
STAGE_PERMUTE = 2
STAGE_GOE = 3
STAGE_SPEC = 4
STAGE_EXPERIMENT = 5


def as_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)


def substream(seed, *key):
    """Generator for replicate ``key`` under master ``seed``."""
    key = tuple(_key_int(k) for k in key)
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)
    return np.random.default_rng(ss)


def derive_seed(seed, *key):
    """Integer child seed, for handing to functions that take a plain int."""
    key = tuple(_key_int(k) for k in key)
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _key_int(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    return int(k)
