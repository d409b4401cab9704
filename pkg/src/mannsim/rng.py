"""Seeded sub-stream derivation.

Every random draw in the pipeline flows from one master seed through a
named sub-stream, so that e.g. drop generation, action sampling and
training shuffles never share or reorder draws between each other.
"""

from __future__ import annotations

import zlib

import numpy as np


def _encode(key: int | str) -> int:
    if isinstance(key, str):
        # crc32 is stable across platforms and Python versions
        return zlib.crc32(key.encode("utf-8"))
    return int(key) & 0xFFFFFFFF


def substream(master_seed: int, *path: int | str) -> np.random.Generator:
    """Return a Generator for the sub-stream named by ``path``.

    Identical (master_seed, path) always yields the same stream;
    distinct paths yield statistically independent streams.
    """
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF] + [_encode(k) for k in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))
