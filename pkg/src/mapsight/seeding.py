"""Named deterministic RNG sub-streams.

Every consumer of randomness derives its generator from the single root seed
plus a stream name (and optional indices), so adding or removing one consumer
never perturbs the draws seen by another.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(root_seed: int, *names) -> np.random.Generator:
    """Generator for the (root_seed, *names) stream. Stable across platforms."""
    entropy = [root_seed & 0xFFFFFFFF, (root_seed >> 32) & 0xFFFFFFFF]
    for name in names:
        if isinstance(name, (int, np.integer)):
            entropy.append(int(name) & 0xFFFFFFFF)
        else:
            entropy.append(zlib.crc32(str(name).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def child_seed(root_seed: int, *names) -> int:
    """A 63-bit integer seed derived from the named stream."""
    return int(substream(root_seed, *names).integers(0, 2**63))
