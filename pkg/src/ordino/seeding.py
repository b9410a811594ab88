"""Deterministic sub-seed derivation.

Sub-streams are keyed by ``(master seed, index, stream tag)`` through the
SplitMix64 finaliser, then fed to numpy's PCG64. The mapping does not depend
on how work is split across processes.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

# stream tags keep unrelated consumers of the same (seed, index) apart
STREAM_SIMULATE = 0x51
STREAM_REPLICATION = 0x52
STREAM_MULTISTART = 0x53
STREAM_MRC = 0x54


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, index: int, stream: int = 0) -> int:
    h = splitmix64(int(master) & _MASK)
    h = splitmix64(h ^ (int(index) & _MASK))
    return splitmix64(h ^ (int(stream) & _MASK))


def generator(master: int, index: int = 0, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, index, stream)))
