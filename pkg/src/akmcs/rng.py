"""Deterministic substream derivation from a single run seed.

Every random decision in the package draws from a PCG64 generator keyed by the
run seed plus a fixed integer path, so reordering or parallelising work cannot
change results.
"""

from __future__ import annotations

import numpy as np

# Fixed stream tags (never renumber; stored seeds depend on them).
STREAM_POOL = 1
STREAM_DOE = 2
STREAM_MMAE = 3
STREAM_REPLICATION = 4

_MASK64 = (1 << 64) - 1


def _entropy(seed: int, path: tuple[int, ...]) -> tuple[int, ...]:
    return (int(seed) & _MASK64, *(int(p) & _MASK64 for p in path))


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for stream ``path`` of run ``seed``; pure function of both."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_entropy(seed, path))))


def derive_seed(seed: int, *path: int) -> int:
    """A 63-bit child seed, e.g. one per replication of a comparison study."""
    state = np.random.SeedSequence(_entropy(seed, path)).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))
