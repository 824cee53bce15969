"""Seed derivation for grid cells and replications.

A cell (or replication) seed is a splitmix64 hash chain over the master seed
and the integer indices identifying the cell, so results do not depend on the
order in which a worker pool evaluates cells.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *indices: int) -> int:
    """Fold `indices` into `master`; returns an unsigned 64-bit seed."""
    h = splitmix64(int(master) & _MASK)
    for i in indices:
        h = splitmix64(h ^ (int(i) & _MASK))
    return h


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
