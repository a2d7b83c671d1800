from __future__ import annotations

from typing import List

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """
    64-bit seeded generator (PCG64). All sampling in the package takes one of these.
    """
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def split(rng: np.random.Generator, k: int) -> List[np.random.Generator]:
    """
    Independent child generators; the parent advances its spawn counter only.
    """
    if k < 0:
        raise ValueError(f"cannot split into {k} generators")
    return rng.spawn(k)
