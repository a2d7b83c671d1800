from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

# Big-endian throughout: the first digit is the most significant. With this
# convention a block index followed by more digits is the same integer as the
# block's digits followed by those digits, which lets round tables and slot
# tables share one history encoding.


def size(radices: Sequence[int]) -> int:
    total = 1
    for r in radices:
        total *= int(r)
    return total


def encode(digits: np.ndarray, radices: Sequence[int]) -> np.ndarray:
    """
    digits: (..., len(radices)) integer array -> (...) integer indices.
    """
    digits = np.asarray(digits, dtype=np.int64)
    if digits.shape[-1] != len(radices):
        raise ValueError(f"expected {len(radices)} digits, got {digits.shape[-1]}")
    out = np.zeros(digits.shape[:-1], dtype=np.int64)
    for j, r in enumerate(radices):
        out = out * int(r) + digits[..., j]
    return out


def decode(index: np.ndarray, radices: Sequence[int]) -> np.ndarray:
    """
    (...) integer indices -> (..., len(radices)) digits.
    """
    index = np.asarray(index, dtype=np.int64).copy()
    out = np.zeros(index.shape + (len(radices),), dtype=np.int64)
    for j in range(len(radices) - 1, -1, -1):
        r = int(radices[j])
        out[..., j] = index % r
        index //= r
    return out


def block_radices(alphabet: int, length: int) -> Tuple[int, ...]:
    return (int(alphabet),) * int(length)
