"""Bit masks over example indices, stored as Python ints.

Bit ``i`` of a mask is example ``i``. CPython ints are arbitrary-length
digit arrays, so ``&``, ``|``, ``~`` and ``int.bit_count`` act word-parallel
over the whole dataset.
"""
from __future__ import annotations

from fractions import Fraction
import math

import numpy as np


def to_mask(flags) -> int:
    arr = np.asarray(flags, dtype=bool)
    if arr.size == 0:
        return 0
    packed = np.packbits(arr, bitorder="little")
    return int.from_bytes(packed.tobytes(), "little")


def from_mask(mask: int, n: int) -> np.ndarray:
    if n == 0:
        return np.zeros(0, dtype=bool)
    nbytes = (n + 7) // 8
    raw = np.frombuffer(mask.to_bytes(nbytes, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n].astype(bool)


def full_mask(n: int) -> int:
    return (1 << n) - 1


def popcount(mask: int) -> int:
    return mask.bit_count()


def indices(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def exact(value) -> Fraction:
    """Decimal-exact rational for a user-facing float (0.1 -> 1/10)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(repr(float(value)))


def ceil_fraction_of(frac, n: int) -> int:
    """ceil(frac * n) without float round-off (0.07 * 100 -> 7, not 8)."""
    return math.ceil(exact(frac) * n)
