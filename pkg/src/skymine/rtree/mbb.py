"""Axis-aligned minimum bounding boxes with closed-interval semantics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import BadWindow, DimensionMismatch


@dataclass(frozen=True)
class MBB:
    low: tuple
    high: tuple

    def __post_init__(self):
        low = tuple(float(x) for x in np.atleast_1d(self.low))
        high = tuple(float(x) for x in np.atleast_1d(self.high))
        if len(low) != len(high):
            raise DimensionMismatch("low and high differ in dimensionality")
        if any(lo > hi for lo, hi in zip(low, high)):
            raise BadWindow(f"low {low} exceeds high {high}")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @classmethod
    def point(cls, p) -> "MBB":
        return cls(tuple(p), tuple(p))

    @property
    def k(self) -> int:
        return len(self.low)

    def area(self) -> float:
        return math.prod(h - lo for lo, h in zip(self.low, self.high))


def _check(a: MBB, b_k: int):
    if a.k != b_k:
        raise DimensionMismatch(f"dimensionality {a.k} vs {b_k}")


def mbb_union(a: MBB, b: MBB) -> MBB:
    _check(a, b.k)
    return MBB(tuple(map(min, a.low, b.low)), tuple(map(max, a.high, b.high)))


def mbb_intersects(a: MBB, b: MBB) -> bool:
    _check(a, b.k)
    return all(al <= bh and bl <= ah for al, ah, bl, bh in zip(a.low, a.high, b.low, b.high))


def mbb_contains_point(a: MBB, p) -> bool:
    p = tuple(np.atleast_1d(p))
    _check(a, len(p))
    return all(lo <= x <= hi for lo, x, hi in zip(a.low, p, a.high))


def min_dist(a: MBB, p) -> float:
    p = tuple(float(x) for x in np.atleast_1d(p))
    _check(a, len(p))
    return math.sqrt(sum(max(0.0, lo - x, x - hi) ** 2 for lo, x, hi in zip(a.low, p, a.high)))


def box_distance(a: MBB, b: MBB) -> float:
    _check(a, b.k)
    return math.sqrt(sum(max(0.0, al - bh, bl - ah) ** 2
                         for al, ah, bl, bh in zip(a.low, a.high, b.low, b.high)))


# Vectorized forms over arrays of boxes: lows/highs shaped (n, k).

def min_dist_sq_many(lows: np.ndarray, highs: np.ndarray, p: np.ndarray) -> np.ndarray:
    gap = np.maximum(0.0, np.maximum(lows - p, p - highs))
    return (gap * gap).sum(axis=1)


def pair_dist_sq(al, ah, bl, bh) -> np.ndarray:
    """(na, nb) squared box-to-box distances."""
    gap = np.maximum(0.0, np.maximum(al[:, None, :] - bh[None, :, :], bl[None, :, :] - ah[:, None, :]))
    return (gap * gap).sum(axis=2)
