"""Closed real intervals with the set arithmetic used for set-valued operators.

Only Minkowski sums and scalar multiples are provided; products of two
intervals never occur in the 1-Laplacian and are deliberately absent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Real


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lo, hi]`` with ``lo <= hi``."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval endpoints must not be NaN")
        if lo > hi:
            raise ValueError(f"empty interval: lo={lo} > hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, t: float) -> Interval:
        return cls(t, t)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def is_degenerate(self) -> bool:
        return self.lo == self.hi

    def __add__(self, other):
        if isinstance(other, Interval):
            return Interval(self.lo + other.lo, self.hi + other.hi)
        if isinstance(other, Real):
            return Interval(self.lo + other, self.hi + other)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self) -> Interval:
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other):
        if isinstance(other, (Interval, Real)):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, Real):
            return (-self) + other
        return NotImplemented

    def __mul__(self, other):
        # scalar multiple only: {a*x : x in [lo, hi]}
        if isinstance(other, Interval):
            return NotImplemented
        if isinstance(other, Real):
            a = float(other)
            if a >= 0:
                return Interval(a * self.lo, a * self.hi)
            return Interval(a * self.hi, a * self.lo)
        return NotImplemented

    __rmul__ = __mul__

    def widen(self, tol: float) -> Interval:
        return Interval(self.lo - tol, self.hi + tol)

    def contains(self, t: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= t <= self.hi + tol

    def distance(self, other: Interval) -> float:
        """Gap between two intervals, 0 when they intersect."""
        return max(0.0, other.lo - self.hi, self.lo - other.hi)

    def intersects(self, other: Interval, tol: float = 0.0) -> bool:
        return self.distance(other) <= tol

    def as_list(self) -> list[float]:
        return [self.lo, self.hi]

    def __repr__(self) -> str:
        return f"Interval({self.lo!r}, {self.hi!r})"


def interval_sum(items) -> Interval:
    total = Interval(0.0, 0.0)
    for item in items:
        total = total + item
    return total
