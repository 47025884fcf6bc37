"""Closed real intervals with rational endpoints.

Arithmetic is exact on the endpoints, so every result encloses the exact
real result.  The only rounding happens in :meth:`RatInterval.sqrt` (and in
:meth:`RatInterval.simplify`), where endpoints move outward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

Number = Union[int, Fraction]


def _q(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, float)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"cannot make a rational from {type(x).__name__}")


def isqrt_floor_frac(x: Fraction, bits: int) -> Fraction:
    """A rational r = k / 2**bits with r <= sqrt(x) < r + 2**-bits."""
    if x < 0:
        raise ValueError("sqrt of a negative number")
    scale = 1 << (2 * bits)
    k = math.isqrt(x.numerator * scale // x.denominator)
    return Fraction(k, 1 << bits)


@dataclass(frozen=True)
class RatInterval:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        object.__setattr__(self, "lo", _q(self.lo))
        object.__setattr__(self, "hi", _q(self.hi))
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x) -> "RatInterval":
        x = _q(x)
        return cls(x, x)

    @classmethod
    def hull(cls, items: Iterable["RatInterval"]) -> "RatInterval":
        items = list(items)
        return cls(min(i.lo for i in items), max(i.hi for i in items))

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def mid(self) -> Fraction:
        return (self.lo + self.hi) / 2

    def contains(self, x) -> bool:
        if isinstance(x, RatInterval):
            return self.lo <= x.lo and x.hi <= self.hi
        return self.lo <= _q(x) <= self.hi

    def __contains__(self, x) -> bool:
        return self.contains(x)

    def overlaps(self, other: "RatInterval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def widen(self, r) -> "RatInterval":
        r = _q(r)
        return RatInterval(self.lo - r, self.hi + r)

    # -- arithmetic -----------------------------------------------------
    @staticmethod
    def _coerce(x) -> "RatInterval":
        return x if isinstance(x, RatInterval) else RatInterval.point(x)

    def __add__(self, other):
        o = self._coerce(other)
        return RatInterval(self.lo + o.lo, self.hi + o.hi)

    __radd__ = __add__

    def __neg__(self):
        return RatInterval(-self.hi, -self.lo)

    def __sub__(self, other):
        o = self._coerce(other)
        return RatInterval(self.lo - o.hi, self.hi - o.lo)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        p = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return RatInterval(min(p), max(p))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o.lo <= 0 <= o.hi:
            raise ZeroDivisionError("interval division by an interval containing 0")
        return self * RatInterval(1 / o.hi, 1 / o.lo)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def sq(self) -> "RatInterval":
        lo, hi = self.lo, self.hi
        if lo >= 0:
            return RatInterval(lo * lo, hi * hi)
        if hi <= 0:
            return RatInterval(hi * hi, lo * lo)
        return RatInterval(0, max(lo * lo, hi * hi))

    def abs(self) -> "RatInterval":
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return RatInterval(0, max(-self.lo, self.hi))

    def min(self, other) -> "RatInterval":
        o = self._coerce(other)
        return RatInterval(min(self.lo, o.lo), min(self.hi, o.hi))

    def max(self, other) -> "RatInterval":
        o = self._coerce(other)
        return RatInterval(max(self.lo, o.lo), max(self.hi, o.hi))

    def sqrt(self, width=Fraction(1, 2**40)) -> "RatInterval":
        """Enclosure of [sqrt(lo), sqrt(hi)] with endpoint error below ``width``."""
        if self.lo < 0:
            raise ValueError("sqrt of an interval with negative part")
        width = _q(width)
        if width <= 0:
            raise ValueError("sqrt width must be positive")
        bits = max(1, math.ceil(-math.log2(float(width))) + 1) if width < 1 else 1
        lo = isqrt_floor_frac(self.lo, bits)
        hi = isqrt_floor_frac(self.hi, bits)
        if hi * hi != self.hi:
            hi += Fraction(1, 1 << bits)
        return RatInterval(lo, hi)

    def simplify(self, bits: int = 64) -> "RatInterval":
        """Outward-round the endpoints to dyadic rationals with ``bits`` fractional bits."""
        scale = 1 << bits
        lo = Fraction(math.floor(self.lo * scale), scale)
        hi = Fraction(math.ceil(self.hi * scale), scale)
        return RatInterval(lo, hi)

    # -- reporting -----------------------------------------------------
    def encode(self) -> list[str]:
        return [str(self.lo), str(self.hi)]

    def decimal(self, digits: int = 8) -> str:
        return f"[{float(self.lo):.{digits}g}, {float(self.hi):.{digits}g}]"

    def __repr__(self):
        return f"RatInterval({self.lo}, {self.hi})"


def sqrt2_enclosure(bits: int = 80) -> RatInterval:
    lo = isqrt_floor_frac(Fraction(2), bits)
    return RatInterval(lo, lo + Fraction(1, 1 << bits))


def real_field_interval(x, bits: int = 80) -> RatInterval:
    """Enclose a real element a + c sqrt(2) of Q(i, sqrt 2)."""
    if not x.is_real():
        raise ValueError("expected a real field element")
    if x.c == 0:
        return RatInterval.point(x.a)
    return RatInterval.point(x.a) + sqrt2_enclosure(bits) * x.c


def interval_arith(x: RatInterval, y: RatInterval | None, op: str) -> RatInterval:
    ops = {
        "add": lambda: x + y,
        "sub": lambda: x - y,
        "mul": lambda: x * y,
        "div": lambda: x / y,
        "min": lambda: x.min(y),
        "max": lambda: x.max(y),
    }
    if op == "sqrt":
        return x.sqrt()
    if op == "neg":
        return -x
    if op not in ops:
        raise ValueError(f"unknown interval operation {op!r}")
    return ops[op]()
