"""Exact arithmetic in the number field Q(i, sqrt 2).

An element is stored as ``(a + b i) + (c + d i) sqrt(2)`` with rational
``a, b, c, d``.  The field contains every entry of the gates K, H, CNOT and
Toffoli, and the eighth roots of unity.
"""

from __future__ import annotations

from fractions import Fraction
from functools import total_ordering
from typing import Union

Rational = Union[int, Fraction]
SQRT2_FLOAT = 2.0**0.5


def _frac(x: Rational | str) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"malformed rational {x!r}") from exc
    raise TypeError(f"expected a rational, got {type(x).__name__}")


class FieldError(ArithmeticError):
    """Domain error in field arithmetic (division by zero, non-real comparison)."""


@total_ordering
class FieldScalar:
    __slots__ = ("a", "b", "c", "d", "_hash")

    def __init__(self, a: Rational = 0, b: Rational = 0, c: Rational = 0, d: Rational = 0):
        self.a = _frac(a)
        self.b = _frac(b)
        self.c = _frac(c)
        self.d = _frac(d)
        self._hash = None

    # -- constructors -------------------------------------------------
    @classmethod
    def coerce(cls, x: "FieldScalar | Rational") -> "FieldScalar":
        if isinstance(x, FieldScalar):
            return x
        if isinstance(x, (int, Fraction)):
            return cls(x)
        raise TypeError(f"cannot coerce {type(x).__name__} to FieldScalar")

    @classmethod
    def gaussian(cls, re: Rational, im: Rational = 0) -> "FieldScalar":
        return cls(re, im)

    @classmethod
    def sqrt2(cls) -> "FieldScalar":
        return cls(0, 0, 1, 0)

    @classmethod
    def i(cls) -> "FieldScalar":
        return cls(0, 1)

    @classmethod
    def parse(cls, text: str) -> "FieldScalar":
        """Parse the textual encoding ``"a/b,c/d,e/f,g/h"``; a lone rational is real."""
        parts = str(text).split(",")
        if len(parts) == 1:
            return cls(_frac(parts[0]))
        if len(parts) != 4:
            raise ValueError(f"field scalar needs four rationals, got {text!r}")
        return cls(*(_frac(p) for p in parts))

    def encode(self) -> str:
        return ",".join(str(x) for x in (self.a, self.b, self.c, self.d))

    # -- predicates ---------------------------------------------------
    def is_zero(self) -> bool:
        return not (self.a or self.b or self.c or self.d)

    def is_real(self) -> bool:
        return self.b == 0 and self.d == 0

    def is_gaussian(self) -> bool:
        """True when the sqrt(2) part vanishes, i.e. the value lies in Q[i]."""
        return self.c == 0 and self.d == 0

    def is_rational(self) -> bool:
        return self.b == 0 and self.c == 0 and self.d == 0

    # -- arithmetic ---------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, FieldScalar):
            if isinstance(other, (int, Fraction)):
                return FieldScalar(self.a + other, self.b, self.c, self.d)
            return NotImplemented
        return FieldScalar(self.a + other.a, self.b + other.b, self.c + other.c, self.d + other.d)

    __radd__ = __add__

    def __neg__(self):
        return FieldScalar(-self.a, -self.b, -self.c, -self.d)

    def __sub__(self, other):
        if not isinstance(other, (FieldScalar, int, Fraction)):
            return NotImplemented
        return self + (-FieldScalar.coerce(other))

    def __rsub__(self, other):
        return FieldScalar.coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, FieldScalar):
            if isinstance(other, (int, Fraction)):
                return FieldScalar(self.a * other, self.b * other, self.c * other, self.d * other)
            return NotImplemented
        # (p + q s)(r + t s) with s^2 = 2, p,q,r,t Gaussian rationals
        pa, pb, qa, qb = self.a, self.b, self.c, self.d
        ra, rb, ta, tb = other.a, other.b, other.c, other.d
        # p*r + 2 q*t
        a = pa * ra - pb * rb + 2 * (qa * ta - qb * tb)
        b = pa * rb + pb * ra + 2 * (qa * tb + qb * ta)
        # p*t + q*r
        c = pa * ta - pb * tb + qa * ra - qb * rb
        d = pa * tb + pb * ta + qa * rb + qb * ra
        return FieldScalar(a, b, c, d)

    __rmul__ = __mul__

    def conj(self) -> "FieldScalar":
        """Complex conjugate (sqrt 2 is real, so only the i-parts flip)."""
        return FieldScalar(self.a, -self.b, self.c, -self.d)

    def galois_sqrt2(self) -> "FieldScalar":
        """The automorphism sqrt(2) -> -sqrt(2)."""
        return FieldScalar(self.a, self.b, -self.c, -self.d)

    def inverse(self) -> "FieldScalar":
        if self.is_zero():
            raise FieldError("division by zero in Q(i, sqrt 2)")
        # x * galois(x) = p^2 - 2 q^2 is Gaussian; then divide by a Gaussian rational
        g = self * self.galois_sqrt2()
        n = g.a * g.a + g.b * g.b
        ginv = FieldScalar(g.a / n, -g.b / n)
        return self.galois_sqrt2() * ginv

    def __truediv__(self, other):
        if not isinstance(other, (FieldScalar, int, Fraction)):
            return NotImplemented
        return self * FieldScalar.coerce(other).inverse()

    def __rtruediv__(self, other):
        return FieldScalar.coerce(other) * self.inverse()

    def __pow__(self, k: int):
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            return self.inverse() ** (-k)
        result, base = FieldScalar(1), self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def abs2(self) -> "FieldScalar":
        """|x|^2, an element of the real subfield Q(sqrt 2)."""
        return self * self.conj()

    # -- comparison (real elements only) -----------------------------
    def sign(self) -> int:
        """Exact sign of a real element a + c sqrt(2)."""
        if not self.is_real():
            raise FieldError("sign of a non-real field element")
        a, c = self.a, self.c
        sa = (a > 0) - (a < 0)
        sc = (c > 0) - (c < 0)
        if sa == sc or sc == 0:
            return sa if sa else sc
        if sa == 0:
            return sc
        # opposite signs: compare a^2 with 2 c^2
        lhs, rhs = a * a, 2 * c * c
        if lhs == rhs:
            return 0
        return sa if lhs > rhs else sc

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = FieldScalar(other)
        if not isinstance(other, FieldScalar):
            return NotImplemented
        return (self.a, self.b, self.c, self.d) == (other.a, other.b, other.c, other.d)

    def __lt__(self, other):
        other = FieldScalar.coerce(other)
        return (self - other).sign() < 0

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.a, self.b, self.c, self.d))
        return self._hash

    def __abs__(self):
        """Absolute value of a real element."""
        return -self if self.sign() < 0 else self

    # -- conversions --------------------------------------------------
    def real_part(self) -> "FieldScalar":
        return FieldScalar(self.a, 0, self.c, 0)

    def imag_part(self) -> "FieldScalar":
        return FieldScalar(self.b, 0, self.d, 0)

    def __complex__(self):
        return complex(float(self.a) + float(self.c) * SQRT2_FLOAT, float(self.b) + float(self.d) * SQRT2_FLOAT)

    def __float__(self):
        if not self.is_real():
            raise FieldError("float() of a non-real field element")
        return float(self.a) + float(self.c) * SQRT2_FLOAT

    def float_error(self) -> float:
        """Upper bound on |complex(self) - self| from double rounding."""
        mag = abs(float(self.a)) + abs(float(self.b)) + 2 * (abs(float(self.c)) + abs(float(self.d)))
        return 8e-16 * mag + 1e-300

    def __repr__(self):
        return f"FieldScalar({self.encode()!r})"

    def __str__(self):
        terms = []
        for val, unit in ((self.a, ""), (self.b, "i"), (self.c, "√2"), (self.d, "i√2")):
            if val:
                terms.append(f"{val}{unit}" if unit == "" or val not in (1, -1) else ("-" if val < 0 else "") + unit)
        if not terms:
            return "0"
        out = terms[0]
        for t in terms[1:]:
            out += t if t.startswith("-") else "+" + t
        return out


ZERO = FieldScalar(0)
ONE = FieldScalar(1)
I = FieldScalar(0, 1)
SQRT2 = FieldScalar(0, 0, 1)
INV_SQRT2 = FieldScalar(0, 0, Fraction(1, 2))


def field_arith(x: FieldScalar, y: FieldScalar | None, op: str) -> FieldScalar:
    """Dispatch one of add, sub, mul, div, conj."""
    if op == "conj":
        return x.conj()
    if y is None:
        raise ValueError(f"operation {op!r} needs two operands")
    if op == "add":
        return x + y
    if op == "sub":
        return x - y
    if op == "mul":
        return x * y
    if op == "div":
        return x / y
    raise ValueError(f"unknown field operation {op!r}")
