"""Typed syntax trees for continuous-logic formulas over dynamical Hilbert spaces.

Two sorts exist: ``Ball(n)``, the vectors of norm at most n, and ``Marked``,
the finite discrete sort of basis labels.  Every formula node knows its value
range (``node.range``) and every closed or open formula has a Lipschitz
modulus (:func:`modulus`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterator, Union

from .numeric.field import FieldScalar
from .numeric.interval import RatInterval


class FormulaTypeError(TypeError):
    """Ill-sorted term or formula; ``node`` is the offending subtree."""

    def __init__(self, message: str, node=None):
        super().__init__(message)
        self.node = node


# ---------------------------------------------------------------------------
# sorts


@dataclass(frozen=True)
class Ball:
    n: int

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise FormulaTypeError(f"ball radius must be a positive integer, got {self.n!r}")

    def __str__(self):
        return f"B{self.n}"


@dataclass(frozen=True)
class Marked:
    def __str__(self):
        return "Q"


Sort = Union[Ball, Marked]
MARKED = Marked()


def _ball(sort, node) -> int:
    if not isinstance(sort, Ball):
        raise FormulaTypeError(f"expected a ball sort, got {sort}", node)
    return sort.n


# ---------------------------------------------------------------------------
# terms


class Term:
    """Base class for vector-valued (or label-valued) terms."""

    @property
    def sort(self) -> Sort:
        raise NotImplementedError

    def children(self) -> tuple["Term", ...]:
        return ()


@dataclass(frozen=True)
class Var(Term):
    name: str
    var_sort: Sort

    @property
    def sort(self):
        return self.var_sort


@dataclass(frozen=True)
class Zero(Term):
    zero_sort: Ball

    @property
    def sort(self):
        return self.zero_sort


@dataclass(frozen=True)
class Add(Term):
    left: Term
    right: Term

    @cached_property
    def sort(self):
        return Ball(2 * _same_ball(self.left, self.right, self))

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Sub(Term):
    left: Term
    right: Term

    @cached_property
    def sort(self):
        return Ball(2 * _same_ball(self.left, self.right, self))

    def children(self):
        return (self.left, self.right)


def scale_factor(c: FieldScalar) -> int:
    """Least integer k >= 1 with k - 1 <= |c| < k."""
    m2 = c.abs2().a  # Gaussian scalar: |c|^2 is rational
    k = math.isqrt(m2.numerator // m2.denominator)
    # k <= |c| < k + 1 up to the integer square root; fix the boundary exactly
    while Fraction(k * k) > m2:
        k -= 1
    while Fraction((k + 1) ** 2) <= m2:
        k += 1
    return k + 1


@dataclass(frozen=True)
class Scale(Term):
    coeff: FieldScalar
    arg: Term

    def __post_init__(self):
        if not self.coeff.is_gaussian():
            raise FormulaTypeError("scalars must lie in Q[i]", self)

    @cached_property
    def sort(self):
        return Ball(scale_factor(self.coeff) * _ball(self.arg.sort, self))

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class Apply(Term):
    op: str
    arg: Term

    @cached_property
    def sort(self):
        if _ball(self.arg.sort, self) != 1:
            raise FormulaTypeError(f"operator {self.op} applies only to B1 terms, got {self.arg.sort}", self)
        return Ball(1)

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class ApplyInv(Term):
    op: str
    arg: Term

    @cached_property
    def sort(self):
        if _ball(self.arg.sort, self) != 1:
            raise FormulaTypeError(f"operator {self.op}~ applies only to B1 terms, got {self.arg.sort}", self)
        return Ball(1)

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class Qu(Term):
    arg: Term

    @cached_property
    def sort(self):
        if not isinstance(self.arg.sort, Marked):
            raise FormulaTypeError("qu expects a term of sort Q", self)
        return Ball(1)

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class Const(Term):
    name: str

    @property
    def sort(self):
        return Ball(1)


def _same_ball(a: Term, b: Term, node) -> int:
    na, nb = _ball(a.sort, node), _ball(b.sort, node)
    if na != nb:
        raise FormulaTypeError(f"sort mismatch B{na} vs B{nb}", node)
    return na


# ---------------------------------------------------------------------------
# formulas


class Formula:
    """Base class; ``range`` is the sound value range of the node."""

    def children(self) -> tuple["Formula", ...]:
        return ()

    def terms(self) -> tuple[Term, ...]:
        return ()

    @property
    def range(self) -> RatInterval:
        raise NotImplementedError


@dataclass(frozen=True)
class D(Formula):
    left: Term
    right: Term

    def terms(self):
        return (self.left, self.right)

    @cached_property
    def range(self):
        ls, rs = self.left.sort, self.right.sort
        if isinstance(ls, Marked) or isinstance(rs, Marked):
            if not (isinstance(ls, Marked) and isinstance(rs, Marked)):
                raise FormulaTypeError("d between a label and a vector", self)
            return RatInterval(0, 1)
        n = _same_ball(self.left, self.right, self)
        return RatInterval(0, 2 * n)


@dataclass(frozen=True)
class ReIP(Formula):
    left: Term
    right: Term

    def terms(self):
        return (self.left, self.right)

    @cached_property
    def range(self):
        n = _same_ball(self.left, self.right, self)
        return RatInterval(-n * n, n * n)


@dataclass(frozen=True)
class ImIP(Formula):
    left: Term
    right: Term

    def terms(self):
        return (self.left, self.right)

    @cached_property
    def range(self):
        n = _same_ball(self.left, self.right, self)
        return RatInterval(-n * n, n * n)


@dataclass(frozen=True)
class RatConst(Formula):
    value: Fraction

    def __post_init__(self):
        object.__setattr__(self, "value", Fraction(self.value))

    @cached_property
    def range(self):
        return RatInterval.point(self.value)


@dataclass(frozen=True)
class Half(Formula):
    arg: Formula

    def children(self):
        return (self.arg,)

    @cached_property
    def range(self):
        r = self.arg.range
        return RatInterval(r.lo / 2, r.hi / 2)


@dataclass(frozen=True)
class TruncSub(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)

    @cached_property
    def range(self):
        a, b = self.left.range, self.right.range
        return RatInterval(max(a.lo - b.hi, 0), max(a.hi - b.lo, 0))


@dataclass(frozen=True)
class Min(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)

    @cached_property
    def range(self):
        return self.left.range.min(self.right.range)


@dataclass(frozen=True)
class Max(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)

    @cached_property
    def range(self):
        return self.left.range.max(self.right.range)


@dataclass(frozen=True)
class AbsDiff(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)

    @cached_property
    def range(self):
        return (self.left.range - self.right.range).abs()


@dataclass(frozen=True)
class Neg(Formula):
    cap: Fraction
    arg: Formula

    def __post_init__(self):
        object.__setattr__(self, "cap", Fraction(self.cap))

    def children(self):
        return (self.arg,)

    @cached_property
    def range(self):
        r = self.arg.range
        if self.cap < r.hi:
            raise FormulaTypeError(f"not[{self.cap}] applied to a formula with range up to {r.hi}", self)
        return RatInterval(self.cap - r.hi, self.cap - r.lo)


@dataclass(frozen=True)
class TruncAdd(Formula):
    cap: Fraction
    left: Formula
    right: Formula

    def __post_init__(self):
        object.__setattr__(self, "cap", Fraction(self.cap))

    def children(self):
        return (self.left, self.right)

    @cached_property
    def range(self):
        s = self.left.range + self.right.range
        return RatInterval(min(s.lo, self.cap), min(s.hi, self.cap))


@dataclass(frozen=True)
class Prod(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)

    @cached_property
    def range(self):
        return self.left.range * self.right.range


@dataclass(frozen=True)
class Sup(Formula):
    var: str
    var_sort: Sort
    body: Formula

    def children(self):
        return (self.body,)

    @cached_property
    def range(self):
        return self.body.range


@dataclass(frozen=True)
class Inf(Formula):
    var: str
    var_sort: Sort
    body: Formula

    def children(self):
        return (self.body,)

    @cached_property
    def range(self):
        return self.body.range


Quantifier = (Sup, Inf)
BINARY_CONNECTIVES = (TruncSub, Min, Max, AbsDiff, TruncAdd, Prod)
ATOMS = (D, ReIP, ImIP)


# ---------------------------------------------------------------------------
# traversal helpers


def iter_formulas(f: Formula) -> Iterator[Formula]:
    stack = [f]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children()))


def iter_terms(t: Term) -> Iterator[Term]:
    stack = [t]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children()))


def all_terms(f: Formula) -> Iterator[Term]:
    for node in iter_formulas(f):
        for t in node.terms():
            yield from iter_terms(t)


def operators(f: Formula) -> set[str]:
    return {t.op for t in all_terms(f) if isinstance(t, (Apply, ApplyInv))}


def constants(f: Formula) -> set[str]:
    return {t.name for t in all_terms(f) if isinstance(t, Const)}


def uses_qu(f: Formula) -> bool:
    return any(isinstance(t, Qu) for t in all_terms(f))


def term_free_vars(t: Term) -> dict[str, Sort]:
    return {n.name: n.var_sort for n in iter_terms(t) if isinstance(n, Var)}


def free_vars(f: Formula) -> dict[str, Sort]:
    """Free variables with their sorts (a variable must keep one sort)."""
    out: dict[str, Sort] = {}

    def walk(node: Formula, bound: frozenset):
        if isinstance(node, Quantifier):
            walk(node.body, bound | {node.var})
            return
        for t in node.terms():
            for name, sort in term_free_vars(t).items():
                if name not in bound:
                    if name in out and out[name] != sort:
                        raise FormulaTypeError(f"variable {name} used with sorts {out[name]} and {sort}", node)
                    out[name] = sort
        for c in node.children():
            walk(c, bound)

    walk(f, frozenset())
    return out


def is_closed(f: Formula) -> bool:
    return not free_vars(f)


def quantifier_depth(f: Formula) -> int:
    if isinstance(f, Quantifier):
        return 1 + quantifier_depth(f.body)
    return max((quantifier_depth(c) for c in f.children()), default=0)


def infer_ranges(f: Formula) -> Formula:
    """Check sorts everywhere and compute every node's range; returns ``f``.

    Raises :class:`FormulaTypeError` naming the first offending node.
    """

    def check_binding(node: Formula, scope: dict):
        if isinstance(node, Quantifier):
            if isinstance(node.var_sort, Ball):
                _ball(node.var_sort, node)
            inner = dict(scope)
            inner[node.var] = node.var_sort
            check_binding(node.body, inner)
            return
        for t in node.terms():
            for v in iter_terms(t):
                if isinstance(v, Var) and v.name in scope and scope[v.name] != v.var_sort:
                    raise FormulaTypeError(
                        f"variable {v.name} bound with sort {scope[v.name]} but used as {v.var_sort}", node
                    )
            t.sort  # noqa: B018 - forces the sort check
        for c in node.children():
            check_binding(c, scope)
        node.range  # noqa: B018

    check_binding(f, {})
    free_vars(f)
    f.range  # noqa: B018
    return f


# ---------------------------------------------------------------------------
# Lipschitz moduli


@dataclass
class Modulus:
    """Forward Lipschitz constants per free variable and per operator symbol."""

    var_lipschitz: dict[str, Fraction] = field(default_factory=dict)
    op_sensitivity: dict[str, Fraction] = field(default_factory=dict)

    def scaled(self, k: Fraction) -> "Modulus":
        return Modulus({v: k * x for v, x in self.var_lipschitz.items()},
                       {u: k * x for u, x in self.op_sensitivity.items()})

    def plus(self, other: "Modulus") -> "Modulus":
        return Modulus(_merge(self.var_lipschitz, other.var_lipschitz, lambda a, b: a + b),
                       _merge(self.op_sensitivity, other.op_sensitivity, lambda a, b: a + b))

    def join(self, other: "Modulus") -> "Modulus":
        return Modulus(_merge(self.var_lipschitz, other.var_lipschitz, max),
                       _merge(self.op_sensitivity, other.op_sensitivity, max))

    def without(self, var: str) -> "Modulus":
        return Modulus({v: x for v, x in self.var_lipschitz.items() if v != var}, dict(self.op_sensitivity))

    def lipschitz(self, var: str) -> Fraction:
        return self.var_lipschitz.get(var, Fraction(0))

    def sensitivity(self, op: str) -> Fraction:
        return self.op_sensitivity.get(op, Fraction(0))


def _merge(a: dict, b: dict, how) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = how(out[k], v) if k in out else v
    return out


QU_LIPSCHITZ = Fraction(3, 2)  # |e_j - e_k| = sqrt 2 for distinct labels


def _abs_upper(c: FieldScalar) -> Fraction:
    m2 = c.abs2().a
    if m2 == 0:
        return Fraction(0)
    return RatInterval.point(m2).sqrt(Fraction(1, 1 << 30)).hi


def term_modulus(t: Term) -> Modulus:
    if isinstance(t, Var):
        return Modulus({t.name: Fraction(1)})
    if isinstance(t, (Zero, Const)):
        return Modulus()
    if isinstance(t, (Add, Sub)):
        return term_modulus(t.left).plus(term_modulus(t.right))
    if isinstance(t, Scale):
        return term_modulus(t.arg).scaled(_abs_upper(t.coeff))
    if isinstance(t, (Apply, ApplyInv)):
        # |U s - U' s| <= |U - U'| |s| and |s| <= n on Ball(n)
        m = term_modulus(t.arg)
        n = Fraction(_ball(t.arg.sort, t))
        m.op_sensitivity[t.op] = m.op_sensitivity.get(t.op, Fraction(0)) + n
        return m
    if isinstance(t, Qu):
        return term_modulus(t.arg).scaled(QU_LIPSCHITZ)
    raise FormulaTypeError(f"unknown term {t!r}", t)


def modulus(f: Formula) -> Modulus:
    """Lipschitz constants of ``f`` in its free variables and operator symbols."""
    if isinstance(f, D):
        return term_modulus(f.left).plus(term_modulus(f.right))
    if isinstance(f, (ReIP, ImIP)):
        n = _ball(f.left.sort, f)
        return term_modulus(f.left).plus(term_modulus(f.right)).scaled(Fraction(n))
    if isinstance(f, RatConst):
        return Modulus()
    if isinstance(f, Half):
        return modulus(f.arg).scaled(Fraction(1, 2))
    if isinstance(f, Neg):
        return modulus(f.arg)
    if isinstance(f, (Min, Max)):
        return modulus(f.left).join(modulus(f.right))
    if isinstance(f, (TruncSub, AbsDiff, TruncAdd)):
        return modulus(f.left).plus(modulus(f.right))
    if isinstance(f, Prod):
        ma = max(abs(f.left.range.lo), abs(f.left.range.hi))
        mb = max(abs(f.right.range.lo), abs(f.right.range.hi))
        return modulus(f.left).scaled(mb).plus(modulus(f.right).scaled(ma))
    if isinstance(f, Quantifier):
        return modulus(f.body).without(f.var)
    raise FormulaTypeError(f"unknown formula {f!r}", f)
