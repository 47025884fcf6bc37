"""Metric approximations of groups by unitaries, displacement sentences and
elementary equivalence of single unitaries.

Distances between unitaries are operator norms.  Strict and non-strict
inequalities are decided on enclosures of squared norms, so each verdict is
"pass", "fail" or "undecided" at the requested precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from . import formula as F
from .numeric import CMatrix, FieldScalar, RatInterval, charpoly, op_norm_squared, unitary_eigs
from .numeric.linalg import MatrixError, NumericBudgetError
from .parser import parse

Word = tuple[int, ...]


class GroupError(ValueError):
    pass


def word_key(w: Sequence[int]) -> str:
    return ",".join(str(int(x)) for x in w)


def parse_word(text: str) -> Word:
    text = text.strip()
    if not text:
        return ()
    out = tuple(int(x) for x in text.split(","))
    if 0 in out:
        raise GroupError("letters are nonzero integers")
    return out


@dataclass
class ApproxInstance:
    """Finite F with known products and lower bounds alpha on the distance from 1.

    ``alpha_sq`` holds squares of the bounds, so irrational bounds such as
    |1 - e^{2 pi i k / 8}| stay exact.
    """

    generators: int
    words: list[Word]
    facts: list[tuple[Word, Word, Word]] = field(default_factory=list)
    alpha_sq: dict[Word, FieldScalar] = field(default_factory=dict)
    identity: Word | None = None

    def __post_init__(self):
        self.words = [tuple(w) for w in self.words]
        known = set(self.words)
        for w in self.words:
            if any(abs(x) > self.generators or x == 0 for x in w):
                raise GroupError(f"word {list(w)} uses a letter outside 1..{self.generators}")
        for g, h, gh in self.facts:
            for w in (g, h, gh):
                if tuple(w) not in known:
                    raise GroupError(f"fact mentions {list(w)}, which is not in F")
        self.facts = [(tuple(g), tuple(h), tuple(gh)) for g, h, gh in self.facts]
        self.alpha_sq = {tuple(k): FieldScalar.coerce(v) for k, v in self.alpha_sq.items()}
        for w, a in self.alpha_sq.items():
            if w not in known:
                raise GroupError(f"alpha given for {list(w)}, which is not in F")
            if not a.is_real() or a.sign() < 0:
                raise GroupError(f"alpha^2 for {list(w)} must be a non-negative real")
        if self.identity is not None:
            self.identity = tuple(self.identity)
            if self.identity not in known:
                raise GroupError("identity word is not in F")
            if not self.alpha_sq.get(self.identity, FieldScalar(0)).is_zero():
                raise GroupError("alpha of the identity must be 0")
        products = {}
        for g, h, gh in self.facts:
            if products.setdefault((g, h), gh) != gh:
                raise GroupError(f"inconsistent products for {list(g)} * {list(h)}")

    def set_alpha(self, w: Sequence[int], alpha) -> None:
        a = FieldScalar.coerce(Fraction(alpha))
        self.alpha_sq[tuple(w)] = a * a

    @classmethod
    def from_json(cls, data: dict) -> "ApproxInstance":
        try:
            alpha_sq = {parse_word(k): FieldScalar.parse(v) for k, v in data.get("alpha_sq", {}).items()}
            for k, v in data.get("alpha", {}).items():
                a = FieldScalar.coerce(Fraction(v))
                alpha_sq[parse_word(k)] = a * a
            ident = data.get("identity")
            return cls(int(data["generators"]), [tuple(w) for w in data["words"]],
                       [tuple(tuple(x) for x in f) for f in data.get("facts", [])], alpha_sq,
                       None if ident is None else tuple(ident))
        except (KeyError, TypeError, ValueError) as exc:
            raise GroupError(f"malformed instance: {exc}") from exc

    def to_json(self) -> dict:
        out = {
            "generators": self.generators,
            "words": [list(w) for w in self.words],
            "facts": [[list(g), list(h), list(gh)] for g, h, gh in self.facts],
            "alpha_sq": {word_key(w): a.encode() for w, a in self.alpha_sq.items()},
        }
        if self.identity is not None:
            out["identity"] = list(self.identity)
        return out


def gamma_from_json(data: Mapping[str, list]) -> dict[Word, CMatrix]:
    try:
        return {parse_word(k): CMatrix.parse(rows) for k, rows in data.items()}
    except (ValueError, TypeError, MatrixError) as exc:
        raise GroupError(f"malformed matrix map: {exc}") from exc


def load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise GroupError(f"{path} is not valid JSON: {exc}") from exc


def word_matrix(gens: Sequence[CMatrix], w: Sequence[int]) -> CMatrix:
    """gamma(g_{i1}) ... gamma(g_{ik}); a negative letter uses the adjoint."""
    n = gens[0].rows
    out = CMatrix.identity(n)
    for x in w:
        g = gens[abs(x) - 1]
        out = out @ (g if x > 0 else g.adjoint())
    return out


@dataclass(frozen=True)
class Condition:
    kind: str  # identity | homomorphism | separation
    words: tuple[Word, ...]
    distance: RatInterval
    distance_sq: RatInterval
    bound_sq: FieldScalar
    verdict: str

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "words": [list(w) for w in self.words],
            "distance": self.distance.encode(),
            "distance_sq": self.distance_sq.encode(),
            "bound_sq": self.bound_sq.encode(),
            "bound_decimal": float(self.bound_sq) ** 0.5,
            "verdict": self.verdict,
        }


@dataclass(frozen=True)
class ApproxReport:
    conditions: tuple[Condition, ...]

    @property
    def verdict(self) -> str:
        vs = {c.verdict for c in self.conditions}
        if "fail" in vs:
            return "fail"
        return "undecided" if "undecided" in vs else "pass"

    def by_kind(self, kind: str) -> list[Condition]:
        return [c for c in self.conditions if c.kind == kind]

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "conditions": [c.to_json() for c in self.conditions]}


def _sign(x: Fraction, y: FieldScalar) -> int:
    return (FieldScalar(x) - y).sign()


def _less(sq: RatInterval, bound: FieldScalar) -> str:
    """Verdict for d < sqrt(bound)."""
    if _sign(sq.hi, bound) < 0:
        return "pass"
    if _sign(sq.lo, bound) >= 0:
        return "fail"
    return "undecided"


def _at_least(sq: RatInterval, bound: FieldScalar) -> str:
    """Verdict for d >= sqrt(bound)."""
    if _sign(sq.lo, bound) >= 0:
        return "pass"
    if _sign(sq.hi, bound) < 0:
        return "fail"
    return "undecided"


def check_approximation(inst: ApproxInstance, gamma: Mapping[Word, CMatrix], eps,
                        precision=Fraction(1, 10**6)) -> ApproxReport:
    eps = Fraction(eps)
    precision = Fraction(precision)
    gamma = {tuple(k): v for k, v in gamma.items()}
    missing = [list(w) for w in inst.words if w not in gamma]
    if missing:
        raise GroupError(f"gamma has no image for {missing}")
    dims = {m.shape for m in gamma.values()}
    if len(dims) != 1 or not next(iter(dims))[0] == next(iter(dims))[1]:
        raise GroupError(f"gamma images must be square of one size, got shapes {sorted(dims)}")
    for w, m in gamma.items():
        if not m.is_unitary():
            raise GroupError(f"gamma({list(w)}) is not unitary")
    n = next(iter(dims))[0]
    one = CMatrix.identity(n)
    eps_sq = FieldScalar(eps * eps)

    def dist(a: CMatrix, b: CMatrix):
        sq = op_norm_squared(a - b, precision)
        return sq.sqrt(precision), sq

    out = []
    if inst.identity is not None:
        d, sq = dist(one, gamma[inst.identity])
        out.append(Condition("identity", (inst.identity,), d, sq, eps_sq, _less(sq, eps_sq)))
    for g, h, gh in inst.facts:
        d, sq = dist(gamma[gh], gamma[g] @ gamma[h])
        out.append(Condition("homomorphism", (g, h, gh), d, sq, eps_sq, _less(sq, eps_sq)))
    for w in inst.words:
        if w not in inst.alpha_sq or w == inst.identity:
            continue
        a = inst.alpha_sq[w]
        d, sq = dist(one, gamma[w])
        out.append(Condition("separation", (w,), d, sq, a, _at_least(sq, a)))
    return ApproxReport(tuple(out))


def cyclic_instance(m: int) -> tuple[ApproxInstance, dict[Word, CMatrix]]:
    """Z/m (m in 1, 2, 4, 8) in U(m) by diag(1, w, ..., w^{m-1}), w = e^{2 pi i/m}.

    F holds g^0 .. g^{m-1} (g^0 is the empty word) with all products reduced
    mod m; alpha(g^k) = |1 - w^k| exactly.
    """
    if m not in (1, 2, 4, 8):
        raise GroupError("only m in {1, 2, 4, 8} has roots of unity in Q(i, sqrt 2)")
    omega = root_of_unity(m)
    powers = [FieldScalar(1)]
    for _ in range(1, m):
        powers.append(powers[-1] * omega)
    words = [(1,) * k for k in range(m)]
    gamma = {words[k]: CMatrix.diag([powers[(j * k) % m] for j in range(m)]) for k in range(m)}
    facts = [(words[a], words[b], words[(a + b) % m]) for a in range(m) for b in range(m)]
    alpha_sq = {words[k]: (1 - powers[k]).abs2() for k in range(1, m)}
    return ApproxInstance(1, words, facts, alpha_sq, ()), gamma


def root_of_unity(m: int) -> FieldScalar:
    if m == 1:
        return FieldScalar(1)
    if m == 2:
        return FieldScalar(-1)
    if m == 4:
        return FieldScalar(0, 1)
    if m == 8:
        h = Fraction(1, 2)
        return FieldScalar(0, 0, h, h)  # (1 + i) / sqrt 2
    raise GroupError(f"no primitive {m}-th root of unity in Q(i, sqrt 2)")


# ---------------------------------------------------------------------------
# displacement sentences


def _apply_text(w: Sequence[int], var: str) -> str:
    if not w:
        return var
    return f"w[{word_key(w)}]({var})"


def displacement_text(w: Sequence[int], var: str = "v") -> str:
    return f"sup {var}:B1 . d({_apply_text(w, var)}, {var})"


def word_displacement_formula(w: Sequence[int], relators: Sequence[Sequence[int]] | None = None) -> F.Formula:
    """sup over B1 of d(w(U) v, v); with relators, that displacement truncated-minus
    the largest relator displacement (0 for an empty list)."""
    text = displacement_text(w)
    if relators is not None and len(relators) > 0:
        parts = [f"({displacement_text(r)})" for r in relators]
        worst = parts[0]
        for p in parts[1:]:
            worst = f"max({worst}, {p})"
        text = f"({text}) -. {worst}"
    elif relators is not None:
        text = f"({text}) -. 0"
    return parse(text)


# ---------------------------------------------------------------------------
# elementary equivalence of (H, U) for finite dimensional H


@dataclass(frozen=True)
class HensonResult:
    verdict: str  # equivalent | distinct | undecided
    reason: str
    spectra: tuple | None = None

    def to_json(self) -> dict:
        out = {"verdict": self.verdict, "reason": self.reason}
        if self.spectra is not None:
            out["spectra"] = [[{"angle": c.angle.encode(), "multiplicity": c.multiplicity} for c in s]
                              for s in self.spectra]
        return out


def henson_equiv(u: CMatrix, v: CMatrix, eps=Fraction(1, 100)) -> HensonResult:
    """Two unitaries on finite dimensional spaces give elementarily equivalent
    structures iff they are unitarily conjugate, i.e. iff they have the same
    eigenvalues with multiplicities.  That is decided exactly by comparing
    characteristic polynomials; eigenvalue enclosures are attached for reference.
    """
    for name, m in (("first", u), ("second", v)):
        if not m.is_square() or not m.is_unitary():
            raise GroupError(f"the {name} matrix is not exactly unitary")
    if u.rows != v.rows:
        return HensonResult("distinct", f"dimensions differ ({u.rows} vs {v.rows})")
    same = charpoly(u) == charpoly(v)
    spectra = None
    try:
        spectra = (tuple(unitary_eigs(u, eps)), tuple(unitary_eigs(v, eps)))
    except NumericBudgetError:
        pass
    if same:
        return HensonResult("equivalent", "equal characteristic polynomials", spectra)
    return HensonResult("distinct", "characteristic polynomials differ", spectra)


HENSON_BATTERY = (
    "sup v:B1 . d(U1(v), v)",
    "sup v:B1 . d(U1(U1(v)), v)",
    "sup v:B1 . d(U1(U1(U1(v))), v)",
    "sup v:B1 . d(U1(v), w[-1](v))",
    "inf v:B1 . d(U1(v), v)",
    "sup v:B1 . reip(U1(v), v)",
    "inf v:B1 . reip(U1(v), v)",
    "sup v:B1 . imip(U1(v), v)",
    "inf v:B1 . imip(U1(v), v)",
    "sup v:B1 . min(d(U1(v), v), d(U1(U1(v)), v))",
)


def henson_battery() -> list[F.Formula]:
    """Sentences in one unitary U1 whose values must agree on equivalent pairs."""
    return [parse(t) for t in HENSON_BATTERY]
