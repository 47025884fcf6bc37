"""First-order sentences about two equivalence relations and their continuous translations.

A sentence is a quantifier prefix over element variables followed by a
matrix in disjunctive normal form.  ``translate_fo`` turns it into a closed
formula over a marked space: true sentences go to 0 and false ones to at
least the scheme's gap.  ``fo_check`` is the brute-force oracle.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from . import formula as F
from .evaluator import EvalResult, eval_certified
from .model import EqStructure, Model, build_dynamical_interpretation, build_marked_constants
from .parser import parse

SCHEMES = ("constants", "dynamical")
PREDICATES = ("E1", "E2", "=")


class SentenceError(ValueError):
    pass


class ReductionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Literal:
    pred: str
    x: str
    y: str
    positive: bool = True

    def __post_init__(self):
        if self.pred not in PREDICATES:
            raise SentenceError(f"unknown predicate {self.pred!r}")

    def __str__(self):
        if self.pred == "=":
            return f"{self.x} {'=' if self.positive else '!='} {self.y}"
        return f"{'' if self.positive else '~'}{self.pred}({self.x},{self.y})"


@dataclass(frozen=True)
class FOSentence:
    prefix: tuple[tuple[str, str], ...]
    matrix: tuple[tuple[Literal, ...], ...]

    def __post_init__(self):
        names = [v for _, v in self.prefix]
        if len(set(names)) != len(names):
            raise SentenceError("a variable is quantified twice")
        for q, _ in self.prefix:
            if q not in ("A", "E"):
                raise SentenceError(f"quantifier must be A or E, got {q!r}")
        bound = set(names)
        for conj in self.matrix:
            for lit in conj:
                for v in (lit.x, lit.y):
                    if v not in bound and not (lit.pred == "=" and lit.x == lit.y):
                        raise SentenceError(f"variable {v} is not quantified")

    @property
    def depth(self) -> int:
        return len(self.prefix)

    def __str__(self):
        head = " ".join(f"{'forall' if q == 'A' else 'exists'} {v}" for q, v in self.prefix)
        if not self.matrix:
            body = "false"
        else:
            body = " | ".join("(" + " & ".join(map(str, c)) + ")" if c else "true" for c in self.matrix)
        return f"{head} : {body}" if head else body


_LIT = re.compile(r"^(~?)(E1|E2)\(\s*(\w+)\s*,\s*(\w+)\s*\)$|^(\w+)\s*(=|!=)\s*(\w+)$")


def parse_sentence(text: str) -> FOSentence:
    """``forall y1 exists y2 : E1(y1,y2) & ~E2(y1,y2) | y1 = y2``.

    ``|`` separates disjuncts, ``&`` conjuncts; parentheses around a conjunct
    are optional; ``true`` and ``false`` denote the empty conjunction and the
    empty disjunction.
    """
    text = text.strip()
    head, sep, body = text.partition(":")
    if not sep:
        head, body = "", text
    words = head.split()
    if len(words) % 2:
        raise SentenceError(f"malformed quantifier prefix {head!r}")
    prefix = []
    for q, v in zip(words[::2], words[1::2]):
        if q not in ("forall", "exists"):
            raise SentenceError(f"expected forall or exists, found {q!r}")
        prefix.append(("A" if q == "forall" else "E", v))
    body = body.strip()
    matrix = []
    if body != "false":
        for disj in body.split("|"):
            disj = disj.strip()
            if disj.startswith("(") and disj.endswith(")"):
                disj = disj[1:-1].strip()
            if disj == "true":
                matrix.append(())
                continue
            conj = []
            for part in disj.split("&"):
                m = _LIT.match(part.strip())
                if m is None:
                    raise SentenceError(f"cannot read literal {part.strip()!r}")
                if m.group(2):
                    conj.append(Literal(m.group(2), m.group(3), m.group(4), not m.group(1)))
                else:
                    conj.append(Literal("=", m.group(5), m.group(7), m.group(6) == "="))
            matrix.append(tuple(conj))
    return FOSentence(tuple(prefix), tuple(matrix))


# ---------------------------------------------------------------------------
# brute-force oracle


def _holds(s: EqStructure, lit: Literal, env: dict) -> bool:
    x, y = env.get(lit.x), env.get(lit.y)
    if lit.pred == "=":
        val = lit.x == lit.y or x == y
    else:
        val = s.related(1 if lit.pred == "E1" else 2, x, y)
    return val == lit.positive


def fo_check(s: EqStructure, rho: FOSentence) -> bool:
    def go(i: int, env: dict) -> bool:
        if i == len(rho.prefix):
            return any(all(_holds(s, lit, env) for lit in conj) for conj in rho.matrix)
        q, v = rho.prefix[i]
        vals = (go(i + 1, {**env, v: k}) for k in range(1, s.size + 1))
        return all(vals) if q == "A" else any(vals)

    return go(0, {})


# ---------------------------------------------------------------------------
# translation


def _modulus(t: str, x: str, y: str) -> str:
    """|<qu(x), t> - <qu(y), t>|^2 from the real and imaginary parts."""
    rp = f"adiff(reip(qu({x}), {t}), reip(qu({y}), {t}))"
    ip = f"adiff(imip(qu({x}), {t}), imip(qu({y}), {t}))"
    return f"plus[8]({rp} * {rp}, {ip} * {ip})"


def _displacement(op: str, var: str) -> str:
    return f"(sup {var}:B1 . d({op}({var}), {var}))"


@dataclass(frozen=True)
class TranslationScheme:
    name: str

    def __post_init__(self):
        if self.name not in SCHEMES:
            raise SentenceError(f"unknown scheme {self.name!r}; expected one of {SCHEMES}")

    @property
    def gap_text(self) -> str:
        if self.name == "constants":
            return "max(adiff(reip($b1, $b2), 0), adiff(imip($b1, $b2), 0))"
        return _displacement("U3", "g")

    def atom(self, i: int, x: str, y: str, positive: bool) -> str:
        """Text of the formula standing for E_i(x, y) (or its negation)."""
        if self.name == "constants":
            psi = _modulus(f"$a{i}", x, y)
            return f"({psi})" if positive else f"({self.gap_text} -. {psi})"
        near = f"({_displacement('U3', 'v')} -. max(d(U{i}(u), u), adiff(1, d(u, 0:B1))))"
        m = _modulus("u", x, y)
        if positive:
            return f"(sup u:B1 . min({near}, {m} -. {_displacement('U4', 'v')}))"
        return f"(sup u:B1 . min({near}, {_displacement('U5', 'v')} -. {m}))"

    def build(self, s: EqStructure) -> Model:
        if self.name == "constants":
            return build_marked_constants(s)[0]
        return build_dynamical_interpretation(s)


def _literal_text(scheme: TranslationScheme, lit: Literal) -> str:
    if lit.pred == "=":
        if lit.x == lit.y:
            return "0" if lit.positive else "1"
        return f"d({lit.x}, {lit.y})" if lit.positive else f"not[1](d({lit.x}, {lit.y}))"
    return scheme.atom(1 if lit.pred == "E1" else 2, lit.x, lit.y, lit.positive)


def _fold(op: str, parts: list[str], empty: str) -> str:
    if not parts:
        return empty
    out = parts[0]
    for p in parts[1:]:
        out = f"{op}({out}, {p})"
    return out


def translation_text(rho: FOSentence, scheme: TranslationScheme) -> str:
    # conjunction is max, disjunction is min; the empty disjunction is false (value 1)
    conj = [_fold("max", [_literal_text(scheme, lit) for lit in c], "0") for c in rho.matrix]
    body = _fold("min", conj, "1")
    for q, v in reversed(rho.prefix):
        body = f"{'sup' if q == 'A' else 'inf'} {v}:Q . {body}"
    return f"min({scheme.gap_text}, {body})"


def translate_fo(rho: FOSentence, scheme: TranslationScheme | str) -> F.Formula:
    if isinstance(scheme, str):
        scheme = TranslationScheme(scheme)
    return parse(translation_text(rho, scheme))


# ---------------------------------------------------------------------------
# checking the reduction


@dataclass
class ReductionCheck:
    structure: EqStructure
    sentence: FOSentence
    scheme: str
    truth: bool
    result: EvalResult
    gap: Fraction
    tol: Fraction
    agree: bool
    dichotomy: bool

    def __bool__(self):
        return self.agree

    def to_json(self) -> dict:
        return {
            "structure": self.structure.to_json(),
            "sentence": str(self.sentence),
            "scheme": self.scheme,
            "fo_truth": self.truth,
            "lo": str(self.result.lo),
            "hi": str(self.result.hi),
            "gap_lower": str(self.gap),
            "tol": str(self.tol),
            "agree": self.agree,
            "dichotomy": self.dichotomy,
        }


@dataclass
class Interpreter:
    """One structure under one scheme: the model, its gap and a shared memo."""

    structure: EqStructure
    scheme: TranslationScheme
    model: Model | None = None
    budget: int | None = None
    memo: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.scheme, str):
            self.scheme = TranslationScheme(self.scheme)
        if self.model is None:
            self.model = self.scheme.build(self.structure)
        gap = eval_certified(parse(self.scheme.gap_text), self.model, Fraction(1, 10**6), budget=self.budget)
        self.gap = gap.interval.lo

    def default_tol(self) -> Fraction:
        return self.gap / 4

    def check(self, rho: FOSentence, tol: Fraction | None = None) -> ReductionCheck:
        tol = self.default_tol() if tol is None else Fraction(tol)
        if self.gap <= 0 or 2 * tol >= self.gap:
            raise ReductionError(f"gap-degenerate: gap lower bound {self.gap} does not exceed 2 * tol = {2 * tol}")
        f = translate_fo(rho, self.scheme)
        res = eval_certified(f, self.model, tol, budget=self.budget, memo=self.memo)
        truth = fo_check(self.structure, rho)
        lo, hi = res.interval.lo, res.interval.hi
        says_true = hi <= tol
        says_false = lo >= self.gap - tol
        return ReductionCheck(self.structure, rho, self.scheme.name, truth, res, self.gap, tol,
                              agree=(says_true and truth) or (says_false and not truth),
                              dichotomy=says_true or says_false)


def verify_reduction(s: EqStructure, rho: FOSentence, scheme: TranslationScheme | str,
                     tol: Fraction | None = None, model: Model | None = None,
                     budget: int | None = None) -> ReductionCheck:
    """Evaluate the translation of ``rho`` on the model built from ``s`` and compare with ``fo_check``."""
    return Interpreter(s, scheme, model, budget).check(rho, tol)


# ---------------------------------------------------------------------------
# the shipped battery


def _literals(x: str, y: str) -> list[Literal]:
    return [Literal(p, x, y, sign) for p in PREDICATES for sign in (True, False)]


def battery() -> list[FOSentence]:
    """Every prefix shape of depth 1 and 2 with single literals and two-literal
    conjunctions and disjunctions over distinct predicates (132 sentences)."""
    out = []
    for q in ("A", "E"):
        for lit in _literals("y1", "y1"):
            out.append(FOSentence(((q, "y1"),), ((lit,),)))
    pairs = []
    for p1, p2 in itertools.combinations(PREDICATES, 2):
        for s1, s2 in itertools.product((True, False), repeat=2):
            pairs.append((Literal(p1, "y1", "y2", s1), Literal(p2, "y1", "y2", s2)))
    for q1, q2 in itertools.product("AE", repeat=2):
        prefix = ((q1, "y1"), (q2, "y2"))
        for lit in _literals("y1", "y2"):
            out.append(FOSentence(prefix, ((lit,),)))
        for a, b in pairs:
            out.append(FOSentence(prefix, ((a, b),)))
        for a, b in pairs:
            out.append(FOSentence(prefix, ((a,), (b,))))
    return out


def run_battery(structures: Sequence[EqStructure], sentences: Sequence[FOSentence], scheme: str,
                tol: Fraction | None = None, budget: int | None = None) -> list[ReductionCheck]:
    out = []
    for s in structures:
        it = Interpreter(s, scheme, budget=budget)
        out.extend(it.check(rho, tol) for rho in sentences)
    return out
