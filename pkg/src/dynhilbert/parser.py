"""Text surface for formulas: a recursive-descent parser and a canonical printer.

Precedence, loosest first: quantifiers, ``-.`` (left-assoc), ``*``
(left-assoc), primaries.  ``w[1,-2](v)`` is sugar for ``U1(U2~(v))`` and
named constant vectors are written ``$name``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .formula import (
    MARKED,
    AbsDiff,
    Add,
    Apply,
    ApplyInv,
    Ball,
    Const,
    D,
    Formula,
    FormulaTypeError,
    Half,
    ImIP,
    Inf,
    Marked,
    Max,
    Min,
    Neg,
    Prod,
    Qu,
    RatConst,
    ReIP,
    Scale,
    Sort,
    Sub,
    Sup,
    Term,
    TruncAdd,
    TruncSub,
    Var,
    Zero,
    infer_ranges,
)
from .numeric.field import FieldScalar


class FormulaSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col
        self.reason = message


FORMULA_KEYWORDS = {"d", "reip", "imip", "half", "min", "max", "adiff", "not", "plus", "sup", "inf"}
TERM_KEYWORDS = {"add", "sub", "scale", "qu"}
RESERVED = FORMULA_KEYWORDS | TERM_KEYWORDS

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<num>\d+(?:\.\d+)?(?:/\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<const>\$[A-Za-z_][A-Za-z0-9_]*)
  | (?P<tsub>-\.)
  | (?P<tilde>~\()
  | (?P<op>[-+*(),.:\[\]])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Token]:
    out: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            out.append(Token(kind if kind != "op" else text, text, line, pos - line_start + 1))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


def _number(text: str) -> Fraction:
    if "." in text and "/" in text:
        num, den = text.split("/")
        return Fraction(num) / Fraction(den)
    return Fraction(text)


def parse_sort_name(text: str) -> Sort | None:
    if text == "Q":
        return MARKED
    m = re.fullmatch(r"B([1-9]\d*)", text)
    return Ball(int(m.group(1))) if m else None


class _Parser:
    def __init__(self, src: str, free: dict[str, Sort] | None):
        self.toks = tokenize(src)
        self.i = 0
        self.scope: list[tuple[str, Sort]] = list((free or {}).items())

    # -- token helpers --------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        raise FormulaSyntaxError(msg, tok.line, tok.col)

    def expect(self, kind: str) -> Token:
        if self.tok.kind != kind:
            found = self.tok.text or "end of input"
            self.error(f"expected {kind!r}, found {found!r}")
        t = self.tok
        self.i += 1
        return t

    def accept(self, kind: str) -> bool:
        if self.tok.kind == kind:
            self.i += 1
            return True
        return False

    def at_ident(self, name: str) -> bool:
        return self.tok.kind == "ident" and self.tok.text == name

    # -- formulas -------------------------------------------------------
    def formula(self) -> Formula:
        if self.tok.kind == "ident" and self.tok.text in ("sup", "inf"):
            return self.quantified()
        left = self.product()
        while self.tok.kind == "tsub":
            self.i += 1
            right = self.quantified() if self._at_quantifier() else self.product()
            left = TruncSub(left, right)
        return left

    def _at_quantifier(self) -> bool:
        return self.tok.kind == "ident" and self.tok.text in ("sup", "inf")

    def quantified(self) -> Formula:
        kw = self.expect("ident")
        name_tok = self.expect("ident")
        if name_tok.text in RESERVED:
            self.error(f"{name_tok.text!r} is reserved and cannot name a variable", name_tok)
        self.expect(":")
        sort = self.sort()
        self.expect(".")
        self.scope.append((name_tok.text, sort))
        try:
            body = self.formula()
        finally:
            self.scope.pop()
        cls = Sup if kw.text == "sup" else Inf
        return cls(name_tok.text, sort, body)

    def product(self) -> Formula:
        left = self.primary()
        while self.tok.kind == "*":
            self.i += 1
            right = self.quantified() if self._at_quantifier() else self.primary()
            left = Prod(left, right)
        return left

    def primary(self) -> Formula:
        tok = self.tok
        if tok.kind == "(":
            self.i += 1
            f = self.formula()
            self.expect(")")
            return f
        if tok.kind in ("num", "-"):
            return RatConst(self.rational())
        if tok.kind != "ident":
            self.error(f"expected a formula, found {tok.text or 'end of input'!r}")
        name = tok.text
        if name in ("sup", "inf"):
            return self.quantified()
        if name not in FORMULA_KEYWORDS:
            self.error(f"unknown formula constructor {name!r}")
        self.i += 1
        if name in ("not", "plus"):
            self.expect("[")
            cap = self.rational()
            self.expect("]")
        self.expect("(")
        if name in ("d", "reip", "imip"):
            a = self.term()
            self.expect(",")
            b = self.term()
            self.expect(")")
            return {"d": D, "reip": ReIP, "imip": ImIP}[name](a, b)
        if name in ("half", "not"):
            f = self.formula()
            self.expect(")")
            return Half(f) if name == "half" else Neg(cap, f)
        a = self.formula()
        self.expect(",")
        b = self.formula()
        self.expect(")")
        if name == "plus":
            return TruncAdd(cap, a, b)
        return {"min": Min, "max": Max, "adiff": AbsDiff}[name](a, b)

    def rational(self) -> Fraction:
        neg = self.accept("-")
        v = self.number()
        return -v if neg else v

    def number(self) -> Fraction:
        tok = self.expect("num")
        try:
            return _number(tok.text)
        except ZeroDivisionError:
            self.error("zero denominator", tok)

    def sort(self) -> Sort:
        tok = self.expect("ident")
        s = parse_sort_name(tok.text)
        if s is None:
            self.error(f"unknown sort {tok.text!r} (expected B<n> or Q)", tok)
        return s

    # -- terms ----------------------------------------------------------
    def term(self) -> Term:
        tok = self.tok
        if tok.kind == "num":
            if tok.text != "0" or self.peek().kind != ":":
                self.error("only the zero vector '0:B<n>' may appear as a numeric term")
            self.i += 2
            s = self.sort()
            if not isinstance(s, Ball):
                self.error("the zero vector needs a ball sort", tok)
            return Zero(s)
        if tok.kind == "const":
            self.i += 1
            return Const(tok.text[1:])
        if tok.kind != "ident":
            self.error(f"expected a term, found {tok.text or 'end of input'!r}")
        name = tok.text
        nxt = self.peek()
        if name in ("add", "sub") and nxt.kind == "(":
            self.i += 2
            a = self.term()
            self.expect(",")
            b = self.term()
            self.expect(")")
            return Add(a, b) if name == "add" else Sub(a, b)
        if name == "scale" and nxt.kind == "(":
            self.i += 2
            c = self.gaussian()
            self.expect(",")
            a = self.term()
            self.expect(")")
            return Scale(c, a)
        if name == "qu" and nxt.kind == "(":
            self.i += 2
            a = self.term()
            self.expect(")")
            return Qu(a)
        if name == "w" and nxt.kind == "[":
            self.i += 2
            letters = [self.signed_int()]
            while self.accept(","):
                letters.append(self.signed_int())
            self.expect("]")
            self.expect("(")
            a = self.term()
            self.expect(")")
            for k in reversed(letters):
                a = Apply(f"U{k}", a) if k > 0 else ApplyInv(f"U{-k}", a)
            return a
        if nxt.kind in ("(", "tilde"):
            if name in RESERVED:
                self.error(f"{name!r} is reserved and cannot name an operator")
            self.i += 2
            a = self.term()
            self.expect(")")
            return Apply(name, a) if nxt.kind == "(" else ApplyInv(name, a)
        self.i += 1
        for var, sort in reversed(self.scope):
            if var == name:
                return Var(name, sort)
        if name in RESERVED:
            self.error(f"{name!r} is reserved", tok)
        self.error(f"unbound variable {name!r}", tok)

    def signed_int(self) -> int:
        neg = self.accept("-")
        tok = self.expect("num")
        if not tok.text.isdigit() or tok.text == "0":
            self.error("word letters are nonzero integers", tok)
        return -int(tok.text) if neg else int(tok.text)

    def gaussian(self) -> FieldScalar:
        """rational | [rational] 'i' | rational ('+'|'-') [rational] 'i'"""
        re_part, im_part = Fraction(0), Fraction(0)
        sign = -1 if self.accept("-") else 1
        if self.at_ident("i"):
            self.i += 1
            return FieldScalar(0, sign)
        v = sign * self.number()
        if self.at_ident("i"):
            self.i += 1
            return FieldScalar(0, v)
        re_part = v
        if self.tok.kind in ("+", "-"):
            sign = 1 if self.tok.kind == "+" else -1
            self.i += 1
            if self.at_ident("i"):
                self.i += 1
                return FieldScalar(re_part, sign)
            im_part = sign * self.number()
            if not self.at_ident("i"):
                self.error("expected 'i' after the imaginary part")
            self.i += 1
        return FieldScalar(re_part, im_part)


def parse(src: str, free: dict[str, Sort] | None = None) -> Formula:
    """Parse formula text; ``free`` declares sorts of variables left unbound."""
    p = _Parser(src, free)
    if p.tok.kind == "eof":
        p.error("empty formula")
    f = p.formula()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r} after the formula")
    try:
        return infer_ranges(f)
    except FormulaTypeError as exc:
        # sort errors have no position of their own; report at end of input
        raise FormulaSyntaxError(f"type error: {exc}", p.tok.line, p.tok.col) from exc


def parse_term(src: str, free: dict[str, Sort] | None = None) -> Term:
    p = _Parser(src, free)
    t = p.term()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r} after the term")
    t.sort  # noqa: B018
    return t


def parse_file(path) -> Formula:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


# ---------------------------------------------------------------------------
# printing


def format_rational(q: Fraction) -> str:
    return str(Fraction(q))


def format_gaussian(c: FieldScalar) -> str:
    re_part, im_part = c.a, c.b
    if im_part == 0:
        return format_rational(re_part)
    im = f"{format_rational(abs(im_part))}i"
    if re_part == 0:
        return im if im_part > 0 else "-" + im
    return f"{format_rational(re_part)}{'+' if im_part > 0 else '-'}{im}"


def print_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Zero):
        return f"0:{t.zero_sort}"
    if isinstance(t, Add):
        return f"add({print_term(t.left)}, {print_term(t.right)})"
    if isinstance(t, Sub):
        return f"sub({print_term(t.left)}, {print_term(t.right)})"
    if isinstance(t, Scale):
        return f"scale({format_gaussian(t.coeff)}, {print_term(t.arg)})"
    if isinstance(t, Apply):
        return f"{t.op}({print_term(t.arg)})"
    if isinstance(t, ApplyInv):
        return f"{t.op}~({print_term(t.arg)})"
    if isinstance(t, Qu):
        return f"qu({print_term(t.arg)})"
    if isinstance(t, Const):
        return f"${t.name}"
    raise TypeError(f"not a term: {t!r}")


def _operand(f: Formula) -> str:
    text = print_formula(f)
    if isinstance(f, (TruncSub, Prod, Sup, Inf)) or (isinstance(f, RatConst) and f.value < 0):
        return f"({text})"
    return text


def print_formula(f: Formula) -> str:
    if isinstance(f, D):
        return f"d({print_term(f.left)}, {print_term(f.right)})"
    if isinstance(f, ReIP):
        return f"reip({print_term(f.left)}, {print_term(f.right)})"
    if isinstance(f, ImIP):
        return f"imip({print_term(f.left)}, {print_term(f.right)})"
    if isinstance(f, RatConst):
        return format_rational(f.value)
    if isinstance(f, Half):
        return f"half({print_formula(f.arg)})"
    if isinstance(f, Neg):
        return f"not[{format_rational(f.cap)}]({print_formula(f.arg)})"
    if isinstance(f, TruncAdd):
        return f"plus[{format_rational(f.cap)}]({print_formula(f.left)}, {print_formula(f.right)})"
    if isinstance(f, (Min, Max, AbsDiff)):
        name = {Min: "min", Max: "max", AbsDiff: "adiff"}[type(f)]
        return f"{name}({print_formula(f.left)}, {print_formula(f.right)})"
    if isinstance(f, TruncSub):
        return f"{_operand(f.left)} -. {_operand(f.right)}"
    if isinstance(f, Prod):
        return f"{_operand(f.left)} * {_operand(f.right)}"
    if isinstance(f, (Sup, Inf)):
        kw = "sup" if isinstance(f, Sup) else "inf"
        return f"{kw} {f.var}:{f.var_sort} . {print_formula(f.body)}"
    raise TypeError(f"not a formula: {f!r}")


def print_(f) -> str:
    return print_formula(f) if isinstance(f, Formula) else print_term(f)


__all__ = [
    "FormulaSyntaxError",
    "parse",
    "parse_term",
    "parse_file",
    "print_formula",
    "print_term",
    "tokenize",
]
