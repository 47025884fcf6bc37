"""Stock sentences used by the CLI, the tests and the acceptance suite."""

from __future__ import annotations

from . import formula as F
from .parser import parse


def _fold(op: str, parts: list[str]) -> str:
    out = parts[0]
    for p in parts[1:]:
        out = f"{op}({out}, {p})"
    return out


def dimension_axiom_text(n: int) -> str:
    """Value 0 on spaces of dimension n, positive on larger ones.

    Some unit y1..yn must satisfy Parseval for every x in the ball:
    |x|^2 = sum_i |<x, y_i>|^2.
    """
    if n < 1:
        raise ValueError("n must be positive")
    ys = [f"y{i}" for i in range(1, n + 1)]
    units = _fold("max", [f"adiff(reip({y}, {y}), 1)" for y in ys])
    sq = [f"plus[2](reip(x, {y}) * reip(x, {y}), imip(x, {y}) * imip(x, {y}))" for y in ys]
    total = sq[0]
    for k, s in enumerate(sq[1:], start=2):
        total = f"plus[{2 * k}]({total}, {s})"
    body = f"max({units}, sup x:B1 . adiff(reip(x, x), {total}))"
    for y in reversed(ys):
        body = f"inf {y}:B1 . {body}"
    return body


def dimension_axiom(n: int) -> F.Formula:
    return parse(dimension_axiom_text(n))


def displacement(op: str = "U1") -> F.Formula:
    return parse(f"sup v:B1 . d({op}(v), v)")
