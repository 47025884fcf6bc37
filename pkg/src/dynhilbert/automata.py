"""Measure-once quantum automata over the operators of a model.

Letter k applies ``Uk``; a word is read left to right starting from e_0 and
accepted with probability |P U_{w_k} ... U_{w_1} e_0|^2.  All values are exact
elements of Q(sqrt 2).  Searches only cover words up to a given length, so
their answers are evidence about that bounded language and nothing more.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .model import Model, ModelError, Vector, basis_vector
from .numeric.field import ZERO, FieldScalar
from .numeric.linalg import vector_norm2

Word = tuple[int, ...]


class AutomatonError(ValueError):
    pass


@dataclass(frozen=True)
class AutomatonSpec:
    model: Model
    final: tuple[int, ...]  # diagonal of P
    threshold: Fraction = Fraction(0)
    start: int = 0

    def __post_init__(self):
        final = tuple(int(x) for x in self.final)
        if len(final) != self.model.dim:
            raise AutomatonError(f"projection has {len(final)} entries, model dimension is {self.model.dim}")
        if any(x not in (0, 1) for x in final):
            raise AutomatonError("projection diagonal must be 0/1")
        if not 0 <= self.start < self.model.dim:
            raise AutomatonError("start state out of range")
        object.__setattr__(self, "final", final)
        object.__setattr__(self, "threshold", Fraction(self.threshold))
        if set(self.model.operators) != {f"U{k}" for k in self.letters}:
            raise AutomatonError("operators must be named U1..Ut")

    @classmethod
    def from_bits(cls, model: Model, bits: str, threshold=0) -> "AutomatonSpec":
        return cls(model, tuple(int(c) for c in bits.strip()), Fraction(threshold))

    @property
    def letters(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.model.operators) + 1))

    def initial(self) -> Vector:
        return basis_vector(self.model.dim, self.start)

    def step(self, state: Vector, letter: int) -> Vector:
        try:
            return self.model.operator(f"U{letter}").apply(state)
        except ModelError:
            raise AutomatonError(f"letter {letter} is outside the alphabet 1..{len(self.letters)}") from None

    def accept_value(self, state: Vector) -> FieldScalar:
        out = ZERO
        for keep, x in zip(self.final, state):
            if keep:
                out = out + x.abs2()
        return out


def run(a: AutomatonSpec, word: Sequence[int]) -> Vector:
    state = a.initial()
    for k in word:
        state = a.step(state, int(k))
    return state


def acc(a: AutomatonSpec, word: Sequence[int]) -> FieldScalar:
    """Exact acceptance probability of ``word`` (letters applied left to right)."""
    return a.accept_value(run(a, word))


def _levels(a: AutomatonSpec, max_len: int):
    """Breadth-first, lexicographic within each length; repeated states are not expanded
    again since they lead to the same values as their first (shorter or earlier) occurrence."""
    seen = set()
    level = [((), a.initial())]
    for length in range(max_len + 1):
        fresh = []
        for word, state in level:
            if state in seen:
                continue
            seen.add(state)
            fresh.append((word, state))
            yield word, state
        if length == max_len:
            return
        level = [(word + (k,), a.step(state, k)) for word, state in fresh for k in a.letters]


@dataclass(frozen=True)
class SearchResult:
    word: Word | None
    value: FieldScalar | None
    max_len: int
    explored: int

    def to_json(self) -> dict:
        return {
            "word": None if self.word is None else list(self.word),
            "acc": None if self.value is None else self.value.encode(),
            "acc_decimal": None if self.value is None else float(self.value),
            "bounded_to_length": self.max_len,
            "explored_states": self.explored,
        }


def exists_accepted(a: AutomatonSpec, max_len: int) -> SearchResult:
    """Shortest, then lexicographically least, word with ACC > threshold, if any has length <= max_len."""
    if max_len < 0:
        raise AutomatonError("max_len must be non-negative")
    n = 0
    for word, state in _levels(a, max_len):
        n += 1
        v = a.accept_value(state)
        if (v - a.threshold).sign() > 0:
            return SearchResult(word, v, max_len, n)
    return SearchResult(None, None, max_len, n)


@dataclass(frozen=True)
class Margin:
    margin: FieldScalar
    word: Word
    value: FieldScalar
    max_len: int

    def to_json(self) -> dict:
        return {
            "margin": self.margin.encode(),
            "margin_text": str(self.margin),
            "margin_decimal": float(self.margin),
            "word": list(self.word),
            "acc": self.value.encode(),
            "bounded_to_length": self.max_len,
        }


def isolation_margin(a: AutomatonSpec, max_len: int) -> Margin:
    """Exact min of |ACC_w - threshold| over words of length <= max_len, with the first minimizer."""
    if max_len < 0:
        raise AutomatonError("max_len must be non-negative")
    best = None
    for word, state in _levels(a, max_len):
        v = a.accept_value(state)
        gap = abs(v - a.threshold)
        if best is None or gap < best.margin:
            best = Margin(gap, word, v, max_len)
            if gap.is_zero():
                break
    return best


def norm_defect(a: AutomatonSpec, word: Sequence[int]) -> FieldScalar:
    """|state|^2 - 1 after reading ``word``; zero for exactly unitary letters."""
    return vector_norm2(run(a, word)) - 1
