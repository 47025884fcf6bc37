"""Finite-dimensional dynamical (optionally marked) Hilbert spaces.

The marked basis is always the standard basis: label k is sent to e_k.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .numeric.field import INV_SQRT2, ONE, ZERO, FieldScalar
from .numeric.linalg import CMatrix, MatrixError, vector_norm2


class ModelError(ValueError):
    pass


Vector = tuple[FieldScalar, ...]


@dataclass(frozen=True)
class Model:
    dim: int
    operators: Mapping[str, CMatrix] = field(default_factory=dict)
    marked: tuple[str, ...] | None = None
    constants: Mapping[str, Vector] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.dim, int) or self.dim < 1:
            raise ModelError(f"dimension must be a positive integer, got {self.dim!r}")
        ops = dict(self.operators)
        for name, u in ops.items():
            if u.shape != (self.dim, self.dim):
                raise ModelError(f"operator {name} has shape {u.shape}, expected {(self.dim, self.dim)}")
            bad = u.unitarity_defect()
            if bad is not None:
                i, j, val = bad
                raise ModelError(f"operator {name} is not unitary: (U*U - I) at cell ({i},{j}) is {val}")
        object.__setattr__(self, "operators", ops)
        if self.marked is not None:
            labels = tuple(str(x) for x in self.marked)
            if len(labels) != self.dim:
                raise ModelError(f"{len(labels)} marked labels for dimension {self.dim}")
            if len(set(labels)) != len(labels):
                raise ModelError("marked labels must be distinct")
            object.__setattr__(self, "marked", labels)
        consts = {}
        for name, vec in dict(self.constants).items():
            vec = tuple(FieldScalar.coerce(x) if not isinstance(x, str) else FieldScalar.parse(x) for x in vec)
            if len(vec) != self.dim:
                raise ModelError(f"constant {name} has length {len(vec)}, expected {self.dim}")
            if (vector_norm2(vec) - 1).sign() > 0:
                raise ModelError(f"constant {name} has norm > 1")
            consts[name] = vec
        object.__setattr__(self, "constants", consts)

    def __hash__(self):
        return hash((self.dim, tuple(sorted(self.operators)), self.marked))

    def operator(self, name: str) -> CMatrix:
        try:
            return self.operators[name]
        except KeyError:
            raise ModelError(f"operator {name!r} is not bound in this model") from None

    def constant(self, name: str) -> Vector:
        try:
            return self.constants[name]
        except KeyError:
            raise ModelError(f"constant {name!r} is not bound in this model") from None

    def with_operators(self, ops: Mapping[str, CMatrix]) -> "Model":
        return Model(self.dim, dict(ops), self.marked, self.constants)

    def to_json(self) -> dict:
        out: dict = {"dim": self.dim, "operators": {k: v.encode() for k, v in sorted(self.operators.items())}}
        if self.marked is not None:
            out["marked"] = list(self.marked)
        out["constants"] = {k: [x.encode() for x in v] for k, v in sorted(self.constants.items())}
        return out


def model_from_json(data: dict) -> Model:
    if not isinstance(data, dict) or "dim" not in data:
        raise ModelError("model file needs an object with a 'dim' field")
    try:
        ops = {name: CMatrix.parse(rows) for name, rows in data.get("operators", {}).items()}
        consts = {name: tuple(FieldScalar.parse(x) for x in vec) for name, vec in data.get("constants", {}).items()}
    except (ValueError, TypeError, AttributeError, MatrixError) as exc:
        raise ModelError(f"malformed number in model file: {exc}") from exc
    return Model(data["dim"], ops, data.get("marked"), consts)


def load_model(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"model file is not valid JSON: {exc}") from exc
    return model_from_json(data)


def dumps_model(m: Model) -> str:
    return json.dumps(m.to_json(), indent=1, sort_keys=True) + "\n"


def save_model(m: Model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(m))


# ---------------------------------------------------------------------------
# gates

_LOCAL = {
    "K": CMatrix([[ONE, ZERO], [ZERO, FieldScalar(0, 1)]]),
    "H": CMatrix([[INV_SQRT2, INV_SQRT2], [INV_SQRT2, -INV_SQRT2]]),
    "X": CMatrix([[ZERO, ONE], [ONE, ZERO]]),
}


def _controlled_not(controls: int) -> CMatrix:
    n = 2 ** (controls + 1)
    rows = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        j = i ^ 1 if i >= n - 2 else i
        rows[j][i] = ONE
    return CMatrix(rows)


GATE_ARITY = {"K": 1, "H": 1, "X": 1, "CNOT": 2, "TOFFOLI": 3}


def local_gate(name: str) -> CMatrix:
    if name in _LOCAL:
        return _LOCAL[name]
    if name == "CNOT":
        return _controlled_not(1)
    if name == "TOFFOLI":
        return _controlled_not(2)
    raise ModelError(f"unknown gate {name!r}")


def gate(name: str, registers: Sequence[int], total_qubits: int) -> CMatrix:
    """The 2**total_qubits unitary acting as ``name`` on the given 1-based registers.

    Qubit 1 is the most significant bit, so |10> has index 2.  Controls come
    first in ``registers``; the last register is the target.
    """
    name = name.upper()
    if name not in GATE_ARITY:
        raise ModelError(f"unknown gate {name!r}")
    regs = list(registers)
    if len(regs) != GATE_ARITY[name]:
        raise ModelError(f"{name} acts on {GATE_ARITY[name]} registers, got {len(regs)}")
    if len(set(regs)) != len(regs):
        raise ModelError(f"register collision in {regs}")
    if total_qubits < 1 or any(r < 1 or r > total_qubits for r in regs):
        raise ModelError(f"registers {regs} out of range for {total_qubits} qubits")
    g = local_gate(name)
    k = len(regs)
    size = 2**total_qubits
    shifts = [total_qubits - r for r in regs]
    mask = sum(1 << s for s in shifts)
    rows = [[ZERO] * size for _ in range(size)]
    for col in range(size):
        local_in = 0
        for s in shifts:
            local_in = (local_in << 1) | ((col >> s) & 1)
        rest = col & ~mask
        for local_out in range(2**k):
            val = g[local_out, local_in]
            if val.is_zero():
                continue
            row = rest
            for pos, s in enumerate(shifts):
                if (local_out >> (k - 1 - pos)) & 1:
                    row |= 1 << s
            rows[row][col] = val
    return CMatrix(rows)


def circuit(steps: Sequence[tuple[str, Sequence[int]]], total_qubits: int) -> CMatrix:
    """Product of gates, applied in the listed order (first step acts first)."""
    u = CMatrix.identity(2**total_qubits)
    for name, regs in steps:
        u = gate(name, regs, total_qubits) @ u
    return u


def random_circuit(rng, total_qubits: int, length: int) -> tuple[CMatrix, list]:
    """A random product of library gates; ``rng`` is a ``random.Random``."""
    names = [g for g, k in GATE_ARITY.items() if k <= total_qubits]
    steps = []
    for _ in range(length):
        name = rng.choice(names)
        regs = rng.sample(range(1, total_qubits + 1), GATE_ARITY[name])
        steps.append((name, regs))
    return circuit(steps, total_qubits), steps


def basis_vector(dim: int, k: int) -> Vector:
    return tuple(ONE if i == k else ZERO for i in range(dim))


# ---------------------------------------------------------------------------
# finite structures with two equivalence relations


@dataclass(frozen=True)
class EqStructure:
    size: int
    e1: tuple[tuple[int, ...], ...]
    e2: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.size < 1:
            raise ModelError("structure size must be positive")
        for name in ("e1", "e2"):
            parts = tuple(tuple(sorted(int(x) for x in block)) for block in getattr(self, name))
            parts = tuple(sorted(parts))
            flat = [x for block in parts for x in block]
            if sorted(flat) != list(range(1, self.size + 1)) or any(not b for b in parts):
                raise ModelError(f"{name} is not a partition of 1..{self.size}")
            object.__setattr__(self, name, parts)

    def classes(self, which: int) -> list[int]:
        """Class index (0-based, in block order) of each element 1..size."""
        parts = self.e1 if which == 1 else self.e2
        out = [0] * self.size
        for idx, block in enumerate(parts):
            for x in block:
                out[x - 1] = idx
        return out

    def related(self, which: int, x: int, y: int) -> bool:
        c = self.classes(which)
        return c[x - 1] == c[y - 1]

    def to_json(self) -> dict:
        return {"size": self.size, "E1": [list(b) for b in self.e1], "E2": [list(b) for b in self.e2]}


def structure_from_json(data: dict) -> EqStructure:
    try:
        return EqStructure(int(data["size"]), tuple(map(tuple, data["E1"])), tuple(map(tuple, data["E2"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed structure: {exc}") from exc


def set_partitions(n: int) -> list[tuple[tuple[int, ...], ...]]:
    """All partitions of {1..n}, in a fixed order."""
    out: list[list[list[int]]] = [[]]
    for x in range(1, n + 1):
        nxt = []
        for p in out:
            for i in range(len(p)):
                nxt.append([b + [x] if j == i else b for j, b in enumerate(p)])
            nxt.append(p + [[x]])
        out = nxt
    return [tuple(tuple(b) for b in p) for p in out]


def all_structures(max_size: int) -> list[EqStructure]:
    out = []
    for n in range(1, max_size + 1):
        parts = set_partitions(n)
        for p1 in parts:
            for p2 in parts:
                out.append(EqStructure(n, p1, p2))
    return out


# ---------------------------------------------------------------------------
# interpretation models for structures with two equivalence relations

# coefficient of a basis vector in a_i, by class index; all pairwise gaps are >= 1/2
CLASS_VALUES = (Fraction(1, 2), Fraction(-1, 2), Fraction(0))
SEPARATION = Fraction(3, 8)
B_OVERLAP = Fraction(1, 8)
# tan of half the rotation angle of the global phases U3, U4, U5
PHASE_T = {"U3": Fraction(1, 32), "U4": Fraction(1, 16), "U5": Fraction(1, 10)}


def class_vector(s: EqStructure, which: int) -> Vector:
    """Real vector whose coefficients are constant exactly on the classes of E_which."""
    if s.size == 1:
        return (ONE,)
    return tuple(FieldScalar(CLASS_VALUES[c]) for c in s.classes(which))


def _labels(s: EqStructure) -> tuple[str, ...]:
    return tuple(str(k) for k in range(1, s.size + 1))


def build_marked_constants(s: EqStructure) -> tuple[Model, Fraction]:
    """Marked space with constants a1, a2, b1, b2 encoding ``s``.

    Returns the model and r: coefficients of a_i in different classes differ by
    more than r, while |<b1, b2>| = 1/8 < r.
    """
    n = s.size
    b1 = basis_vector(n, 0)
    b2 = tuple(x * B_OVERLAP for x in b1)
    consts = {"a1": class_vector(s, 1), "a2": class_vector(s, 2), "b1": b1, "b2": b2}
    return Model(n, {}, _labels(s), consts), SEPARATION


def phase(t: Fraction) -> FieldScalar:
    """The unit complex number (1 - t^2 + 2ti) / (1 + t^2)."""
    d = 1 + t * t
    return FieldScalar((1 - t * t) / d, 2 * t / d)


def phase_displacement(t: Fraction) -> float:
    """|1 - phase(t)|, the displacement of the global phase by phase(t)."""
    return float(2 * t) / float(1 + t * t) ** 0.5


def reflection(a: Vector) -> CMatrix:
    """2 a a* / |a|^2 - I: fixes the line through a and negates its complement."""
    n = len(a)
    norm2 = vector_norm2(a)
    rows = [[(a[i] * a[j].conj()) * 2 / norm2 - (ONE if i == j else ZERO) for j in range(n)] for i in range(n)]
    return CMatrix(rows)


def build_dynamical_interpretation(s: EqStructure) -> Model:
    """Marked space with U1..U5 encoding ``s``.

    U1, U2 are reflections fixing exactly the lines through the class vectors
    of E1, E2 (every other eigenvalue is -1).  U3, U4, U5 are global phases with
    displacements of about 1/16, 1/8 and 1/5.
    """
    n = s.size
    ops = {"U1": reflection(class_vector(s, 1)), "U2": reflection(class_vector(s, 2))}
    for name, t in PHASE_T.items():
        ops[name] = CMatrix.identity(n).scale(phase(t))
    return Model(n, ops, _labels(s))
