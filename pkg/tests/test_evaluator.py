import random
from fractions import Fraction

import pytest

from dynhilbert import formula as F
from dynhilbert.evaluator import BudgetExceeded, EvaluationError, eval_certified, eval_heuristic
from dynhilbert.model import Model, local_gate, random_circuit
from dynhilbert.numeric import CMatrix, FieldScalar, unitary_eigs
from dynhilbert.parser import parse
from dynhilbert.sentences import dimension_axiom

Z = CMatrix.diag([1, -1])
H = local_gate("H")
EPS = Fraction(1, 20)


def spectral_displacement(u: CMatrix):
    """Interval for max_j |1 - lambda_j| from the eigenvalue enclosures."""
    import mpmath

    lo, hi = 0.0, 0.0
    for c in unitary_eigs(u, Fraction(1, 10**6)):
        vals = [abs(1 - mpmath.exp(1j * mpmath.mpf(float(t)))) for t in (c.angle.lo, c.angle.hi)]
        lo, hi = max(lo, float(min(vals))), max(hi, float(max(vals)))
    return lo - 1e-9, hi + 1e-9


def test_self_distance_is_zero():
    r = eval_certified(parse("sup v:B1 . d(v, v)"), Model(2), EPS)
    assert r.lo <= 0 <= r.hi <= EPS


def test_displacement_of_z():
    r = eval_certified(parse("sup v:B1 . d(U(v), v)"), Model(2, {"U": Z}), EPS)
    assert 2 in r.interval and r.interval.width <= EPS


def test_inf_of_norm_square_is_zero():
    r = eval_certified(parse("inf v:B1 . reip(v, v)"), Model(3), EPS)
    assert 0 in r.interval


@pytest.mark.parametrize("closed_forms", [True, False])
def test_pure_branch_and_bound_matches_spectrum(closed_forms):
    rng = random.Random(5)
    f = parse("sup v:B1 . d(U1(v), v)")
    for _ in range(4):
        u, _ = random_circuit(rng, 1, 5)
        r = eval_certified(f, Model(2, {"U1": u}), EPS, closed_forms=closed_forms)
        lo, hi = spectral_displacement(u)
        assert r.lo <= hi and lo <= r.hi
        assert r.interval.width <= EPS


def test_dimension_axiom_two_dimensional():
    r = eval_certified(dimension_axiom(2), Model(2), Fraction(1, 50))
    assert r.lo >= 0 and r.hi <= Fraction(1, 50)


def test_budget_exhaustion_raises():
    with pytest.raises(BudgetExceeded):
        eval_certified(parse("sup v:B1 . sup w:B1 . reip(U1(v), w) * reip(v, w)"),
                       Model(3, {"U1": CMatrix.identity(3)}), Fraction(1, 10**6), budget=50)


def test_heuristic_constant():
    r = eval_heuristic(parse("1/2"), Model(2), budget=1)
    assert r.lo == r.hi == Fraction(1, 2)


def test_heuristic_hadamard_displacement():
    r = eval_heuristic(parse("sup v:B1 . d(U(v), v)"), Model(2, {"U": H}), budget=10**4)
    assert r.lo >= 2 - Fraction(1, 100)


FORMULAS = [
    "sup v:B1 . d(U1(v), v)",
    "inf v:B1 . d(U1(v), v)",
    "sup v:B1 . reip(U1(v), v)",
    "inf v:B1 . reip(U1(v), v)",
    "sup v:B1 . imip(U1(v), v)",
    "inf v:B1 . imip(U1(v), v)",
    "sup v:B1 . half(d(U1(v), U1~(v)))",
    "sup v:B1 . min(d(U1(v), v), 1)",
    "sup v:B1 . max(reip(v, v), d(U1(v), v))",
    "sup v:B1 . reip(v, v) -. d(U1(v), v)",
]


def _models():
    yield Model(1, {"U1": CMatrix([[FieldScalar(0, 1)]])})
    for g in ("H", "K", "X"):
        yield Model(2, {"U1": local_gate(g)})
    yield Model(3, {"U1": CMatrix([[0, 1, 0], [0, 0, 1], [1, 0, 0]])})


def test_heuristic_and_certified_consistent_on_battery():
    n = 0
    for m in _models():
        for src in FORMULAS:
            f = parse(src)
            c = eval_certified(f, m, Fraction(1, 10))
            h = eval_heuristic(f, m, budget=2000)
            assert c.interval.width <= Fraction(1, 10)
            assert h.lo <= c.hi and c.lo <= h.hi
            n += 1
    assert n == 50


def test_results_are_deterministic_across_workers():
    f = parse("sup v:B1 . max(reip(v, v), d(U1(v), v))")
    m = Model(2, {"U1": H})
    a = eval_certified(f, m, Fraction(1, 50), workers=1).to_json()
    b = eval_certified(f, m, Fraction(1, 50), workers=4).to_json()
    assert a == b


def test_range_soundness_on_random_models():
    rng = random.Random(11)
    for _ in range(6):
        u, _ = random_circuit(rng, 1, 4)
        m = Model(2, {"U1": u})
        for src in FORMULAS[:6]:
            f = parse(src)
            r = eval_certified(f, m, Fraction(1, 10))
            assert f.range.lo - Fraction(1, 10) <= r.lo and r.hi <= f.range.hi + Fraction(1, 10)


def test_open_formula_rejected():
    with pytest.raises((EvaluationError, ValueError)):
        eval_certified(parse("d(v, v)", {"v": F.Ball(1)}), Model(1), EPS)
