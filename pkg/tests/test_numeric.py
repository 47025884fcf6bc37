import cmath
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynhilbert.numeric import (
    I,
    INV_SQRT2,
    ONE,
    SQRT2,
    ZERO,
    CMatrix,
    FieldScalar,
    MatrixError,
    RatInterval,
    charpoly,
    determinant,
    field_arith,
    interval_arith,
    op_norm,
    op_norm_squared,
    unitary_eigs,
    vector_norm2,
)
from dynhilbert.model import local_gate

small = st.fractions(min_value=-5, max_value=5, max_denominator=12)
scalars = st.builds(FieldScalar, small, small, small, small)
nonzero = scalars.filter(lambda x: not x.is_zero())


# -- field ----------------------------------------------------------------


def test_sqrt2_over_2_squared_is_half():
    h = SQRT2 / 2
    assert field_arith(h, h, "mul") == FieldScalar(Fraction(1, 2))


def test_conj_i():
    assert field_arith(I, None, "conj") == FieldScalar(0, -1)


def test_one_plus_sqrt2_times_its_conjugate_unit():
    # (1 + sqrt 2)(-1 + sqrt 2) = 2 - 1
    assert (ONE + SQRT2) * (SQRT2 - 1) == ONE


def test_encode_parse_roundtrip_and_plain_rational():
    x = FieldScalar(Fraction(1, 3), -2, Fraction(5, 7), 0)
    assert FieldScalar.parse(x.encode()) == x
    assert FieldScalar.parse("-3/4") == FieldScalar(Fraction(-3, 4))
    with pytest.raises(ValueError):
        FieldScalar.parse("1,2")


def test_division_by_zero_rejected():
    with pytest.raises(ArithmeticError):
        ONE / ZERO


@given(scalars, scalars, scalars)
def test_field_ring_laws(x, y, z):
    assert (x + y) + z == x + (y + z)
    assert (x * y) * z == x * (y * z)
    assert x * (y + z) == x * y + x * z


@given(nonzero)
def test_field_inverse(x):
    assert x * x.inverse() == ONE


@given(scalars)
def test_modulus_squared_is_real(x):
    m = x.abs2()
    assert m.is_real()
    assert m.sign() >= 0
    assert math.isclose(float(m), abs(complex(x)) ** 2, rel_tol=1e-9, abs_tol=1e-12)


@given(scalars, scalars)
def test_order_agrees_with_floats_on_reals(x, y):
    a, b = x.real_part(), y.real_part()
    if abs(float(a) - float(b)) > 1e-9:
        assert (a < b) == (float(a) < float(b))


# -- intervals ------------------------------------------------------------


def test_sqrt_enclosure_width():
    r = RatInterval(2, 2).sqrt(Fraction(1, 10**9))
    assert r.lo <= Fraction(math.sqrt(2)) <= r.hi
    assert r.width <= Fraction(1, 10**9) * 2
    assert r.lo * r.lo <= 2 <= r.hi * r.hi


intervals = st.tuples(small, small).map(lambda p: RatInterval(min(p), max(p)))


@settings(max_examples=300)
@given(intervals, intervals, st.sampled_from(["add", "sub", "mul", "min", "max"]),
       st.fractions(0, 1), st.fractions(0, 1))
def test_interval_ops_contain_point_results(x, y, op, s, t):
    p = x.lo + s * x.width
    q = y.lo + t * y.width
    exact = {"add": p + q, "sub": p - q, "mul": p * q, "min": min(p, q), "max": max(p, q)}[op]
    assert exact in interval_arith(x, y, op)


@given(intervals.filter(lambda r: r.lo >= 0), st.fractions(0, 1))
def test_interval_sqrt_contains(x, s):
    p = x.lo + s * x.width
    r = interval_arith(x, None, "sqrt")
    assert r.lo * r.lo <= p or r.lo <= 0
    assert p <= r.hi * r.hi


# -- matrices -------------------------------------------------------------


def test_op_norm_identity():
    r = op_norm(CMatrix.identity(3), Fraction(1, 100))
    assert 1 in r and r.width <= Fraction(1, 100)


def test_op_norm_diagonal():
    r = op_norm(CMatrix.diag([0, -2]), Fraction(1, 100))
    assert 2 in r and r.width <= Fraction(1, 100)
    assert op_norm_squared(CMatrix.diag([0, -2])) == RatInterval(4, 4)


def test_op_norm_nilpotent():
    r = op_norm(CMatrix([[0, 2], [0, 0]]), Fraction(1, 100))
    assert 2 in r and r.width <= Fraction(1, 100)


def test_unitary_check_is_exact():
    assert local_gate("H").is_unitary()
    almost = CMatrix([[1, 0], [0, FieldScalar(Fraction(999999, 1000000))]])
    assert not almost.is_unitary()


def test_eigs_diag_one_i():
    cl = unitary_eigs(CMatrix.diag([1, I]), Fraction(1, 100))
    assert sorted(c.multiplicity for c in cl) == [1, 1]
    angles = sorted(float(c.angle.mid) for c in cl)
    assert abs(angles[0]) < 0.01 and abs(angles[1] - math.pi / 2) < 0.01


def test_eigs_hadamard():
    cl = unitary_eigs(local_gate("H"), Fraction(1, 100))
    mids = sorted(float(c.angle.mid) % (2 * math.pi) for c in cl)
    assert [c.multiplicity for c in cl] == [1, 1]
    assert abs(mids[0]) < 0.01 and abs(mids[1] - math.pi) < 0.01


def test_eigs_identity_cluster():
    cl = unitary_eigs(CMatrix.identity(4), Fraction(1, 100))
    assert len(cl) == 1 and cl[0].multiplicity == 4 and 0 in cl[0].angle


def test_degenerate_inputs_rejected():
    with pytest.raises(MatrixError):
        CMatrix([])
    with pytest.raises((MatrixError, ValueError)):
        unitary_eigs(CMatrix([[1, 0]]), Fraction(1, 100))


def test_charpoly_and_determinant():
    h = local_gate("H")
    assert determinant(h) == FieldScalar(-1)
    # t^2 - 1
    assert charpoly(h)[0] == ONE or charpoly(h)[-1] == ONE


gate_names = st.sampled_from(["H", "K", "X"])


@st.composite
def one_qubit_unitaries(draw):
    u = CMatrix.identity(2)
    for g in draw(st.lists(gate_names, min_size=1, max_size=6)):
        u = local_gate(g) @ u
    return u


@settings(max_examples=25, deadline=None)
@given(one_qubit_unitaries())
def test_eigenvalue_product_encloses_determinant(u):
    cl = unitary_eigs(u, Fraction(1, 1000))
    lo = sum(c.multiplicity * c.angle.lo for c in cl)
    hi = sum(c.multiplicity * c.angle.hi for c in cl)
    det = complex(determinant(u))
    # det = exp(i * sum of angles), compare on the circle with the interval's width as slack
    mid = float((lo + hi) / 2)
    assert abs(cmath.exp(1j * mid) - det) <= float(hi - lo) / 2 + 1e-9


entries = st.builds(lambda a, b: FieldScalar(a, b), small, small)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.lists(entries, min_size=2, max_size=2), min_size=2, max_size=2),
       st.lists(entries, min_size=2, max_size=2))
def test_operator_norm_bounds_image_norm(rows, vec):
    a = CMatrix(rows)
    nrm = op_norm(a, Fraction(1, 1000))
    av_sq = vector_norm2(a.apply(vec))
    v_sq = vector_norm2(vec)
    # |Av|^2 <= |A|^2 |v|^2 in exact arithmetic for the upper end
    assert av_sq.real_part().a <= nrm.hi * nrm.hi * v_sq.real_part().a


def test_numpy_agrees_on_gates():
    for name in ("H", "K", "X"):
        g = local_gate(name)
        assert np.allclose(g.to_numpy() @ g.to_numpy().conj().T, np.eye(2))


def test_inv_sqrt2_constant():
    assert INV_SQRT2 * INV_SQRT2 == FieldScalar(Fraction(1, 2))
