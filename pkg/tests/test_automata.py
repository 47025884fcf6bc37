from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynhilbert.automata import (
    AutomatonError,
    AutomatonSpec,
    acc,
    exists_accepted,
    isolation_margin,
    norm_defect,
    run,
)
from dynhilbert.model import Model, gate, local_gate
from dynhilbert.numeric import CMatrix, FieldScalar

HALF = Fraction(1, 2)


def one_letter(name, bits="01", lam=0):
    return AutomatonSpec.from_bits(Model(2, {"U1": local_gate(name)}), bits, lam)


def test_x_flip_accepts():
    assert acc(one_letter("X"), [1]) == FieldScalar(1)


def test_empty_word_in_final_state():
    assert acc(one_letter("X", "10"), []) == FieldScalar(1)


def test_hadamard_half():
    assert acc(one_letter("H"), [1]) == FieldScalar(HALF)
    assert acc(one_letter("H"), [1, 1]) == FieldScalar(0)


def test_search_x():
    r = exists_accepted(one_letter("X", lam=HALF), 1)
    assert r.word == (1,) and r.to_json()["bounded_to_length"] == 1


def test_search_identity_never_accepts():
    a = AutomatonSpec.from_bits(Model(2, {"U1": CMatrix.identity(2)}), "01", 0)
    assert exists_accepted(a, 5).word is None


@pytest.mark.parametrize("name", ["X", "H", "K"])
def test_threshold_one_is_never_exceeded(name):
    assert exists_accepted(one_letter(name, lam=1), 4).word is None


def test_margin_x():
    for n in range(11):
        assert isolation_margin(one_letter("X", lam=HALF), n).margin == FieldScalar(HALF)


def test_margin_empty_word():
    m = isolation_margin(one_letter("X", lam=0), 0)
    assert m.margin == FieldScalar(0) and m.word == ()


def test_margin_hadamard():
    a = one_letter("H", lam=HALF)
    m = isolation_margin(a, 2)
    assert m.margin == FieldScalar(0) and m.word == (1,)
    assert isolation_margin(a, 0).margin == FieldScalar(HALF)


def test_bad_specs():
    m = Model(2, {"U1": local_gate("H")})
    with pytest.raises(AutomatonError):
        AutomatonSpec.from_bits(m, "011")
    with pytest.raises(AutomatonError):
        AutomatonSpec.from_bits(m, "02")
    with pytest.raises(AutomatonError):
        AutomatonSpec.from_bits(Model(2, {"A": local_gate("H")}), "01")
    with pytest.raises(AutomatonError):
        acc(AutomatonSpec.from_bits(m, "01"), [2])
    with pytest.raises(AutomatonError):
        exists_accepted(AutomatonSpec.from_bits(m, "01"), -1)


def two_qubit():
    m = Model(4, {"U1": gate("H", [1], 2), "U2": gate("CNOT", [1, 2], 2), "U3": gate("K", [2], 2)})
    return AutomatonSpec.from_bits(m, "0110", Fraction(1, 3))


words = st.lists(st.integers(1, 3), max_size=8)


@settings(max_examples=80, deadline=None)
@given(words)
def test_acceptance_is_a_probability(w):
    v = acc(two_qubit(), w)
    assert v.is_real() and v.sign() >= 0 and (v - 1).sign() <= 0


@settings(max_examples=80, deadline=None)
@given(words)
def test_norm_preserved(w):
    assert norm_defect(two_qubit(), w).is_zero()


@settings(max_examples=80, deadline=None)
@given(words)
def test_float_cross_check(w):
    a = two_qubit()
    state = np.zeros(4, dtype=complex)
    state[0] = 1
    for k in w:
        state = a.model.operator(f"U{k}").to_numpy() @ state
    expect = sum(abs(x) ** 2 for keep, x in zip(a.final, state) if keep)
    assert abs(float(acc(a, w)) - expect) < 1e-9
    assert len(run(a, w)) == 4


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 5))
def test_margin_monotone_in_length(n):
    a = two_qubit()
    assert (isolation_margin(a, n + 1).margin - isolation_margin(a, n).margin).sign() <= 0
