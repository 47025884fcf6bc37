import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynhilbert import formula as F
from dynhilbert.evaluator import eval_certified
from dynhilbert.groups import (
    ApproxInstance,
    GroupError,
    check_approximation,
    cyclic_instance,
    gamma_from_json,
    henson_battery,
    henson_equiv,
    parse_word,
    word_displacement_formula,
    word_key,
    word_matrix,
)
from dynhilbert.model import Model, local_gate, random_circuit
from dynhilbert.numeric import CMatrix, FieldScalar
from dynhilbert.parser import parse

I = FieldScalar(0, 1)
g, g2 = (1,), (1, 1)


def test_integer_homomorphism_defect_zero():
    inst = ApproxInstance(1, [g, g2], [(g, g, g2)])
    gamma = {g: CMatrix([[I]]), g2: CMatrix([[-1]])}
    rep = check_approximation(inst, gamma, Fraction(1, 10))
    assert rep.verdict == "pass"
    assert rep.by_kind("homomorphism")[0].distance_sq.hi == 0


def test_identity_map_fails_separation():
    inst = ApproxInstance(1, [g], [], {})
    inst.set_alpha(g, 1)
    rep = check_approximation(inst, {g: CMatrix.identity(2)}, Fraction(1, 10))
    assert rep.by_kind("separation")[0].verdict == "fail" and rep.verdict == "fail"


def test_reflection_separates_exactly():
    inst = ApproxInstance(1, [g], [], {})
    inst.set_alpha(g, 1)
    rep = check_approximation(inst, {g: CMatrix.diag([1, -1])}, Fraction(1, 10))
    assert rep.verdict == "pass"
    # the bound is attained: d = 2 and alpha = 2 is still a pass (non-strict)
    inst.set_alpha(g, 2)
    assert check_approximation(inst, {g: CMatrix.diag([1, -1])}, Fraction(1, 10)).verdict == "pass"


def test_strict_homomorphism_bound():
    # defect exactly eps is a fail for the strict inequality
    inst = ApproxInstance(1, [g, g2], [(g, g, g2)])
    gamma = {g: CMatrix.identity(1), g2: CMatrix([[-1]])}
    assert check_approximation(inst, gamma, 2).verdict == "fail"
    assert check_approximation(inst, gamma, Fraction(201, 100)).verdict == "pass"


@pytest.mark.parametrize("m", [1, 2, 4, 8])
def test_cyclic_embeddings_pass(m):
    inst, gamma = cyclic_instance(m)
    rep = check_approximation(inst, gamma, Fraction(1, 10**6))
    assert rep.verdict == "pass"
    assert len(rep.by_kind("homomorphism")) == m * m


def test_cyclic_identity_counterexample():
    inst, gamma = cyclic_instance(8)
    ident = {w: CMatrix.identity(8) for w in gamma}
    rep = check_approximation(inst, ident, Fraction(1, 100))
    assert all(c.verdict == "fail" for c in rep.by_kind("separation"))
    assert all(c.verdict == "pass" for c in rep.by_kind("homomorphism"))


def test_input_errors():
    inst = ApproxInstance(1, [g], [])
    with pytest.raises(GroupError):
        check_approximation(inst, {}, Fraction(1, 10))
    with pytest.raises(GroupError):
        check_approximation(inst, {g: CMatrix([[1, 1], [0, 1]])}, Fraction(1, 10))
    with pytest.raises(GroupError):
        ApproxInstance(1, [(2,)], [])
    with pytest.raises(GroupError):
        ApproxInstance(1, [g], [(g, g, g2)])
    with pytest.raises(GroupError):
        parse_word("1,0")


def test_instance_json_roundtrip():
    inst, gamma = cyclic_instance(4)
    back = ApproxInstance.from_json(inst.to_json())
    assert back == inst
    enc = {word_key(w): m.encode() for w, m in gamma.items()}
    assert gamma_from_json(enc) == gamma


def test_word_matrix_uses_adjoints():
    h, k = local_gate("H"), local_gate("K")
    assert word_matrix([h, k], (1, -2, 2)) == h
    assert word_matrix([h, k], ()) == CMatrix.identity(2)


def test_displacement_formula_single_letter():
    assert word_displacement_formula((1,)) == parse("sup v:B1 . d(U1(v), v)")


def test_displacement_formula_with_relator():
    f = word_displacement_formula((1, 2), [(1, 1)])
    assert isinstance(f, F.TruncSub)
    assert f.right == parse("sup v:B1 . d(U1(U1(v)), v)")
    assert f.left == parse("sup v:B1 . d(U1(U2(v)), v)")


def test_displacement_formula_empty_relators():
    f = word_displacement_formula((1,), [])
    m = Model(2, {"U1": local_gate("X")})
    plain = eval_certified(word_displacement_formula((1,)), m, Fraction(1, 100))
    degen = eval_certified(f, m, Fraction(1, 100))
    assert degen.interval.overlaps(plain.interval)


def test_relator_displacement_vanishes_on_group_representation():
    # X satisfies x^2 = 1, so the relator term is 0 and phi_w equals the plain displacement 2
    m = Model(2, {"U1": local_gate("X"), "U2": local_gate("X")})
    r = eval_certified(word_displacement_formula((1,), [(1, 1), (2, 2)]), m, Fraction(1, 50))
    assert 2 in r.interval


def test_henson_examples():
    assert henson_equiv(CMatrix.diag([1, I]), CMatrix.diag([I, 1])).verdict == "equivalent"
    assert henson_equiv(CMatrix.identity(2), CMatrix.diag([1, -1])).verdict == "distinct"
    assert henson_equiv(local_gate("H"), CMatrix.diag([1, -1])).verdict == "equivalent"
    assert henson_equiv(CMatrix.identity(2), CMatrix.identity(3)).verdict == "distinct"
    with pytest.raises(GroupError):
        henson_equiv(CMatrix([[1, 1], [0, 1]]), CMatrix.identity(2))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 2))
def test_henson_conjugation_invariance(seed, qubits):
    rng = random.Random(seed)
    u, _ = random_circuit(rng, qubits, 4)
    w, _ = random_circuit(rng, qubits, 4)
    assert henson_equiv(u, w @ u @ w.adjoint()).verdict == "equivalent"


def test_battery_overlaps_on_equivalent_pair():
    u = local_gate("H")
    v = CMatrix.diag([1, -1])
    for f in henson_battery():
        a = eval_certified(f, Model(2, {"U1": u}), Fraction(1, 20)).interval
        b = eval_certified(f, Model(2, {"U1": v}), Fraction(1, 20)).interval
        assert a.overlaps(b)
