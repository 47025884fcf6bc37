"""The ten acceptance criteria, each at its stated tolerance and time limit.

A summary line per criterion is printed at the end of the run (see conftest).
"""

import json
import random
import time
from fractions import Fraction

import mpmath

from dynhilbert.automata import AutomatonSpec, acc, exists_accepted, isolation_margin
from dynhilbert.degree import BoundStream, degree_ndim, ershov_sandwich
from dynhilbert.evaluator import eval_certified
from dynhilbert.groups import check_approximation, cyclic_instance, henson_battery, henson_equiv
from dynhilbert.interp import Interpreter, battery
from dynhilbert.model import Model, all_structures, local_gate, random_circuit
from dynhilbert.numeric import CMatrix, FieldScalar, unitary_eigs
from dynhilbert.parser import parse
from dynhilbert.sentences import dimension_axiom, displacement

HALF = Fraction(1, 2)
_REPORTS: dict = {}


class Timer:
    def __init__(self, limit: float):
        self.limit = limit

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.seconds < self.limit, f"took {self.seconds:.1f} s, limit {self.limit} s"


def _exact(x) -> Fraction:
    man, exp = mpmath.mpf(x).man_exp
    return Fraction(int(man)) * Fraction(2) ** int(exp)


def _spectral_interval(u: CMatrix) -> tuple[Fraction, Fraction]:
    """Enclosure of max_j |1 - lambda_j| = max_j 2 |sin(theta_j / 2)|."""
    lo = hi = Fraction(0)
    for c in unitary_eigs(u, Fraction(1, 10**8)):
        ends = [mpmath.iv.mpf(q.numerator) / q.denominator for q in (c.angle.lo, c.angle.hi)]
        th = mpmath.iv.mpf([ends[0].a, ends[1].b])
        s = abs(2 * mpmath.iv.sin(th / 2))
        lo, hi = max(lo, _exact(s.a.a)), max(hi, _exact(s.b.b))
    return lo, hi


def _ac2_report(workers: int) -> str:
    rng = random.Random(2024)
    f = displacement("U1")
    rows = []
    for k in range(20):
        qubits = 1 if k % 2 == 0 else 2
        u, steps = random_circuit(rng, qubits, 6)
        r = eval_certified(f, Model(u.rows, {"U1": u}), Fraction(1, 50), workers=workers)
        lo, hi = _spectral_interval(u)
        rows.append({"circuit": steps, "dim": u.rows, "eval": r.to_json(),
                     "spectral": [str(lo), str(hi)],
                     "encloses": r.lo <= hi and lo <= r.hi and r.interval.width <= Fraction(1, 50)})
    return json.dumps(rows, sort_keys=True)


def _ac3_report(workers: int) -> str:
    f = dimension_axiom(2)
    two = eval_certified(f, Model(2), Fraction(1, 50), workers=workers)
    three = eval_certified(f, Model(3), Fraction(3, 4), workers=workers)
    return json.dumps({"dim2": two.to_json(), "dim3": three.to_json()}, sort_keys=True)


def _ac4_report(workers: int) -> str:
    r = degree_ndim(parse("sup v:B1 . d(U1(v),v)"), 1, 1, Fraction(1, 20), workers=workers)
    return json.dumps(r.to_json(), sort_keys=True)


def _report(k: int, workers: int) -> str:
    key = (k, workers)
    if key not in _REPORTS:
        _REPORTS[key] = {2: _ac2_report, 3: _ac3_report, 4: _ac4_report}[k](workers)
    return _REPORTS[key]


def test_ac1_gate_exactness():
    with Timer(1):
        h, k = local_gate("H"), local_gate("K")
        assert h @ h == CMatrix.identity(2)
        assert k @ k @ k @ k == CMatrix.identity(2)
        assert local_gate("CNOT") @ local_gate("CNOT") == CMatrix.identity(4)
        assert local_gate("TOFFOLI") @ local_gate("TOFFOLI") == CMatrix.identity(8)


def test_ac2_spectral_displacement_oracle():
    with Timer(300):
        rows = json.loads(_report(2, 1))
    assert len(rows) == 20 and max(r["dim"] for r in rows) <= 4
    bad = [r for r in rows if not r["encloses"]]
    assert not bad, bad


def test_ac3_dimension_axiom():
    with Timer(600):
        rep = json.loads(_report(3, 1))
    lo2, hi2 = Fraction(rep["dim2"]["lo"]), Fraction(rep["dim2"]["hi"])
    assert 0 <= lo2 and hi2 <= Fraction(1, 50)
    assert Fraction(rep["dim3"]["lo"]) >= Fraction(1, 4)


def test_ac4_degree_of_truth():
    with Timer(60):
        rep = json.loads(_report(4, 1))
    lo, hi = Fraction(rep["lo"]), Fraction(rep["hi"])
    assert lo <= 2 <= hi and hi - lo <= Fraction(1, 20)


def test_ac5_sandwich():
    with Timer(1):
        q = Fraction(37, 100)
        lo = BoundStream.from_function(lambda k: q - Fraction(1, k), "lower")
        hi = BoundStream.from_function(lambda k: q + Fraction(1, k), "upper")
        r = ershov_sandwich(lo, hi, Fraction(1, 100))
    assert r.success and q in r.interval and r.interval.width <= Fraction(1, 100)


def test_ac6_automata_exactness():
    with Timer(10):
        h_aut = AutomatonSpec.from_bits(Model(2, {"U1": local_gate("H")}), "01", HALF)
        x_aut = AutomatonSpec.from_bits(Model(2, {"U1": local_gate("X")}), "01", HALF)
        assert acc(h_aut, [1]) == FieldScalar(HALF)
        m = isolation_margin(h_aut, 2)
        assert m.margin == FieldScalar(0) and m.word == (1,)
        assert acc(h_aut, [1, 1]) == FieldScalar(0)
        for n in range(11):
            assert isolation_margin(x_aut, n).margin == FieldScalar(HALF)
        assert exists_accepted(x_aut, 1).word == (1,)


def test_ac7_approximation_checker():
    with Timer(10):
        inst, gamma = cyclic_instance(8)
        rep = check_approximation(inst, gamma, Fraction(1, 10**6))
        assert {c.kind for c in rep.conditions} == {"identity", "homomorphism", "separation"}
        assert rep.verdict == "pass"
        ident = {w: CMatrix.identity(8) for w in gamma}
        bad = check_approximation(inst, ident, Fraction(1, 10**6))
        assert bad.verdict == "fail"
        assert all(c.verdict == "fail" for c in bad.by_kind("separation"))


def test_ac8_henson_oracle():
    with Timer(600):
        rng = random.Random(88)
        pairs = [(local_gate("H"), CMatrix.diag([1, -1]))]
        for _ in range(10):
            u, _ = random_circuit(rng, 1, 6)
            w, _ = random_circuit(rng, 1, 6)
            pairs.append((u, w @ u @ w.adjoint()))
        assert henson_equiv(CMatrix.identity(2), CMatrix.diag([1, -1])).verdict == "distinct"
        sentences = henson_battery()
        assert len(sentences) == 10
        for u, v in pairs:
            assert henson_equiv(u, v).verdict == "equivalent"
            for f in sentences:
                a = eval_certified(f, Model(u.rows, {"U1": u}), Fraction(1, 20)).interval
                b = eval_certified(f, Model(v.rows, {"U1": v}), Fraction(1, 20)).interval
                assert a.overlaps(b), (u, v, f)


def test_ac9_interpretation_reduction():
    sents = battery()
    structures = all_structures(3)
    failures = []
    total = 0
    with Timer(1800):
        for scheme in ("constants", "dynamical"):
            for s in structures:
                it = Interpreter(s, scheme)
                for rho in sents:
                    chk = it.check(rho)
                    total += 1
                    if not (chk.agree and chk.dichotomy):
                        failures.append(chk.to_json())
    assert total == 2 * len(structures) * len(sents) == 2 * 30 * 132
    assert not failures, failures[:5]


def test_ac10_determinism():
    for k in (2, 3, 4):
        assert _report(k, 1) == _report(k, 8), f"item {k} differs between 1 and 8 workers"
