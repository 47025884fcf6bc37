"""Degrees of truth over classes of models.

The degree of a sentence over a class is the supremum of its values.  For
the class of all N-dimensional models with t unitaries this is computed by
sandwiching: exact models on a refining grid of the unitary group give
lower bounds, and the same grids, together with the sentence's sensitivity
to its operators, give upper bounds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator

import mpmath

from . import formula as F
from .evaluator import BudgetExceeded, eval_certified
from .model import Model
from .numeric import ONE, ZERO, CMatrix, FieldScalar, RatInterval

COST_GATE = 6  # largest t * N^2 accepted by the certified procedure


class DegreeCostError(ValueError):
    """The certified procedure would be too expensive for this (N, t)."""


class StreamError(ValueError):
    pass


class BoundStream:
    """Pull-based monotone bounds: lower streams never decrease, upper never increase."""

    def __init__(self, source: Iterator, kind: str):
        if kind not in ("lower", "upper"):
            raise ValueError("kind is 'lower' or 'upper'")
        self.kind = kind
        self._source = iter(source)
        self.best: Fraction | None = None
        self.provenance = None
        self.steps = 0
        self.exhausted = False

    @classmethod
    def from_function(cls, fn: Callable[[int], Fraction], kind: str) -> "BoundStream":
        return cls((Fraction(fn(k)) for k in itertools.count(1)), kind)

    def pull(self) -> Fraction | None:
        if self.exhausted:
            return self.best
        try:
            item = next(self._source)
        except StopIteration:
            self.exhausted = True
            return self.best
        self.steps += 1
        value, prov = item if isinstance(item, tuple) else (item, None)
        value = Fraction(value)
        better = self.best is None or (value > self.best if self.kind == "lower" else value < self.best)
        if better:
            self.best = value
            self.provenance = prov
        return self.best


@dataclass
class DegreeResult:
    interval: RatInterval
    steps: int
    success: bool
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "lo": str(self.interval.lo),
            "hi": str(self.interval.hi),
            "lo_float": float(self.interval.lo),
            "hi_float": float(self.interval.hi),
            "width": float(self.interval.width),
            "steps": self.steps,
            "success": self.success,
            "provenance": self.provenance,
        }


def ershov_sandwich(lower: BoundStream, upper: BoundStream, eps, budget: int = 10**6) -> DegreeResult:
    """Pull both streams alternately until their gap is at most ``eps``."""
    eps = Fraction(eps)
    steps = 0
    while True:
        lo = lower.pull()
        hi = upper.pull()
        steps += 2
        if lo is not None and hi is not None:
            if lo > hi:
                raise StreamError(f"inconsistent streams: lower {lo} exceeds upper {hi}")
            if hi - lo <= eps:
                return DegreeResult(RatInterval(lo, hi), steps, True, _prov(lower, upper))
        stuck = lower.exhausted and upper.exhausted
        if steps >= budget or stuck:
            lo = lo if lo is not None else Fraction(-10**9)
            hi = hi if hi is not None else Fraction(10**9)
            return DegreeResult(RatInterval(lo, hi), steps, False, _prov(lower, upper))


def _prov(lower: BoundStream, upper: BoundStream) -> dict:
    return {"lower": lower.provenance, "upper": upper.provenance,
            "lower_pulls": lower.steps, "upper_pulls": upper.steps}


# ---------------------------------------------------------------------------
# exact unitaries from angles

_I_POWERS = (ONE, FieldScalar(0, 1), FieldScalar(-1), FieldScalar(0, -1))
_HALF_PI = mpmath.mpf(1) / 2 * mpmath.pi


def rational_phase(angle: float, denom: int = 10**6) -> tuple[FieldScalar, float]:
    """An exact unit Gaussian rational near e^{i angle}, and a bound on the angle error."""
    with mpmath.workdps(30):
        target = mpmath.mpf(angle)
        k = int(mpmath.nint(target / _HALF_PI))
        rest = target - k * _HALF_PI
        s = Fraction(float(mpmath.tan(rest / 2))).limit_denominator(denom)
        actual = k * _HALF_PI + 2 * mpmath.atan(mpmath.mpf(s.numerator) / s.denominator)
        err = float(abs(actual - target)) * (1 + 1e-9) + 1e-15
    den = 1 + s * s
    z = FieldScalar((1 - s * s) / den, 2 * s / den)
    return z * _I_POWERS[k % 4], err


def rational_rotation(theta: float, denom: int = 10**6) -> tuple[Fraction, Fraction, float]:
    """(cos, sin) rational with cos^2 + sin^2 = 1 near angle theta in [0, pi/2]."""
    z, err = rational_phase(theta, denom)
    return z.real_part().a, z.imag_part().a, err


def givens(n: int, i: int, j: int, c: Fraction, s: Fraction, phase: FieldScalar) -> CMatrix:
    rows = [[ONE if r == k else ZERO for k in range(n)] for r in range(n)]
    rows[i][i] = FieldScalar(c)
    rows[j][j] = FieldScalar(c)
    rows[i][j] = -(phase.conj() * FieldScalar(s))
    rows[j][i] = phase * FieldScalar(s)
    return CMatrix(rows)


@dataclass(frozen=True)
class AngleGrid:
    """Grid over the parameters of U(N): N phases and a (theta, alpha) pair per Givens plane."""

    N: int
    level: int  # points per phase; rotation angles get a quarter as many

    @property
    def n_phase(self) -> int:
        return self.N + self.N * (self.N - 1) // 2

    @property
    def n_theta(self) -> int:
        return self.N * (self.N - 1) // 2

    @property
    def per_phase(self) -> int:
        return self.level

    @property
    def per_theta(self) -> int:
        return max(1, -(-self.level // 4))

    def size(self) -> int:
        return self.per_phase**self.n_phase * self.per_theta**self.n_theta

    def phase_values(self) -> list[float]:
        m = self.per_phase
        return [2 * math.pi * (k + 0.5) / m for k in range(m)]

    def theta_values(self) -> list[float]:
        m = self.per_theta
        return [(math.pi / 2) * (k + 0.5) / m for k in range(m)]

    def points(self) -> Iterator[tuple[tuple[float, ...], tuple[float, ...]]]:
        for ph in itertools.product(self.phase_values(), repeat=self.n_phase):
            for th in itertools.product(self.theta_values(), repeat=self.n_theta):
                yield ph, th

    def base_radius(self) -> float:
        """Covering radius of the ideal grid, summed over all angles of one unitary."""
        return self.n_phase * math.pi / self.per_phase + self.n_theta * (math.pi / 4) / self.per_theta


def unitary_from_angles(N: int, phases, thetas, denom: int = 10**6) -> tuple[CMatrix, float]:
    """Exact unitary D(phi) G_1 ... G_m and the total angle error of its rational realisation."""
    err = 0.0
    diag = []
    for a in phases[:N]:
        z, e = rational_phase(a, denom)
        diag.append(z)
        err += e
    u = CMatrix.diag(diag)
    k = 0
    for i in range(N):
        for j in range(i + 1, N):
            c, s, e1 = rational_rotation(thetas[k], denom)
            ph, e2 = rational_phase(phases[N + k], denom)
            u = u @ givens(N, i, j, c, s, ph)
            err += e1 + e2
            k += 1
    return u, err


# ---------------------------------------------------------------------------
# degree over N-dimensional models


def _op_names(f: F.Formula, t: int) -> list[str]:
    names = [f"U{k}" for k in range(1, t + 1)]
    extra = sorted(set(F.operators(f)) - set(names))
    if extra:
        raise ValueError(f"operators {extra} are not among U1..U{t}")
    if F.constants(f):
        raise ValueError("degrees are computed for sentences without constants")
    return names


class _GridEvaluator:
    """Shared per-level evaluations for the two streams."""

    def __init__(self, f, N, t, eval_eps, budget, workers):
        self.f, self.N, self.t = f, N, t
        self.eval_eps = eval_eps
        self.budget = budget
        self.workers = workers
        self.names = _op_names(f, t)
        self.used = 0
        self.levels: dict[int, dict] = {}
        mod = F.modulus(f)
        self.sensitivity = [mod.sensitivity(n) for n in self.names]

    def level(self, m: int) -> dict | None:
        if m in self.levels:
            return self.levels[m]
        grid = AngleGrid(self.N, m)
        count = grid.size() ** self.t
        if self.used + count > self.budget:
            return None
        per_op = [unitary_from_angles(self.N, ph, th) + ((ph, th),) for ph, th in grid.points()]
        best_lo = best_hi = None
        lo_params = None
        worst_err = 0.0
        for combo in itertools.product(per_op, repeat=self.t):
            ops = {name: item[0] for name, item in zip(self.names, combo)}
            worst_err = max([worst_err] + [item[1] for item in combo])
            res = eval_certified(self.f, Model(self.N, ops), self.eval_eps, workers=self.workers)
            self.used += 1
            if best_lo is None or res.lo > best_lo:
                best_lo = res.lo
                lo_params = [[list(map(float, item[2][0])), list(map(float, item[2][1]))] for item in combo]
            if best_hi is None or res.hi > best_hi:
                best_hi = res.hi
        radius = grid.base_radius() + worst_err
        # the relative margin dominates the rounding in the float computation of the radius
        slack = sum(self.sensitivity, Fraction(0)) * Fraction(radius * (1 + 1e-9))
        out = {"lo": best_lo, "hi": best_hi + slack, "slack": slack, "radius": radius,
               "size": count, "params": lo_params}
        self.levels[m] = out
        return out


def _levels() -> Iterator[int]:
    m = 1
    while True:
        yield m
        m *= 2


def degree_ndim(f: F.Formula, N: int, t: int, eps, mode: str = "certified", budget: int = 20000,
                workers: int = 1) -> DegreeResult:
    """Enclosure of sup { f^M : M an N-dimensional model with unitaries U1..Ut }."""
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if N < 1 or t < 0:
        raise ValueError("need N >= 1 and t >= 0")
    if not F.is_closed(f):
        raise ValueError("degree needs a sentence")
    if mode != "certified":
        raise ValueError(f"unknown mode {mode!r}; use degree_fd_lower for lower profiles")
    if t * N * N > COST_GATE:
        raise DegreeCostError(f"t * N^2 = {t * N * N} exceeds the cost gate {COST_GATE}; "
                              "only lower profiles are available at this size")
    grid = _GridEvaluator(f, N, t, eps / 2, budget, workers)

    def lower():
        for m in _levels():
            lv = grid.level(m)
            if lv is None:
                return
            yield lv["lo"], {"level": m, "grid_size": lv["size"], "params": lv["params"]}
            if t == 0:
                return

    def upper():
        for m in _levels():
            lv = grid.level(m)
            if lv is None:
                return
            yield lv["hi"], {"level": m, "grid_size": lv["size"], "covering_radius": lv["radius"],
                             "slack": str(lv["slack"])}
            if t == 0:
                return

    res = ershov_sandwich(BoundStream(lower(), "lower"), BoundStream(upper(), "upper"), eps, budget=10**6)
    res.steps = grid.used
    return res


def degree_fd_lower(f: F.Formula, N_max: int, eps, budget: int = 2000, workers: int = 1) -> list[tuple[int, Fraction]]:
    """Running maximum of certified lower bounds over models of dimension 1..N_max.

    This bounds the degree over all finite-dimensional models from below only.
    """
    eps = Fraction(eps)
    ops = sorted(F.operators(f))
    t = len(ops)
    names = _op_names(f, t) if t else []
    if names and names != [f"U{k}" for k in range(1, t + 1)]:
        raise ValueError("operators must be named U1..Ut")
    profile = []
    best = None
    share = max(1, budget // max(1, N_max))
    for N in range(1, N_max + 1):
        grid = _GridEvaluator(f, N, t, eps, share, workers)
        for m in _levels():
            try:
                lv = grid.level(m)
            except BudgetExceeded:
                lv = None
            if lv is None:
                break
            if best is None or lv["lo"] > best:
                best = lv["lo"]
            if t == 0:
                break
        profile.append((N, best if best is not None else Fraction(f.range.lo)))
    return profile
