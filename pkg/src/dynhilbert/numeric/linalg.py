"""Exact matrices over Q(i, sqrt 2) with certified spectral enclosures."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath
import numpy as np
import scipy.linalg

from .field import ONE, ZERO, FieldScalar
from .interval import RatInterval, real_field_interval

TWO_PI_HI = Fraction(13176795, 2097152)  # > 2*pi


class NumericBudgetError(ArithmeticError):
    """An enclosure could not be tightened to the requested width."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class MatrixError(ValueError):
    pass


def _fs(x) -> FieldScalar:
    if isinstance(x, FieldScalar):
        return x
    if isinstance(x, str):
        return FieldScalar.parse(x)
    return FieldScalar.coerce(x)


class CMatrix:
    """Immutable dense matrix with FieldScalar entries."""

    __slots__ = ("rows", "cols", "entries", "_digest")

    def __init__(self, entries: Iterable[Iterable]):
        rows = tuple(tuple(_fs(x) for x in row) for row in entries)
        if not rows or not rows[0]:
            raise MatrixError("0x0 matrices are not allowed")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise MatrixError("ragged matrix rows")
        self.entries = rows
        self.rows = len(rows)
        self.cols = width
        self._digest = None

    # -- constructors -------------------------------------------------
    @classmethod
    def identity(cls, n: int) -> "CMatrix":
        return cls([[ONE if i == j else ZERO for j in range(n)] for i in range(n)])

    @classmethod
    def zeros(cls, r: int, c: int) -> "CMatrix":
        return cls([[ZERO] * c for _ in range(r)])

    @classmethod
    def diag(cls, values: Sequence) -> "CMatrix":
        n = len(values)
        return cls([[_fs(values[i]) if i == j else ZERO for j in range(n)] for i in range(n)])

    @classmethod
    def parse(cls, rows: Sequence[Sequence[str]]) -> "CMatrix":
        return cls([[FieldScalar.parse(x) for x in row] for row in rows])

    def encode(self) -> list[list[str]]:
        return [[x.encode() for x in row] for row in self.entries]

    # -- basic algebra --------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def is_square(self) -> bool:
        return self.rows == self.cols

    def __getitem__(self, idx):
        i, j = idx
        return self.entries[i][j]

    def __eq__(self, other):
        return isinstance(other, CMatrix) and self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def __add__(self, other: "CMatrix") -> "CMatrix":
        self._same_shape(other)
        return CMatrix([[a + b for a, b in zip(r, s)] for r, s in zip(self.entries, other.entries)])

    def __sub__(self, other: "CMatrix") -> "CMatrix":
        self._same_shape(other)
        return CMatrix([[a - b for a, b in zip(r, s)] for r, s in zip(self.entries, other.entries)])

    def __neg__(self):
        return CMatrix([[-a for a in r] for r in self.entries])

    def scale(self, c) -> "CMatrix":
        c = _fs(c)
        return CMatrix([[c * a for a in r] for r in self.entries])

    def __matmul__(self, other: "CMatrix") -> "CMatrix":
        if self.cols != other.rows:
            raise MatrixError(f"shape mismatch {self.shape} @ {other.shape}")
        cols = list(zip(*other.entries))
        out = []
        for r in self.entries:
            row = []
            for c in cols:
                acc = ZERO
                for a, b in zip(r, c):
                    if not a.is_zero() and not b.is_zero():
                        acc = acc + a * b
                row.append(acc)
            out.append(row)
        return CMatrix(out)

    def apply(self, vec: Sequence[FieldScalar]) -> tuple[FieldScalar, ...]:
        if len(vec) != self.cols:
            raise MatrixError("vector length mismatch")
        out = []
        for r in self.entries:
            acc = ZERO
            for a, b in zip(r, vec):
                if not a.is_zero() and not b.is_zero():
                    acc = acc + a * b
            out.append(acc)
        return tuple(out)

    def adjoint(self) -> "CMatrix":
        return CMatrix([[self.entries[i][j].conj() for i in range(self.rows)] for j in range(self.cols)])

    def kron(self, other: "CMatrix") -> "CMatrix":
        out = []
        for r in self.entries:
            for s in other.entries:
                out.append([a * b for a in r for b in s])
        return CMatrix(out)

    def trace(self) -> FieldScalar:
        acc = ZERO
        for i in range(min(self.rows, self.cols)):
            acc = acc + self.entries[i][i]
        return acc

    def is_zero(self) -> bool:
        return all(x.is_zero() for r in self.entries for x in r)

    def _same_shape(self, other):
        if self.shape != other.shape:
            raise MatrixError(f"shape mismatch {self.shape} vs {other.shape}")

    # -- unitarity -----------------------------------------------------
    def unitarity_defect(self) -> tuple[int, int, FieldScalar] | None:
        """First nonzero cell (1-based) of U*U - I, or None when U is exactly unitary."""
        if not self.is_square():
            return (0, 0, ONE)
        g = self.adjoint() @ self
        for i in range(self.rows):
            for j in range(self.cols):
                target = ONE if i == j else ZERO
                if g.entries[i][j] != target:
                    return (i + 1, j + 1, g.entries[i][j] - target)
        return None

    def is_unitary(self) -> bool:
        return self.unitarity_defect() is None

    # -- numeric views -------------------------------------------------
    def to_numpy(self) -> np.ndarray:
        return np.array([[complex(x) for x in r] for r in self.entries], dtype=complex)

    def float_error(self) -> float:
        """Upper bound on the Frobenius norm of to_numpy() - self."""
        s = sum(x.float_error() ** 2 for r in self.entries for x in r)
        return math.sqrt(s) * (1 + 1e-12) + 1e-300

    def digest(self) -> str:
        if self._digest is None:
            h = hashlib.sha256(repr(self.encode()).encode()).hexdigest()
            self._digest = h[:16]
        return self._digest

    def __repr__(self):
        return f"CMatrix({self.encode()})"


# ---------------------------------------------------------------------------
# exact helpers


def vector_norm2(vec: Sequence[FieldScalar]) -> FieldScalar:
    acc = ZERO
    for x in vec:
        acc = acc + x.abs2()
    return acc


def inner(x: Sequence[FieldScalar], y: Sequence[FieldScalar]) -> FieldScalar:
    """<x, y>, linear in the first argument."""
    acc = ZERO
    for a, b in zip(x, y):
        acc = acc + a * b.conj()
    return acc


def charpoly(a: CMatrix) -> list[FieldScalar]:
    """Coefficients c_0..c_n of det(t I - A) (monic, c_n = 1), exact."""
    if not a.is_square():
        raise MatrixError("charpoly of a non-square matrix")
    n = a.rows
    coeffs = [ZERO] * (n + 1)
    coeffs[n] = ONE
    m = CMatrix.zeros(n, n)
    ident = CMatrix.identity(n)
    for k in range(1, n + 1):
        m = a @ m + ident.scale(coeffs[n - k + 1])
        coeffs[n - k] = -(a @ m).trace() / k
    return coeffs


def determinant(a: CMatrix) -> FieldScalar:
    c = charpoly(a)
    return c[0] if a.rows % 2 == 0 else -c[0]


def gaussian_inverse(v: list[list[tuple[Fraction, Fraction]]]) -> list[list[tuple[Fraction, Fraction]]]:
    """Exact inverse of a matrix of Gaussian rationals (pairs re, im)."""
    n = len(v)
    aug = [[complex_q(x) for x in row] + [(Fraction(int(i == j)), Fraction(0)) for j in range(n)] for i, row in enumerate(v)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(float(aug[r][col][0])) + abs(float(aug[r][col][1])))
        if aug[piv][col] == (0, 0):
            raise MatrixError("singular eigenvector basis")
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = q_inv(aug[col][col])
        aug[col] = [q_mul(inv, x) for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != (0, 0):
                f = aug[r][col]
                aug[r] = [q_sub(x, q_mul(f, y)) for x, y in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def complex_q(x) -> tuple[Fraction, Fraction]:
    return (Fraction(x[0]), Fraction(x[1]))


def q_mul(x, y):
    return (x[0] * y[0] - x[1] * y[1], x[0] * y[1] + x[1] * y[0])


def q_sub(x, y):
    return (x[0] - y[0], x[1] - y[1])


def q_inv(x):
    n = x[0] * x[0] + x[1] * x[1]
    return (x[0] / n, -x[1] / n)


def _rationalize(x, bits: int) -> Fraction:
    scale = 1 << bits
    if isinstance(x, mpmath.mpf):
        return Fraction(int(mpmath.nint(x * scale)), scale)
    return Fraction(round(float(x) * scale), scale)


def _rational_matrix(z, bits: int) -> list[list[tuple[Fraction, Fraction]]]:
    n = len(z)
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            w = z[i][j]
            re = w.real if not isinstance(w, (mpmath.mpc, mpmath.mpf)) else mpmath.re(w)
            im = w.imag if not isinstance(w, (mpmath.mpc, mpmath.mpf)) else mpmath.im(w)
            row.append((_rationalize(re, bits), _rationalize(im, bits)))
        out.append(row)
    return out


def _as_field(m: list[list[tuple[Fraction, Fraction]]]) -> CMatrix:
    return CMatrix([[FieldScalar(re, im) for re, im in row] for row in m])


def _similar(a: CMatrix, z: list[list[tuple[Fraction, Fraction]]]) -> CMatrix:
    """Z^{-1} A Z computed exactly."""
    zinv = _as_field(gaussian_inverse(z))
    return zinv @ a @ _as_field(z)


def _abs_hi(x: FieldScalar, bits: int = 80) -> Fraction:
    if x.is_zero():
        return Fraction(0)
    return real_field_interval(x.abs2(), bits).sqrt(Fraction(1, 1 << bits)).hi


_SCHEDULE = (None, 40, 80, 160, 320)


def _numeric_candidates(mat: CMatrix, dps, kind: str):
    """Return (Z, bits) with Z approximately unitary: eigenvectors (hermitian) or Schur vectors."""
    if dps is None:
        arr = mat.to_numpy()
        if kind == "herm":
            _, z = np.linalg.eigh((arr + arr.conj().T) / 2)
        else:
            _, z = scipy.linalg.schur(arr, output="complex")
        return [[z[i, j] for j in range(z.shape[1])] for i in range(z.shape[0])], 44
    with mpmath.workdps(dps):
        # exact rationals -> mpf at working precision
        m = mpmath.matrix([[_mp_field(x) for x in row] for row in mat.entries])
        if kind == "herm":
            _, z = mpmath.eighe(m)
        else:
            _, z = mpmath.schur(m)
        n = mat.rows
        return [[z[i, j] for j in range(n)] for i in range(n)], int(dps * 3.3) - 8


def _mp_field(x: FieldScalar):
    def q(f: Fraction):
        return mpmath.mpf(f.numerator) / f.denominator

    return mpmath.mpc(q(x.a), q(x.b)) + mpmath.sqrt(2) * mpmath.mpc(q(x.c), q(x.d))


def _gram_bounds(a: CMatrix, gram: CMatrix, dps) -> tuple[Fraction, Fraction]:
    """Rational bounds (lo, hi) on the top eigenvalue of gram = A*A."""
    n = gram.rows
    z, bits = _numeric_candidates(gram, dps, "herm")
    zq = _rational_matrix(z, bits)
    t = _similar(gram, zq)
    # upper bound on the top eigenvalue of A*A
    lam_hi = None
    for j in range(n):
        centre = real_field_interval(t[j, j].real_part(), bits + 20).hi
        radius = sum((_abs_hi(t[j, k], bits + 20) for k in range(n) if k != j), Fraction(0))
        cand = centre + radius
        lam_hi = cand if lam_hi is None or cand > lam_hi else lam_hi
    lam_hi = max(lam_hi, Fraction(0))
    # witness: the column whose Rayleigh quotient is largest
    lo2 = Fraction(0)
    for j in range(n):
        vec = tuple(FieldScalar(zq[i][j][0], zq[i][j][1]) for i in range(n))
        den = vector_norm2(vec)
        if den.is_zero():
            continue
        num = vector_norm2(a.apply(vec))
        q = real_field_interval(num, bits + 20) / real_field_interval(den, bits + 20)
        lo2 = max(lo2, q.lo)
    return min(lo2, lam_hi), lam_hi


def op_norm_squared(a: CMatrix, eps=Fraction(1, 100)) -> RatInterval:
    """Certified enclosure of |A|^2, the top eigenvalue of A*A.

    Exact (a point) whenever the numerical eigenvectors round to exact ones,
    e.g. for diagonal matrices.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if a.is_zero():
        return RatInterval(0, 0)
    gram = a.adjoint() @ a
    best = None
    for dps in _SCHEDULE:
        cur = RatInterval(*_gram_bounds(a, gram, dps))
        best = cur if best is None or cur.width < best.width else best
        if cur.width <= eps:
            return cur
    raise NumericBudgetError(f"op_norm_squared did not reach width {eps}", best)


def op_norm(a: CMatrix, eps=Fraction(1, 100)) -> RatInterval:
    """Certified enclosure of the largest singular value of ``a``.

    The lower end comes from an explicit witness vector; the upper end from
    Gershgorin discs of an exactly computed similarity transform of A*A.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if a.is_zero():
        return RatInterval(0, 0)
    gram = a.adjoint() @ a
    best = None
    for dps in _SCHEDULE:
        lo2, lam_hi = _gram_bounds(a, gram, dps)
        width = eps / 4
        hi = RatInterval(0, lam_hi).sqrt(width).hi
        lo = RatInterval(lo2, lo2).sqrt(width).lo
        cur = RatInterval(min(lo, hi), hi)
        best = cur if best is None or cur.width < best.width else best
        if cur.width <= eps:
            return cur
    raise NumericBudgetError(f"op_norm did not reach width {eps}", best)


@dataclass(frozen=True)
class EigenCluster:
    angle: RatInterval
    multiplicity: int


def _iv(f: Fraction):
    from mpmath import iv

    return iv.mpf(f.numerator) / f.denominator


def _iv_to_interval(x) -> RatInterval:
    lo, hi = x._mpi_
    return RatInterval(_tuple_fraction(lo), _tuple_fraction(hi))


def _tuple_fraction(t) -> Fraction:
    sign, man, exp, _ = t
    man = -int(man) if sign else int(man)
    return Fraction(man * (1 << exp)) if exp >= 0 else Fraction(man, 1 << (-exp))


def _mpf_fraction(v) -> Fraction:
    """Exact rational value of an mpf, or of the lower end of an interval."""
    if hasattr(v, "_mpi_"):
        return _tuple_fraction(v._mpi_[0])
    return _tuple_fraction(v._mpf_)


def _disc_angles(centre: FieldScalar, radius: Fraction, dps: int) -> RatInterval | None:
    """Enclosure of arg(z) for |z - centre| <= radius, or None if the disc meets 0."""
    from mpmath import iv

    with mpmath.workdps(dps):
        iv.dps = dps
        re = real_field_interval(centre.real_part(), 3 * dps + 20)
        im = real_field_interval(centre.imag_part(), 3 * dps + 20)
        re_iv = iv.mpf([_iv(re.lo).a, _iv(re.hi).b])
        im_iv = iv.mpf([_iv(im.lo).a, _iv(im.hi).b])
        mod = iv.sqrt(re_iv * re_iv + im_iv * im_iv)
        rad = _iv(radius)
        if _iv_to_interval(mod).lo <= _iv_to_interval(rad).hi:
            return None
        theta0 = math.atan2(float(im.mid), float(re.mid)) % (2 * math.pi)
        t0 = Fraction(theta0).limit_denominator(1 << 40)
        t0_iv = _iv(t0)
        c, s = iv.cos(t0_iv), iv.sin(t0_iv)
        # rotate centre by -t0 so the argument is near 0
        rr = re_iv * c + im_iv * s
        ri = im_iv * c - re_iv * s
        delta = iv.atan2(ri, rr)
        ratio = rad / mod
        spread = iv.atan2(ratio, iv.sqrt(1 - ratio * ratio)) if _iv_to_interval(ratio).hi > 0 else iv.mpf(0)
        lo = t0_iv + delta - spread
        hi = t0_iv + delta + spread
        return RatInterval(_iv_to_interval(lo).lo, _iv_to_interval(hi).hi)


def unitary_eigs(u: CMatrix, eps=Fraction(1, 100)) -> list[EigenCluster]:
    """Eigenvalue angles of an exactly unitary matrix with multiplicities.

    Angles are reported in [0, 2*pi) by midpoint; an interval containing 0
    is reported with a slightly negative lower end.  Eigenvalues closer than
    ``eps`` may come back as one cluster carrying the merged multiplicity.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not u.is_square():
        raise MatrixError("unitary_eigs needs a square matrix")
    if not u.is_unitary():
        raise MatrixError("unitary_eigs needs an exactly unitary matrix")
    n = u.rows
    best = None
    for dps in _SCHEDULE:
        z, bits = _numeric_candidates(u, dps, "schur")
        zq = _rational_matrix(z, bits)
        t = _similar(u, zq)
        centres = [t[j, j] for j in range(n)]
        radii = [sum((_abs_hi(t[j, k], bits + 20) for k in range(n) if k != j), Fraction(0)) for j in range(n)]
        clusters = _gershgorin_clusters(centres, radii, dps or 30)
        if clusters is None:
            continue
        best = clusters
        if all(c.angle.width <= eps for c in clusters) and _disjoint_mod_2pi(clusters):
            return clusters
    raise NumericBudgetError(f"unitary_eigs did not reach width {eps}", best)


def _gershgorin_clusters(centres, radii, dps) -> list[EigenCluster] | None:
    n = len(centres)
    # connected components of overlapping discs (exact test via squared distances)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            d2 = real_field_interval((centres[i] - centres[j]).abs2(), 100)
            r = radii[i] + radii[j]
            if d2.lo <= r * r:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    out = []
    for members in groups.values():
        arcs = []
        for j in members:
            arc = _disc_angles(centres[j], radii[j], dps)
            if arc is None:
                return None
            arcs.append(arc)
        ref = arcs[0].mid
        aligned = []
        for arc in arcs:
            shift = Fraction(round(float(ref - arc.mid) / (2 * math.pi)))
            aligned.append(arc + shift * _two_pi(dps))
        hull = RatInterval.hull(aligned)
        hull = _normalise_angle(hull, dps)
        out.append(EigenCluster(hull, len(members)))
    out.sort(key=lambda c: c.angle.mid)
    return out


def _two_pi(dps) -> RatInterval:
    from mpmath import iv

    with mpmath.workdps(dps):
        iv.dps = dps
        p = iv.pi * 2
        return _iv_to_interval(p)


def _normalise_angle(arc: RatInterval, dps) -> RatInterval:
    two_pi = _two_pi(dps)
    k = math.floor(float(arc.mid) / (2 * math.pi))
    if k:
        shifted = arc - two_pi * k
        arc = RatInterval(shifted.lo, shifted.hi)
    return arc


def _disjoint_mod_2pi(clusters: list[EigenCluster]) -> bool:
    arcs = [c.angle for c in clusters]
    two_pi_hi = TWO_PI_HI
    for i in range(len(arcs)):
        for j in range(i + 1, len(arcs)):
            a, b = arcs[i], arcs[j]
            for shift in (-two_pi_hi, 0, two_pi_hi):
                if a.overlaps(b + shift):
                    return False
    return True
