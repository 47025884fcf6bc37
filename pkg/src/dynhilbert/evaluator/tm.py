"""Vectorized enclosures used by the evaluators.

A batch of B boxes shares K local coordinates u in [-1, 1]^K.  Vector terms
are affine in u up to an error ball (:class:`Aff`); real values are
quadratic Taylor models in u with an interval remainder (:class:`TM`).
Floating-point rounding is absorbed by a relative slack applied whenever a
model is turned into bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import Model

REL_SLACK = 1e-12
ABS_SLACK = 1e-300


@dataclass
class FloatModel:
    dim: int
    ops: dict  # name -> (U, U^H, float error bound)
    consts: dict  # name -> (vector, float error bound)
    n_marked: int

    @classmethod
    def from_model(cls, m: Model) -> "FloatModel":
        ops = {}
        for name, u in m.operators.items():
            arr = u.to_numpy()
            ops[name] = (arr, arr.conj().T.copy(), u.float_error())
        consts = {}
        for name, vec in m.constants.items():
            arr = np.array([complex(x) for x in vec])
            err = float(np.sqrt(sum(x.float_error() ** 2 for x in vec))) + 1e-300
            consts[name] = (arr, err)
        return cls(m.dim, ops, consts, len(m.marked) if m.marked is not None else 0)


@dataclass
class Aff:
    """base + lin @ u with an error radius, for each box of the batch."""

    base: np.ndarray  # (B, d) complex
    lin: np.ndarray | None  # (B, d, K) complex
    err: np.ndarray  # (B,)

    def mag(self) -> np.ndarray:
        """Upper bound on the norm of the term over the box."""
        m = np.linalg.norm(self.base, axis=1) + self.err
        if self.lin is not None:
            m = m + np.linalg.norm(self.lin, axis=1).sum(axis=1)
        return m

    def norm_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Triangle-inequality bounds on the norm over the box."""
        centre = np.linalg.norm(self.base, axis=1)
        spread = self.err.copy()
        if self.lin is not None:
            cols = np.linalg.norm(self.lin, axis=1).sum(axis=1)
            # |L x| <= |L| sqrt(K) on the unit cube; the 2-norm costs an SVD per box
            op = np.linalg.norm(self.lin, 2, axis=(1, 2)) * (1 + 1e-12) * np.sqrt(self.lin.shape[2])
            spread = spread + np.minimum(cols, op)
        lo = np.maximum(centre - spread, 0.0) * (1 - 1e-12)
        return lo, (centre + spread) * (1 + 1e-12)

    def __add__(self, other: "Aff") -> "Aff":
        return Aff(self.base + other.base, _add_opt(self.lin, other.lin), self.err + other.err)

    def __sub__(self, other: "Aff") -> "Aff":
        neg = None if other.lin is None else -other.lin
        return Aff(self.base - other.base, _add_opt(self.lin, neg), self.err + other.err)

    def scale(self, c: complex) -> "Aff":
        lin = None if self.lin is None else self.lin * c
        return Aff(self.base * c, lin, self.err * abs(c) + 1e-15 * abs(c) * self.mag())

    def apply(self, mat: np.ndarray, mat_err: float) -> "Aff":
        base = self.base @ mat.T
        lin = None if self.lin is None else np.einsum("ij,bjk->bik", mat, self.lin)
        return Aff(base, lin, self.err + mat_err * self.mag())


def _add_opt(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


@dataclass
class TM:
    """c0 + g.u + u^T Q u + [rl, rh] over u in [-1, 1]^K."""

    c0: np.ndarray  # (B,)
    g: np.ndarray | None  # (B, K)
    Q: np.ndarray | None  # (B, K, K) symmetric
    rl: np.ndarray  # (B,)
    rh: np.ndarray  # (B,)

    @property
    def size(self) -> int:
        return self.c0.shape[0]

    @classmethod
    def const(cls, value: float, size: int) -> "TM":
        z = np.zeros(size)
        return cls(np.full(size, float(value)), None, None, z, z.copy())

    @classmethod
    def interval(cls, lo: np.ndarray, hi: np.ndarray) -> "TM":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        return cls(np.zeros_like(lo), None, None, lo, hi)

    def is_poly(self) -> bool:
        return self.g is not None or self.Q is not None

    def magnitude(self) -> np.ndarray:
        m = np.abs(self.c0) + np.abs(self.rl) + np.abs(self.rh)
        if self.g is not None:
            m = m + np.abs(self.g).sum(axis=1)
        if self.Q is not None:
            m = m + np.abs(self.Q).sum(axis=(1, 2))
        return m

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = self.c0 + self.rl
        hi = self.c0 + self.rh
        if self.g is not None or self.Q is not None:
            plo, phi = poly_bounds(self.g, self.Q, self.size)
            lo = lo + plo
            hi = hi + phi
        slack = REL_SLACK * self.magnitude() + ABS_SLACK
        return lo - slack, hi + slack

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other: "TM") -> "TM":
        return TM(self.c0 + other.c0, _add_opt(self.g, other.g), _add_opt(self.Q, other.Q),
                  self.rl + other.rl, self.rh + other.rh)

    def __neg__(self) -> "TM":
        return TM(-self.c0, None if self.g is None else -self.g, None if self.Q is None else -self.Q,
                  -self.rh, -self.rl)

    def __sub__(self, other: "TM") -> "TM":
        return self + (-other)

    def scale(self, k: float) -> "TM":
        if k >= 0:
            rl, rh = self.rl * k, self.rh * k
        else:
            rl, rh = self.rh * k, self.rl * k
        return TM(self.c0 * k, None if self.g is None else self.g * k,
                  None if self.Q is None else self.Q * k, rl, rh)

    def shift(self, c: float) -> "TM":
        return TM(self.c0 + c, self.g, self.Q, self.rl, self.rh)

    def add_remainder(self, lo: np.ndarray, hi: np.ndarray) -> "TM":
        return TM(self.c0, self.g, self.Q, self.rl + lo, self.rh + hi)

    def where(self, mask: np.ndarray, other: "TM") -> "TM":
        """Per-box selection: self where mask, else other."""
        k = None
        for arr in (self.g, other.g):
            if arr is not None:
                k = arr.shape[1]
        for arr in (self.Q, other.Q):
            if arr is not None:
                k = arr.shape[1]
        g = _select(mask, self.g, other.g, (self.size, k) if k else None)
        Q = _select(mask, self.Q, other.Q, (self.size, k, k) if k else None)
        return TM(np.where(mask, self.c0, other.c0), g, Q,
                  np.where(mask, self.rl, other.rl), np.where(mask, self.rh, other.rh))

    def poly_part_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.is_poly():
            z = np.zeros(self.size)
            return z, z
        return poly_bounds(self.g, self.Q, self.size)


def _select(mask, a, b, shape):
    if a is None and b is None:
        return None
    if a is None:
        a = np.zeros(shape)
    if b is None:
        b = np.zeros(shape)
    m = mask.reshape((-1,) + (1,) * (a.ndim - 1))
    return np.where(m, a, b)


def poly_bounds(g, Q, size) -> tuple[np.ndarray, np.ndarray]:
    """Bounds of g.u + u^T Q u over [-1, 1]^K (separable in the diagonal)."""
    lo = np.zeros(size)
    hi = np.zeros(size)
    if Q is not None:
        a = np.diagonal(Q, axis1=1, axis2=2)
        off = np.abs(Q).sum(axis=(1, 2)) - np.abs(a).sum(axis=1)
    else:
        a = None
        off = 0.0
    b = g if g is not None else np.zeros_like(a)
    if a is None:
        s = np.abs(b).sum(axis=1)
        return -s, s
    absb = np.abs(b)
    # maximum of a u^2 + b u on [-1, 1]
    mx = a + absb
    safe_a = np.where(a == 0, -1.0, a)
    vert = -(b * b) / (4 * safe_a)
    use = (a < 0) & (absb <= -2 * a)
    mx = np.where(use, vert, mx)
    mn = a - absb
    safe_a2 = np.where(a == 0, 1.0, a)
    vert2 = -(b * b) / (4 * safe_a2)
    use2 = (a > 0) & (absb <= 2 * a)
    mn = np.where(use2, vert2, mn)
    hi = mx.sum(axis=1) + off
    lo = mn.sum(axis=1) - off
    return lo, hi


def eig_bounds(g, Q, lower: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
    """Upper (and lower) bounds of g.u + u^T Q u over |u| <= sqrt(K) from one
    eigendecomposition of Q.

    Directions of curvature against the bound contribute their unconstrained
    extremum, so a model with a flat valley is bounded without splitting along
    the valley.  Errors of the floating decomposition are bounded explicitly.
    """
    B, K = g.shape
    lam, W = np.linalg.eigh(Q)
    R2 = float(K)
    # residual of the decomposition, bounded through the Frobenius norm
    rec = np.einsum("bik,bk,bjk->bij", W, lam, W)
    e_q = np.sqrt(((Q - rec) ** 2).sum(axis=(1, 2)))
    gamma = np.einsum("bik,bi->bk", W, g)
    resid = g - np.einsum("bik,bk->bi", W, gamma)
    e_g = np.abs(resid).sum(axis=1)
    wnorm2 = 1.0 + np.sqrt(((np.einsum("bik,bil->bkl", W, W) - np.eye(K)) ** 2).sum(axis=(1, 2)))
    Z2 = R2 * wnorm2  # bound on |W^T u|^2
    err = e_q * R2 + e_g
    gg = gamma * gamma
    base_mag = np.abs(lam).sum(axis=1) * Z2 + np.abs(g).sum(axis=1)

    def upper(lam):
        neg = lam < 0
        safe = np.where(neg, lam, -1.0)
        concave = np.where(neg, -gg / (4 * safe), 0.0).sum(axis=1)
        gpos = np.sqrt(np.where(neg, 0.0, gg).sum(axis=1))
        lpos = np.where(neg, 0.0, lam).max(axis=1)
        out = concave + gpos * np.sqrt(Z2) + lpos * Z2 + err
        return out + 1e-12 * (np.abs(concave) + gpos * np.sqrt(Z2) + base_mag)

    return upper(lam), (-upper(-lam) if lower else None)


def eig_upper(g, Q) -> np.ndarray:
    return eig_bounds(g, Q, lower=False)[0]


def tight_bounds(tm: "TM", lower: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Bounds of a model, sharpened with the eigenvalue bound when it has a quadratic part.

    With ``lower=False`` only the upper bound is sharpened.
    """
    lo, hi = tm.bounds()
    if tm.Q is None or tm.g is None:
        return lo, hi
    up, dn = eig_bounds(tm.g, tm.Q, lower)
    slack = REL_SLACK * tm.magnitude()
    hi = np.minimum(hi, tm.c0 + tm.rh + up + slack)
    if lower:
        lo = np.maximum(lo, tm.c0 + tm.rl + dn - slack)
    return lo, hi


# ---------------------------------------------------------------------------
# atoms


def inner_tm(s: Aff, t: Aff, part: str) -> TM:
    """Real or imaginary part of <s, t> (linear in s) as a quadratic model."""
    a, b = s.base, t.base
    c0c = np.einsum("bj,bj->b", a, b.conj())
    g = Q = None
    if s.lin is not None or t.lin is not None:
        gc = 0
        if s.lin is not None:
            gc = gc + np.einsum("bjk,bj->bk", s.lin, b.conj())
        if t.lin is not None:
            gc = gc + np.einsum("bj,bjk->bk", a, t.lin.conj())
        g = gc.real if part == "re" else gc.imag
        if s.lin is not None and t.lin is not None:
            qc = np.einsum("bjk,bjl->bkl", s.lin, t.lin.conj())
            qr = qc.real if part == "re" else qc.imag
            Q = (qr + qr.transpose(0, 2, 1)) / 2
    c0 = c0c.real if part == "re" else c0c.imag
    ms, mt = s.mag(), t.mag()
    err = s.err * mt + t.err * ms + s.err * t.err + REL_SLACK * (1 + ms * mt)
    return TM(c0, g, Q, -err, err)


def norm2_tm(w: Aff) -> TM:
    """||w~||^2 of the error-free part of w."""
    a = w.base
    c0 = np.einsum("bj,bj->b", a, a.conj()).real
    g = Q = None
    if w.lin is not None:
        g = 2 * np.einsum("bj,bjk->bk", a.conj(), w.lin).real
        qc = np.einsum("bjk,bjl->bkl", w.lin.conj(), w.lin).real
        Q = (qc + qc.transpose(0, 2, 1)) / 2
    z = np.zeros_like(c0)
    return TM(c0, g, Q, z, z.copy())


def sqrt_tm(q: TM, qbounds=None) -> TM:
    """Enclosure of sqrt(q) for q >= 0, linearized where q is bounded away from 0.

    ``qbounds`` may supply sharper bounds of q than its own separable ones.
    """
    qlo, qhi = q.bounds() if qbounds is None else qbounds
    qlo = np.maximum(qlo, 0.0)
    qhi = np.maximum(qhi, qlo)
    ilo = np.sqrt(qlo) * (1 - 1e-15)
    ihi = np.sqrt(qhi) * (1 + 1e-15)
    iv = TM.interval(ilo, ihi)
    if not q.is_poly():
        return iv
    q0 = np.clip(q.c0, qlo, qhi)
    ok = q0 > 0
    q0s = np.where(ok, q0, 1.0)
    qlos = np.where(qlo > 0, qlo, 1.0)
    s0 = np.sqrt(q0s)
    k = 1 / (2 * s0)
    lin = TM(s0 + (q.c0 - q0s) * k, None if q.g is None else q.g * k[:, None],
             None if q.Q is None else q.Q * k[:, None, None], q.rl * k, q.rh * k)
    delta = np.maximum(qhi - q0s, q0s - qlo)
    lag = delta * delta / (8 * qlos * np.sqrt(qlos))
    lin = lin.add_remainder(-lag * (1 + 1e-12), np.zeros_like(lag))
    llo, lhi = lin.bounds()
    # keep the polynomial form unless it is much looser: later steps can cancel it
    slack = 0.5 * (ihi - ilo) + 1e-12
    better = ok & (qlo > 0) & (lhi - llo <= 2 * (ihi - ilo) + 1e-12) & (llo >= ilo - slack) & (lhi <= ihi + slack)
    if not better.any():
        return iv
    return lin.where(better, iv)


# ---------------------------------------------------------------------------
# connectives on models


def tm_prod(f: TM, h: TM) -> TM:
    """Product truncated to degree two; higher terms go to the remainder."""
    if not f.is_poly() and not h.is_poly():
        flo, fhi = f.bounds()
        hlo, hhi = h.bounds()
        return TM.interval(*_iprod(flo, fhi, hlo, hhi))
    size = f.size
    c1, c2 = f.c0, h.c0
    g = None
    if f.g is not None:
        g = f.g * c2[:, None]
    if h.g is not None:
        g = _add_opt(g, h.g * c1[:, None])
    Q = None
    if f.Q is not None:
        Q = f.Q * c2[:, None, None]
    if h.Q is not None:
        Q = _add_opt(Q, h.Q * c1[:, None, None])
    if f.g is not None and h.g is not None:
        outer = np.einsum("bk,bl->bkl", f.g, h.g)
        Q = _add_opt(Q, (outer + outer.transpose(0, 2, 1)) / 2)
    # high-order terms: g1*Q2 + Q1*g2 + Q1*Q2 and everything touching remainders
    g1 = _lin_bound(f.g, size)
    g2 = _lin_bound(h.g, size)
    q1lo, q1hi = _quad_bounds(f.Q, size)
    q2lo, q2hi = _quad_bounds(h.Q, size)
    hl, hh = np.zeros(size), np.zeros(size)
    for lo_a, hi_a, lo_b, hi_b in ((-g1, g1, q2lo, q2hi), (q1lo, q1hi, -g2, g2), (q1lo, q1hi, q2lo, q2hi)):
        lo, hi = _iprod(lo_a, hi_a, lo_b, hi_b)
        hl, hh = hl + lo, hi + hh
    p1lo, p1hi = f.poly_part_bounds()
    p1lo, p1hi = p1lo + c1, p1hi + c1
    p2lo, p2hi = h.poly_part_bounds()
    p2lo, p2hi = p2lo + c2, p2hi + c2
    for lo_a, hi_a, lo_b, hi_b in ((p1lo, p1hi, h.rl, h.rh), (f.rl, f.rh, p2lo, p2hi), (f.rl, f.rh, h.rl, h.rh)):
        lo, hi = _iprod(lo_a, hi_a, lo_b, hi_b)
        hl, hh = hl + lo, hi + hh
    return TM(c1 * c2, g, Q, hl, hh)


def _lin_bound(g, size):
    return np.zeros(size) if g is None else np.abs(g).sum(axis=1)


def _quad_bounds(Q, size):
    if Q is None:
        z = np.zeros(size)
        return z, z
    return poly_bounds(None if Q is None else np.zeros(Q.shape[:2]), Q, size)


def _iprod(alo, ahi, blo, bhi):
    p = np.stack([alo * blo, alo * bhi, ahi * blo, ahi * bhi])
    return p.min(axis=0), p.max(axis=0)


def tm_minmax(f: TM, h: TM, which: str) -> TM:
    flo, fhi = f.bounds()
    hlo, hhi = h.bounds()
    if which == "max":
        pick_f = hhi <= flo
        pick_h = fhi <= hlo
        lo, hi = np.maximum(flo, hlo), np.maximum(fhi, hhi)
    else:
        pick_f = fhi <= hlo
        pick_h = hhi <= flo
        lo, hi = np.minimum(flo, hlo), np.minimum(fhi, hhi)
    out = TM.interval(lo, hi)
    if pick_h.any():
        out = h.where(pick_h, out)
    if pick_f.any():
        out = f.where(pick_f, out)
    return out


def tm_absdiff(f: TM, h: TM) -> TM:
    d = f - h
    lo, hi = d.bounds()
    out = TM.interval(np.zeros_like(lo), np.maximum(np.abs(lo), np.abs(hi)))
    neg = hi <= 0
    if neg.any():
        out = (-d).where(neg, out)
    pos = lo >= 0
    if pos.any():
        out = d.where(pos, out)
    return out


def tm_truncsub(f: TM, h: TM) -> TM:
    d = f - h
    lo, hi = d.bounds()
    out = TM.interval(np.zeros_like(lo), np.maximum(hi, 0.0))
    pos = lo >= 0
    if pos.any():
        out = d.where(pos, out)
    return out


def tm_truncadd(cap: float, f: TM, h: TM) -> TM:
    s = f + h
    lo, hi = s.bounds()
    out = TM.interval(np.minimum(lo, cap), np.minimum(hi, cap))
    below = hi <= cap
    if below.any():
        out = s.where(below, out)
    return out


def clamp_interval(lo: np.ndarray, hi: np.ndarray, rlo: float, rhi: float):
    lo = np.clip(lo, rlo, rhi)
    hi = np.clip(hi, rlo, rhi)
    return lo, np.maximum(hi, lo)
