"""Certified evaluation of closed formulas by branch and bound.

Each block of like quantifiers over ball sorts is searched over boxes in its
real coordinates.  A box is bounded by evaluating the body as a quadratic
Taylor model; boxes that cross the sphere get an extra Lagrangian bound
mu * (n^2 - |x|^2) >= 0, which keeps bounds tight at boundary optima.
Lower bounds (for sup) come from exact points of the ball, so the returned
interval always contains the true value.
"""

from __future__ import annotations

import math
import os
import threading
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .. import formula as F
from ..model import Model
from ..parser import print_formula
from ..numeric import CMatrix, FieldScalar, op_norm
from .tm import (
    TM,
    Aff,
    FloatModel,
    clamp_interval,
    inner_tm,
    norm2_tm,
    sqrt_tm,
    tm_absdiff,
    tm_minmax,
    tm_prod,
    tm_truncadd,
    tm_truncsub,
    tight_bounds,
)

DEFAULT_BUDGET = 10**7
BUDGET_ENV = "DYNHILBERT_BUDGET"


def default_budget() -> int:
    raw = os.environ.get(BUDGET_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return DEFAULT_BUDGET


class EvaluationError(ValueError):
    """The formula cannot be evaluated on this model (unbound symbol, open formula)."""


class BudgetExceeded(RuntimeError):
    def __init__(self, message: str, best: tuple[float, float] | None, cost: int):
        super().__init__(message)
        self.best = best
        self.cost = cost


@dataclass
class Coord:
    index: int  # complex coordinate
    imag: bool
    lo: float
    hi: float


@dataclass
class BlockVar:
    name: str
    radius: int
    coords: list[Coord]
    offset: int  # first local coordinate in the block


@dataclass
class Block:
    sign: int  # +1 for sup, -1 for inf
    vars: list[BlockVar]
    body: F.Formula
    heavy: bool

    @property
    def K(self) -> int:
        return sum(len(v.coords) for v in self.vars)


@dataclass
class Ctx:
    size: int
    block: dict  # name -> Aff
    boxes: dict  # name -> (centres (B, d) complex, radii (B,))
    env: dict  # name -> ("ball", centre, radius) | ("marked", k)
    tol: float
    shallow: bool = False  # nested quantifiers replaced by their ranges
    frame: tuple | None = None  # (block, C, H) when values only matter on box & ball


@dataclass
class Enclosure:
    lo: float
    hi: float
    witness: dict = field(default_factory=dict)


def _term_kind(t: F.Term) -> str:
    """'hom' if linear in the ball variables, 'fixed' if a nonzero vector free of them,
    'zero' if neither (the zero vector or a label), else 'mixed'."""
    nodes = list(F.iter_terms(t))
    has_var = any(isinstance(n, F.Var) and isinstance(n.var_sort, F.Ball) for n in nodes)
    has_fixed = any(isinstance(n, (F.Qu, F.Const)) for n in nodes)
    if has_var and has_fixed:
        return "mixed"
    return "hom" if has_var else "fixed" if has_fixed else "zero"


def _modulus_square(node: F.Formula) -> bool:
    """plus(prod(X, X), prod(Y, Y)) with X = |Re<p,t> - Re<q,t>| and Y the same with Im:
    the squared modulus of <p - q, t>, unchanged by a phase on t."""
    if not isinstance(node, F.TruncAdd):
        return False
    parts = []
    for side, atom in ((node.left, F.ReIP), (node.right, F.ImIP)):
        if not (isinstance(side, F.Prod) and side.left == side.right and isinstance(side.left, F.AbsDiff)):
            return False
        a, b = side.left.left, side.left.right
        if not (isinstance(a, atom) and isinstance(b, atom) and a.right == b.right):
            return False
        if {_term_kind(a.left), _term_kind(b.left)} != {"fixed"} or _term_kind(a.right) != "hom":
            return False
        parts.append((a.left, b.left, a.right))
    return parts[0] == parts[1]


def _phase_invariant(node: F.Formula) -> bool:
    if isinstance(node, F.ATOMS):
        kinds = {_term_kind(t) for t in node.terms()} - {"zero"}
        return len(kinds) <= 1 and kinds != {"mixed"}
    if _modulus_square(node):
        return True
    return all(_phase_invariant(c) for c in node.children())


def symmetry_mode(f: F.Formula) -> str:
    """'unitary' if the sentence is invariant under U(d), 'phase' if under a common
    phase on all ball variables, else 'none'."""
    kinds = {type(t) for t in F.all_terms(f)}
    if not kinds & {F.Const, F.Qu, F.Apply, F.ApplyInv}:
        return "unitary"
    return "phase" if _phase_invariant(f) else "none"


def domain_coords(n: int, dim: int, mode: str, k: int) -> list[Coord]:
    """Live real coordinates of the k-th nested ball variable after symmetry reduction."""
    out = []
    if mode == "unitary" and k < dim:
        for j in range(k):
            out.append(Coord(j, False, -n, n))
            out.append(Coord(j, True, -n, n))
        out.append(Coord(k, False, 0, n))
        return out
    for j in range(dim):
        if mode in ("unitary", "phase") and k == 0 and j == 0:
            out.append(Coord(0, False, 0, n))
            continue
        out.append(Coord(j, False, -n, n))
        out.append(Coord(j, True, -n, n))
    return out


class CertifiedEvaluator:
    def __init__(self, f: F.Formula, model: Model, budget: int | None = None, workers: int = 1,
                 reduce_symmetry: bool = True, closed_forms: bool = True, memo: dict | None = None):
        F.infer_ranges(f)
        if not F.is_closed(f):
            raise EvaluationError(f"formula has free variables {sorted(F.free_vars(f))}")
        for op in sorted(F.operators(f)):
            if op not in model.operators:
                raise EvaluationError(f"operator {op!r} is not bound in the model")
        for c in sorted(F.constants(f)):
            if c not in model.constants:
                raise EvaluationError(f"constant {c!r} is not bound in the model")
        uses_marked = F.uses_qu(f) or any(
            isinstance(n, F.Quantifier) and isinstance(n.var_sort, F.Marked) for n in F.iter_formulas(f))
        if uses_marked and model.marked is None:
            raise EvaluationError("formula quantifies over Q but the model is not marked")
        self.f = f
        self.model = model
        self.fm = FloatModel.from_model(model)
        self.dim = model.dim
        self.budget = budget if budget is not None else default_budget()
        self.workers = max(1, int(workers))
        self.pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None
        self.cost = 0
        self._lock = threading.Lock()
        # ``memo`` outlives the evaluator: closed quantified subformulas are keyed by
        # their text, so other sentences over the same model can reuse them
        self.memo = memo
        self._texts: dict = {}
        self._cache: dict = {}
        self._key_locks: dict = {}
        self._local = threading.local()
        self.mode = symmetry_mode(f) if reduce_symmetry else "none"
        self.closed_forms = closed_forms
        self._free: dict[int, frozenset] = {}
        self._ball_free: dict[int, frozenset] = {}
        self._heavy: dict[int, bool] = {}
        self._blocks: dict[int, Block] = {}
        self._prepare(f, 0)

    # -- static analysis -------------------------------------------------
    def _prepare(self, node: F.Formula, ball_index: int):
        fv = F.free_vars(node)
        self._free[id(node)] = frozenset(fv)
        self._ball_free[id(node)] = frozenset(k for k, s in fv.items() if isinstance(s, F.Ball))
        self._heavy[id(node)] = any(
            isinstance(n, F.Quantifier) and isinstance(n.var_sort, F.Ball) for n in F.iter_formulas(node))
        if isinstance(node, F.Quantifier) and isinstance(node.var_sort, F.Ball):
            chain = [node]
            while (type(chain[-1].body) is type(node) and isinstance(chain[-1].body.var_sort, F.Ball)):
                chain.append(chain[-1].body)
            bvars, offset = [], 0
            for i, q in enumerate(chain):
                coords = domain_coords(q.var_sort.n, self.dim, self.mode, ball_index + i)
                bvars.append(BlockVar(q.var, q.var_sort.n, coords, offset))
                offset += len(coords)
            body = chain[-1].body
            self._blocks[id(node)] = Block(1 if isinstance(node, F.Sup) else -1, bvars, body,
                                           self._heavy_body(body))
            for q in chain[1:]:
                fvq = F.free_vars(q)
                self._free[id(q)] = frozenset(fvq)
            self._prepare(body, ball_index + len(chain))
            return
        if isinstance(node, F.Quantifier):
            self._prepare(node.body, ball_index)
            return
        for c in node.children():
            self._prepare(c, ball_index)

    def _heavy_body(self, body: F.Formula) -> bool:
        return any(isinstance(n, F.Quantifier) and isinstance(n.var_sort, F.Ball) for n in F.iter_formulas(body))

    # -- public -----------------------------------------------------------
    def evaluate(self, eps: float) -> Enclosure:
        tol = float(eps) * 0.9
        last = None
        for _ in range(5):
            try:
                enc = self.enclose(self.f, {}, tol)
            except BudgetExceeded as exc:
                if last is not None and exc.best is None:
                    exc.best = (last.lo, last.hi)
                raise
            last = enc
            if enc.hi - enc.lo <= float(eps):
                return enc
            tol /= 2
        return last

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def _charge(self, n: int, best=None):
        with self._lock:
            self.cost += n
            if self.cost > self.budget:
                raise BudgetExceeded(f"evaluation budget of {self.budget} boxes exceeded", best, self.cost)

    def _map(self, fn, items):
        # only the outermost map is parallel; nested maps inside a worker would deadlock the pool
        if self.pool is None or len(items) < 2 or getattr(self._local, "worker", False):
            return [fn(x) for x in items]

        def run(x):
            self._local.worker = True
            try:
                return fn(x)
            finally:
                self._local.worker = False

        return list(self.pool.map(run, items))

    # -- enclosures ---------------------------------------------------------
    def enclose(self, node: F.Formula, env: dict, tol: float, lo_target=None, hi_target=None) -> Enclosure:
        """Interval valid for every assignment of the free variables allowed by ``env``."""
        if not self._ball_free[id(node)] and lo_target is None and hi_target is None:
            marked = tuple(sorted((k, env[k][1]) for k in self._free[id(node)]))
            cache, key = self._cache, (id(node), marked, tol)
            if self.memo is not None and isinstance(node, F.Quantifier) and isinstance(node.var_sort, F.Ball):
                cache, key = self.memo, (self._text(node), marked, tol)
            with self._lock:
                lock = self._key_locks.setdefault(key, threading.Lock())
            with lock:
                hit = cache.get(key)
                if hit is None:
                    hit = cache[key] = self._enclose(node, env, tol, None, None)
            return hit
        return self._enclose(node, env, tol, lo_target, hi_target)

    def _text(self, node: F.Formula) -> str:
        text = self._texts.get(id(node))
        if text is None:
            text = self._texts[id(node)] = print_formula(node)
        return text

    def _enclose(self, node: F.Formula, env: dict, tol: float, lo_target, hi_target) -> Enclosure:
        if isinstance(node, F.Quantifier) and isinstance(node.var_sort, F.Ball):
            enc = self._norm_form(self._blocks[id(node)], tol)
            if enc is not None:
                return enc
            enc = self._bnb(self._blocks[id(node)], env, tol, lo_target, hi_target)
        else:
            ctx = Ctx(1, {}, {}, env, tol)
            lo, hi = self._ev(node, ctx).bounds()
            r = node.range
            lo, hi = clamp_interval(lo, hi, float(r.lo), float(r.hi))
            enc = Enclosure(float(lo[0]), float(hi[0]))
        return enc

    # -- branch and bound ---------------------------------------------------
    def _block_aff(self, block: Block, C: np.ndarray, H: np.ndarray | None):
        B = C.shape[0]
        K = block.K
        out, boxes = {}, {}
        for v in block.vars:
            base = np.zeros((B, self.dim), dtype=complex)
            lin = np.zeros((B, self.dim, K), dtype=complex) if H is not None else None
            for i, c in enumerate(v.coords):
                k = v.offset + i
                unit = 1j if c.imag else 1.0
                base[:, c.index] += C[:, k] * unit
                if lin is not None:
                    lin[:, c.index, k] = H[:, k] * unit
            out[v.name] = Aff(base, lin, np.zeros(B))
            if H is None:
                rad = np.zeros(B)
            else:
                sl = H[:, v.offset:v.offset + len(v.coords)]
                rad = np.sqrt((sl * sl).sum(axis=1)) * (1 + 1e-12)
            boxes[v.name] = (base, rad)
        return out, boxes

    def _norm_ranges(self, v: BlockVar, C, H):
        sl = slice(v.offset, v.offset + len(v.coords))
        c, h = np.abs(C[:, sl]), H[:, sl]
        near = np.maximum(c - h, 0.0)
        far = c + h
        return (near * near).sum(axis=1), (far * far).sum(axis=1)

    def _eval_boxes(self, block: Block, C, H, env, tol, thr):
        """Bounds of sign * body over each box (upper bound valid on box & ball).

        With nested quantifiers, large boxes only get the cheap bound where the
        inner searches are replaced by their ranges; an inner search over a wide
        box of parameters costs a lot and bounds little.
        """
        if not block.heavy:
            return self._box_bounds(block, C, H, env, tol, thr, False)
        lo, hi = self._box_bounds(block, C, H, env, tol, thr, True)
        n = max(v.radius for v in block.vars)
        sel = H.max(axis=1) <= n / 8
        if thr is not None:
            sel &= hi > thr[1]
        if sel.any():
            lo2, hi2 = self._box_bounds(block, C[sel], H[sel], env, tol, thr, False)
            lo[sel] = np.maximum(lo[sel], lo2)
            hi[sel] = np.minimum(hi[sel], hi2)
        return lo, hi

    def _box_bounds(self, block: Block, C, H, env, tol, thr, shallow):
        B = C.shape[0]
        aff, boxes = self._block_aff(block, C, H)
        ctx = Ctx(B, aff, boxes, env, tol, shallow, (block, C, H))
        tm = self._ev_lazy(block.body, ctx, block.sign, thr)
        if block.sign < 0:
            tm = -tm
        lo, hi = tight_bounds(tm)
        if tm.g is not None:
            hi = np.minimum(hi, self._penalized_hi(block, tm, C, H))
        r = block.body.range
        rlo, rhi = (float(r.lo), float(r.hi)) if block.sign > 0 else (-float(r.hi), -float(r.lo))
        return clamp_interval(lo, hi, rlo, rhi)

    def _norm_form(self, block: Block, tol: float) -> Enclosure | None:
        """Exact elimination of sup/inf over one ball of d(Lv, Mv) with L, M linear.

        The value is n * |L - M| for sup and 0 for inf; the operator norm is
        enclosed by the certified singular value routine.
        """
        body = block.body
        if not self.closed_forms or len(block.vars) != 1 or not isinstance(body, F.D) or not isinstance(body.left.sort, F.Ball):
            return None
        var = block.vars[0]
        left = _linear_map(body.left, var.name, self.model)
        right = _linear_map(body.right, var.name, self.model)
        if left is None or right is None:
            return None
        if block.sign < 0:
            return Enclosure(0.0, 0.0, {var.name: np.zeros(self.dim, dtype=complex)})
        n = var.radius
        iv = op_norm(left - right, Fraction(tol) / (2 * n))
        lo = math.nextafter(float(iv.lo * n), -math.inf)
        hi = math.nextafter(float(iv.hi * n), math.inf)
        return Enclosure(max(lo, 0.0), hi)

    def _sharp_bounds(self, tm: TM, frame):
        """Bounds of ``tm`` valid on box & ball, using the ball constraint when available."""
        lo, hi = tight_bounds(tm)
        if frame is None or tm.g is None:
            return lo, hi
        block, C, H = frame
        hi = np.minimum(hi, self._penalized_hi(block, tm, C, H))
        lo = np.maximum(lo, -self._penalized_hi(block, -tm, C, H))
        return lo, hi

    def _penalized_hi(self, block: Block, tm: TM, C, H):
        c0 = tm.c0.copy()
        g = tm.g.copy()
        Q = tm.Q.copy() if tm.Q is not None else None
        diag_add = np.zeros_like(g)
        for v in block.vars:
            sl = slice(v.offset, v.offset + len(v.coords))
            ch = C[:, sl] * H[:, sl]
            den = 2 * (ch * ch).sum(axis=1)
            num = (g[:, sl] * ch).sum(axis=1)
            mu = np.where(den > 0, np.maximum(num, 0.0) / np.where(den > 0, den, 1.0), 0.0)
            c0 = c0 + mu * (v.radius**2 - (C[:, sl] ** 2).sum(axis=1))
            g[:, sl] -= 2 * mu[:, None] * ch
            diag_add[:, sl] -= mu[:, None] * H[:, sl] ** 2
        if Q is None:
            Q = np.zeros(g.shape + (g.shape[1],))
        idx = np.arange(g.shape[1])
        Q[:, idx, idx] += diag_add
        pen = TM(c0, g, Q, tm.rl, tm.rh)
        return tight_bounds(pen, lower=False)[1]

    def _eval_points(self, block: Block, P, env, tol, thr):
        """Bounds of sign * body at points of the ball (P is moved into the ball)."""
        for v in block.vars:
            sl = slice(v.offset, v.offset + len(v.coords))
            nrm = np.sqrt((P[:, sl] ** 2).sum(axis=1))
            over = nrm > v.radius * (1 - 1e-12)
            if over.any():
                factor = np.where(over, v.radius * (1 - 1e-9) / np.where(over, nrm, 1.0), 1.0)
                P[:, sl] *= factor[:, None]
        aff, boxes = self._block_aff(block, P, None)
        ctx = Ctx(P.shape[0], aff, boxes, env, tol)
        tm = self._ev_lazy(block.body, ctx, block.sign, thr, decide=False)
        if block.sign < 0:
            tm = -tm
        return tm.bounds()

    def _bnb(self, block: Block, env: dict, tol: float, lo_target=None, hi_target=None) -> Enclosure:
        """Maximise s * body over the block's ball product; returns the enclosure of the quantifier."""
        s = block.sign
        K = block.K
        r = block.body.range
        rlo, rhi = (float(r.lo), float(r.hi)) if s > 0 else (-float(r.hi), -float(r.lo))
        if s > 0:
            stop_best, stop_upper = lo_target, hi_target
        else:
            stop_best = None if hi_target is None else -hi_target
            stop_upper = None if lo_target is None else -lo_target
        env_rad = max((val[2] for name, val in env.items()
                       if val[0] == "ball" and name in self._ball_free[id(block.body)]), default=0.0)
        h_min = max(env_rad, 1e-9) if K else math.inf
        lo_d = np.array([c.lo for v in block.vars for c in v.coords], dtype=float)
        hi_d = np.array([c.hi for v in block.vars for c in v.coords], dtype=float)
        C = ((lo_d + hi_d) / 2)[None, :]
        H = ((hi_d - lo_d) / 2)[None, :]
        best = -math.inf
        witness = None
        settled_hi = -math.inf
        act_C = np.zeros((0, K))
        act_H = np.zeros((0, K))
        act_hi = np.zeros(0)
        act_p = np.zeros(0)
        per_iter = 32 if block.heavy else 2048
        polish_left = 4
        while True:
            self._charge(C.shape[0])
            thr = (s, best + tol) if best > -math.inf else None
            lo, hi = self._eval_boxes(block, C, H, env, tol, thr)
            keep = np.ones(C.shape[0], dtype=bool)
            for v in block.vars:
                nmin, _ = self._norm_ranges(v, C, H)
                n2 = float(v.radius) ** 2
                keep &= nmin <= n2 * (1 + 1e-12)
                # a box bound is attained only if the box surely meets the ball
                lo = np.where(nmin <= n2 * (1 - 1e-9), lo, -math.inf)
            C, H, lo, hi = C[keep], H[keep], lo[keep], hi[keep]
            fine = np.zeros(C.shape[0], dtype=bool)
            plo = phi = np.full(C.shape[0], -math.inf)
            if C.shape[0]:
                i = int(np.argmax(lo))
                if lo[i] > best:
                    best = float(lo[i])
                    witness = C[i].copy()
                P = C.copy()
                self._charge(P.shape[0])
                plo, phi = self._eval_points(block, P, env, tol, (s, best) if best > -math.inf else None)
                j = int(np.argmax(plo))
                if plo[j] > best:
                    best = float(plo[j])
                    witness = P[j].copy()
                    if block.heavy or polish_left > 0:
                        polish_left -= 1
                        best, witness = self._polish(block, witness, best, float(H[j].max()),
                                                     lo_d, hi_d, env, tol, h_min)
                if not block.heavy:
                    # splitting cannot push a bound much below its centre value
                    fine = hi - phi <= tol / 4 + 0.25 * (phi - plo)
            act_C = np.concatenate([act_C, C])
            act_H = np.concatenate([act_H, H])
            act_hi = np.concatenate([act_hi, hi])
            act_p = np.concatenate([act_p, (plo + phi) / 2 if C.shape[0] else plo])
            floor = best if best > -math.inf else rlo
            drop = act_hi <= floor + tol
            tail = np.zeros(act_hi.size, dtype=bool)
            tail[act_hi.size - fine.size:] = fine
            splittable = (act_H.max(axis=1) > h_min) & ~tail if act_hi.size else tail
            drop |= ~splittable
            if drop.any():
                settled_hi = max(settled_hi, float(act_hi[drop].max()))
            # boxes below an already settled bound cannot change the result
            drop |= act_hi <= settled_hi
            if drop.any():
                act_C, act_H, act_hi, act_p = act_C[~drop], act_H[~drop], act_hi[~drop], act_p[~drop]
            upper = max(settled_hi, float(act_hi.max()) if act_hi.size else -math.inf)
            lower = best if best > -math.inf else rlo
            upper = min(max(upper, lower), rhi)
            done = upper - lower <= tol or not act_hi.size
            if stop_best is not None and lower >= stop_best:
                done = True
            if stop_upper is not None and upper <= stop_upper:
                done = True
            if done:
                lo_v, hi_v = (lower, upper) if s > 0 else (-upper, -lower)
                return Enclosure(lo_v, hi_v, self._witness(block, witness))
            mask = np.zeros(act_hi.size, dtype=bool)
            mask[np.argsort(-act_hi, kind="stable")[:per_iter]] = True
            if block.heavy:
                # also refine around the best centre values found so far
                mask[np.argsort(-act_p, kind="stable")[:per_iter // 2]] = True
            PC, PH = act_C[mask], act_H[mask]
            act_C, act_H, act_hi, act_p = act_C[~mask], act_H[~mask], act_hi[~mask], act_p[~mask]
            dim = np.argmax(PH, axis=1)
            rows = np.arange(PC.shape[0])
            half = PH[rows, dim] / 2
            H1 = PH.copy()
            H1[rows, dim] = half
            C1 = PC.copy()
            C1[rows, dim] -= half
            C2 = PC.copy()
            C2[rows, dim] += half
            C = np.concatenate([C1, C2])
            H = np.concatenate([H1, H1])

    def _polish(self, block: Block, x, best, step, lo_d, hi_d, env, tol, h_min):
        """Local search from ``x`` on certified point bounds; never worsens ``best``."""
        K = x.size
        step = max(step, h_min)
        found = [best, x]

        def objective(y):
            P = np.clip(y, lo_d, hi_d)[None, :].copy()
            self._charge(1)
            plo, phi = self._eval_points(block, P, env, tol / 2, None)
            if plo[0] > found[0]:
                found[0], found[1] = float(plo[0]), P[0].copy()
            return -float(plo[0] + phi[0]) / 2

        simplex = np.vstack([x, x[None, :] + step * np.eye(K)])
        optimize.minimize(objective, x, method="Nelder-Mead",
                          options={"initial_simplex": simplex, "maxfev": 40 * K,
                                   "xatol": h_min, "fatol": tol / 8})
        return found[0], found[1]

    def _witness(self, block: Block, point) -> dict:
        if point is None:
            return {}
        aff, _ = self._block_aff(block, point[None, :], None)
        return {name: a.base[0].copy() for name, a in aff.items()}

    # -- formula evaluation on a batch -------------------------------------
    def _ev_lazy(self, node: F.Formula, ctx: Ctx, sign: int, thr, decide: bool = True) -> TM:
        """Like _ev, but skips expensive children where a cheap one already decides the prune test.

        ``thr`` is (s, t): boxes with s * value provably <= t are of no further use.
        """
        if thr is None:
            return self._ev(node, ctx)
        s, t = thr
        # value <= t/s needed for usefulness; Max with s = -1 and Min with s = +1 can short-circuit
        lazy = (isinstance(node, F.Max) and s < 0) or (isinstance(node, F.Min) and s > 0)
        if isinstance(node, F.Quantifier) and isinstance(node.var_sort, F.Ball):
            if decide:
                return self._nested(node, ctx, (-t, -t) if s < 0 else (t, t))
            return self._nested(node, ctx, (-t, None) if s < 0 else (None, t))
        if not lazy or not self._heavy[id(node)]:
            return self._ev(node, ctx)
        kids = sorted(node.children(), key=lambda c: self._heavy[id(c)])
        cheap, heavy = kids
        tm_c = self._ev(cheap, ctx)
        lo, hi = tm_c.bounds()
        decided = (-lo <= t) if s < 0 else (hi <= t)
        r = node.range
        if decided.all():
            if s < 0:
                return TM.interval(lo, np.full(ctx.size, float(r.hi)))
            return TM.interval(np.full(ctx.size, float(r.lo)), hi)
        if not decided.any():
            tm_h = self._ev_lazy(heavy, ctx, s, thr, decide)
            return tm_minmax(tm_c, tm_h, "max" if isinstance(node, F.Max) else "min")
        idx = np.nonzero(~decided)[0]
        sub = self._sub_ctx(ctx, idx)
        tm_h = self._ev_lazy(heavy, sub, s, thr, decide)
        tm_cs = _take(tm_c, idx, ctx.size)
        comb = tm_minmax(tm_cs, tm_h, "max" if isinstance(node, F.Max) else "min")
        if s < 0:
            out = TM.interval(lo, np.full(ctx.size, float(r.hi)))
        else:
            out = TM.interval(np.full(ctx.size, float(r.lo)), hi)
        return _scatter(out, comb, idx)

    def _sub_ctx(self, ctx: Ctx, idx) -> Ctx:
        block = {k: Aff(a.base[idx], None if a.lin is None else a.lin[idx], a.err[idx]) for k, a in ctx.block.items()}
        boxes = {k: (c[idx], r[idx]) for k, (c, r) in ctx.boxes.items()}
        frame = None
        if ctx.frame is not None:
            blk, C, H = ctx.frame
            frame = (blk, C[idx], H[idx])
        return Ctx(len(idx), block, boxes, ctx.env, ctx.tol, ctx.shallow, frame)

    def _ev(self, node: F.Formula, ctx: Ctx) -> TM:
        B = ctx.size
        if isinstance(node, F.RatConst):
            v = node.value
            fv = float(v)
            out = TM.const(fv, B)
            if _float_exact(v, fv):
                return out
            e = abs(fv) * 1e-16 + 1e-300
            return out.add_remainder(np.full(B, -e), np.full(B, e))
        if isinstance(node, F.D):
            if isinstance(node.left.sort, F.Marked):
                a = self._label(node.left, ctx)
                b = self._label(node.right, ctx)
                return TM.const(0.0 if a == b else 1.0, B)
            w = self._term(node.left, ctx) - self._term(node.right, ctx)
            q = norm2_tm(w)
            qlo, qhi = self._sharp_bounds(q, ctx.frame)
            nlo, nhi = w.norm_bounds()
            out = sqrt_tm(q, (np.maximum(qlo, nlo * nlo), np.minimum(qhi, nhi * nhi)))
            return out.add_remainder(-w.err, w.err)
        if isinstance(node, F.ReIP):
            return inner_tm(self._term(node.left, ctx), self._term(node.right, ctx), "re")
        if isinstance(node, F.ImIP):
            return inner_tm(self._term(node.left, ctx), self._term(node.right, ctx), "im")
        if isinstance(node, F.Half):
            return self._ev(node.arg, ctx).scale(0.5)
        if isinstance(node, F.Neg):
            return (-self._ev(node.arg, ctx)).shift(float(node.cap))
        if isinstance(node, F.TruncSub):
            return tm_truncsub(self._ev(node.left, ctx), self._ev(node.right, ctx))
        if isinstance(node, F.Min):
            return tm_minmax(self._ev(node.left, ctx), self._ev(node.right, ctx), "min")
        if isinstance(node, F.Max):
            return tm_minmax(self._ev(node.left, ctx), self._ev(node.right, ctx), "max")
        if isinstance(node, F.AbsDiff):
            return tm_absdiff(self._ev(node.left, ctx), self._ev(node.right, ctx))
        if isinstance(node, F.TruncAdd):
            return tm_truncadd(float(node.cap), self._ev(node.left, ctx), self._ev(node.right, ctx))
        if isinstance(node, F.Prod):
            return tm_prod(self._ev(node.left, ctx), self._ev(node.right, ctx))
        if isinstance(node, F.Quantifier):
            if isinstance(node.var_sort, F.Marked):
                return self._marked_quantifier(node, ctx)
            return self._nested(node, ctx)
        raise EvaluationError(f"cannot evaluate {node!r}")

    def _marked_quantifier(self, node, ctx: Ctx) -> TM:
        n = self.fm.n_marked
        if n == 0:
            raise EvaluationError("quantifier over Q in an unmarked model")
        which = "max" if isinstance(node, F.Sup) else "min"
        out = None
        for k in range(n):
            env = dict(ctx.env)
            env[node.var] = ("marked", k)
            sub = Ctx(ctx.size, ctx.block, ctx.boxes, env, ctx.tol, ctx.shallow, ctx.frame)
            tm = self._ev(node.body, sub)
            out = tm if out is None else tm_minmax(out, tm, which)
        return out

    def _nested(self, node, ctx: Ctx, targets=(None, None)) -> TM:
        inner_tol = ctx.tol / 4
        r = node.range
        depends = self._ball_free[id(node)] & set(ctx.block)
        if ctx.shallow and depends:
            return TM.interval(np.full(ctx.size, float(r.lo)), np.full(ctx.size, float(r.hi)))
        if not depends:
            enc = self.enclose(node, ctx.env, inner_tol, *targets)
            return TM.interval(np.full(ctx.size, enc.lo), np.full(ctx.size, enc.hi))

        def one(b):
            env = dict(ctx.env)
            for name in depends:
                centres, radii = ctx.boxes[name]
                env[name] = ("ball", centres[b], float(radii[b]))
            return self.enclose(node, env, inner_tol, *targets)

        encs = self._map(one, list(range(ctx.size)))
        lo = np.array([e.lo for e in encs])
        hi = np.array([e.hi for e in encs])
        return TM.interval(*clamp_interval(lo, hi, float(r.lo), float(r.hi)))

    def _label(self, t: F.Term, ctx: Ctx) -> int:
        if not isinstance(t, F.Var):
            raise EvaluationError("terms of sort Q are variables")
        return ctx.env[t.name][1]

    def _term(self, t: F.Term, ctx: Ctx) -> Aff:
        B = ctx.size
        d = self.dim
        if isinstance(t, F.Var):
            if t.name in ctx.block:
                return ctx.block[t.name]
            kind, centre, radius = ctx.env[t.name]
            return Aff(np.broadcast_to(centre, (B, d)), None, np.full(B, radius))
        if isinstance(t, F.Zero):
            return Aff(np.zeros((B, d), dtype=complex), None, np.zeros(B))
        if isinstance(t, F.Add):
            return self._term(t.left, ctx) + self._term(t.right, ctx)
        if isinstance(t, F.Sub):
            return self._term(t.left, ctx) - self._term(t.right, ctx)
        if isinstance(t, F.Scale):
            return self._term(t.arg, ctx).scale(complex(t.coeff))
        if isinstance(t, F.Apply):
            u, _, err = self.fm.ops[t.op]
            return self._term(t.arg, ctx).apply(u, err)
        if isinstance(t, F.ApplyInv):
            _, uh, err = self.fm.ops[t.op]
            return self._term(t.arg, ctx).apply(uh, err)
        if isinstance(t, F.Qu):
            k = self._label(t.arg, ctx)
            base = np.zeros((B, d), dtype=complex)
            base[:, k] = 1.0
            return Aff(base, None, np.zeros(B))
        if isinstance(t, F.Const):
            vec, err = self.fm.consts[t.name]
            return Aff(np.broadcast_to(vec, (B, d)).astype(complex), None, np.full(B, err))
        raise EvaluationError(f"cannot evaluate term {t!r}")


def _float_exact(v, fv: float) -> bool:
    return Fraction(fv) == v


def _linear_map(t: F.Term, var: str, model: Model) -> CMatrix | None:
    """The matrix of a term that is linear in ``var`` alone, or None."""
    d = model.dim
    if isinstance(t, F.Var):
        return CMatrix.identity(d) if t.name == var else None
    if isinstance(t, F.Zero):
        return CMatrix.zeros(d, d)
    if isinstance(t, (F.Add, F.Sub)):
        a = _linear_map(t.left, var, model)
        b = _linear_map(t.right, var, model)
        if a is None or b is None:
            return None
        return a + b if isinstance(t, F.Add) else a - b
    if isinstance(t, F.Scale):
        a = _linear_map(t.arg, var, model)
        return None if a is None else a.scale(FieldScalar.coerce(t.coeff))
    if isinstance(t, (F.Apply, F.ApplyInv)):
        a = _linear_map(t.arg, var, model)
        if a is None:
            return None
        u = model.operators[t.op]
        return (u if isinstance(t, F.Apply) else u.adjoint()) @ a
    return None


def _take(tm: TM, idx, size) -> TM:
    return TM(tm.c0[idx], None if tm.g is None else tm.g[idx], None if tm.Q is None else tm.Q[idx],
              tm.rl[idx], tm.rh[idx])


def _scatter(base: TM, sub: TM, idx) -> TM:
    """``base`` with the boxes ``idx`` replaced by ``sub``."""
    size = base.size
    mask = np.zeros(size, dtype=bool)
    mask[idx] = True

    def spread(arr_sub, fill_shape):
        if arr_sub is None:
            return None
        full = np.zeros((size,) + fill_shape)
        full[idx] = arr_sub
        return full

    k = None
    if sub.g is not None:
        k = sub.g.shape[1]
    elif sub.Q is not None:
        k = sub.Q.shape[1]
    c0 = np.zeros(size)
    c0[idx] = sub.c0
    rl = np.zeros(size)
    rl[idx] = sub.rl
    rh = np.zeros(size)
    rh[idx] = sub.rh
    full = TM(c0, spread(sub.g, (k,)) if k else None, spread(sub.Q, (k, k)) if k else None, rl, rh)
    return full.where(mask, base)
