"""Optimisation-based evaluation.

Quantifiers over balls are searched with multi-start Nelder-Mead in the
ball's real coordinates (points outside the ball are pulled back radially).
The bound on the side of the search is the enclosure of the body at the best
point found, so it is sound; the other side is the range of the body.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize

from .. import formula as F
from ..model import Model
from .certified import Block, CertifiedEvaluator, Enclosure

DEFAULT_HEURISTIC_BUDGET = 10**5


class HeuristicEvaluator(CertifiedEvaluator):
    def __init__(self, f: F.Formula, model: Model, budget: int | None = None, restarts: int = 16, seed: int = 0):
        super().__init__(f, model, budget=budget or DEFAULT_HEURISTIC_BUDGET, workers=1)
        self.restarts = restarts
        self.seed = seed
        self.exhausted = False
        self._depth = 0

    def _charge(self, n: int, best=None):
        self.cost += n
        if self.cost >= self.budget:
            self.exhausted = True

    def evaluate(self, eps: float = 0.0) -> Enclosure:
        return self.enclose(self.f, {}, 1e-3)

    def _enclose(self, node: F.Formula, env: dict, tol: float, lo_target, hi_target) -> Enclosure:
        if isinstance(node, F.Quantifier) and isinstance(node.var_sort, F.Ball):
            block = self._blocks[id(node)]
            enc = self._norm_form(block, tol)
            if enc is not None:
                return enc
            return self._search(block, env, tol)
        return super()._enclose(node, env, tol, lo_target, hi_target)

    def _search(self, block: Block, env: dict, tol: float) -> Enclosure:
        s = block.sign
        r = block.body.range
        rlo, rhi = (float(r.lo), float(r.hi)) if s > 0 else (-float(r.hi), -float(r.lo))
        lo_d = np.array([c.lo for v in block.vars for c in v.coords], dtype=float)
        hi_d = np.array([c.hi for v in block.vars for c in v.coords], dtype=float)
        K = lo_d.size
        # deeper quantifiers get fewer restarts so nested searches stay affordable
        restarts = max(2, self.restarts >> (2 * self._depth))
        rng = np.random.default_rng(self.seed + 7919 * self._depth)
        best = [-math.inf, (lo_d + hi_d) / 2]

        def points(P):
            P = np.clip(P, lo_d, hi_d)
            self._charge(P.shape[0])
            self._depth += 1
            try:
                plo, phi = self._eval_points(block, P, env, tol, None)
            finally:
                self._depth -= 1
            j = int(np.argmax(plo))
            if plo[j] > best[0]:
                best[0], best[1] = float(plo[j]), P[j].copy()
            return plo, phi

        if K == 0:
            plo, _ = points(np.zeros((1, 0)))
        else:
            samples = rng.uniform(lo_d, hi_d, size=(max(8 * K, restarts) if self._depth else 32 * K, K))
            samples = np.vstack([((lo_d + hi_d) / 2)[None, :], samples])
            plo, phi = points(samples)
            order = np.argsort(-(plo + phi), kind="stable")[:restarts]
            step = (hi_d - lo_d) / 4
            for i in order:
                if self.exhausted:
                    break
                x0 = samples[i]
                simplex = np.vstack([x0, x0[None, :] + np.diag(step)])

                def objective(y):
                    if self.exhausted:
                        return 0.0
                    a, b = points(y[None, :])
                    return -float(a[0] + b[0]) / 2

                optimize.minimize(objective, x0, method="Nelder-Mead",
                                  options={"initial_simplex": simplex, "maxfev": 60 * K,
                                           "xatol": 1e-7, "fatol": tol / 16})
        lower = max(best[0], rlo)
        witness = self._witness(block, best[1]) if best[0] > -math.inf else {}
        if s > 0:
            return Enclosure(lower, rhi, witness)
        return Enclosure(-rhi, -lower, witness)
