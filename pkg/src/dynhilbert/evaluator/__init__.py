"""Evaluation of closed formulas in finite-dimensional models."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

from ..formula import Formula
from ..model import Model
from ..numeric.interval import RatInterval
from .certified import (
    BUDGET_ENV,
    DEFAULT_BUDGET,
    BudgetExceeded,
    CertifiedEvaluator,
    EvaluationError,
    default_budget,
)
from .heuristic import DEFAULT_HEURISTIC_BUDGET, HeuristicEvaluator


@dataclass
class EvalResult:
    interval: RatInterval
    witnesses: dict = field(default_factory=dict)
    mode: str = "certified"
    cost: int = 0
    seconds: float = 0.0

    @property
    def lo(self) -> Fraction:
        return self.interval.lo

    @property
    def hi(self) -> Fraction:
        return self.interval.hi

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "lo": str(self.interval.lo),
            "hi": str(self.interval.hi),
            "lo_float": float(self.interval.lo),
            "hi_float": float(self.interval.hi),
            "width": float(self.interval.width),
            "cost": self.cost,
            "witnesses": {k: [[float(z.real), float(z.imag)] for z in v] for k, v in sorted(self.witnesses.items())},
        }


def _rat(lo: float, hi: float) -> RatInterval:
    return RatInterval(Fraction(lo), Fraction(hi))


def eval_certified(f: Formula, model: Model, eps, budget: int | None = None, workers: int = 1,
                   memo: dict | None = None, closed_forms: bool = True) -> EvalResult:
    """Interval of width at most ``eps`` guaranteed to contain the value of ``f``.

    ``memo`` may be shared between calls on the same model to reuse enclosures
    of closed quantified subformulas.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    ev = CertifiedEvaluator(f, model, budget=budget, workers=workers, closed_forms=closed_forms, memo=memo)
    t0 = time.perf_counter()
    try:
        enc = ev.evaluate(float(eps))
    finally:
        ev.close()
    return EvalResult(_rat(enc.lo, enc.hi), enc.witness, "certified", ev.cost, time.perf_counter() - t0)


def eval_heuristic(f: Formula, model: Model, budget: int | None = None, restarts: int = 16,
                   seed: int = 0) -> EvalResult:
    """Sound one-sided interval from local search: lo is attained for an outermost sup, hi for inf."""
    ev = HeuristicEvaluator(f, model, budget=budget, restarts=restarts, seed=seed)
    t0 = time.perf_counter()
    enc = ev.evaluate()
    return EvalResult(_rat(enc.lo, enc.hi), enc.witness, "heuristic", ev.cost, time.perf_counter() - t0)


__all__ = [
    "DEFAULT_HEURISTIC_BUDGET",
    "HeuristicEvaluator",
    "eval_heuristic",
    "BUDGET_ENV",
    "DEFAULT_BUDGET",
    "BudgetExceeded",
    "CertifiedEvaluator",
    "EvalResult",
    "EvaluationError",
    "default_budget",
    "eval_certified",
]
