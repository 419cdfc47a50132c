"""Constraint evaluation, penalty aggregation, feasibility rules and bound repair."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Callable, Sequence

import numpy as np

from .core import Bounds, EvalResult

BOUNDS_POLICIES = ("clamp", "reflect", "resample")
MODES = ("feasibility", "static_penalty")


@dataclass(frozen=True)
class ConstraintSet:
    """Hard and soft constraints plus the selection and repair policy.

    ``hard`` entries are callables ``g(x, state)`` returning a violation
    magnitude (positive when violated). ``soft`` entries are callables
    ``p(x, state)`` returning a non-negative penalty, weighted by
    ``soft_weights``. ``penalty_coefficient`` is the static-penalty factor R;
    ``None`` lets the optimizer estimate it from generation 0.
    """

    hard: tuple[Callable[[np.ndarray, Any], float], ...] = ()
    soft: tuple[Callable[[np.ndarray, Any], float], ...] = ()
    soft_weights: tuple[float, ...] | None = None
    bounds_policy: str = "reflect"
    mode: str = "feasibility"
    penalty_coefficient: float | None = None

    def __post_init__(self):
        if self.bounds_policy not in BOUNDS_POLICIES:
            raise ValueError(f"unknown bounds policy {self.bounds_policy!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown constraint mode {self.mode!r}")
        if self.soft_weights is not None:
            w = np.asarray(self.soft_weights, dtype=float)
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("soft weights must be finite and non-negative")
        if self.penalty_coefficient is not None and not self.penalty_coefficient >= 0:
            raise ValueError("penalty coefficient must be non-negative")

    def weights_for(self, n: int) -> np.ndarray:
        if self.soft_weights is None:
            return np.ones(n)
        w = np.asarray(self.soft_weights, dtype=float)
        if w.size != n:
            raise ValueError(f"{w.size} soft weights for {n} soft penalties")
        return w

    def with_penalty_coefficient(self, value: float) -> "ConstraintSet":
        return replace(self, penalty_coefficient=float(value))


DEFAULT_CONSTRAINTS = ConstraintSet()


def violation_vector(cs: ConstraintSet, x, problem_state=None) -> np.ndarray:
    """Entry k is ``max(0, g_k(x, state))``; the zero vector iff feasible."""
    return np.array([max(0.0, float(g(x, problem_state))) for g in cs.hard], dtype=float)


def soft_vector(cs: ConstraintSet, x, problem_state=None) -> np.ndarray:
    return np.array([max(0.0, float(p(x, problem_state))) for p in cs.soft], dtype=float)


def penalized_objective(result: EvalResult, cs: ConstraintSet = DEFAULT_CONSTRAINTS) -> float:
    """Objective plus weighted soft penalties, plus ``R * sum(hard)`` in static-penalty mode."""
    value = result.objective
    if result.soft_penalties.size:
        value += float(np.dot(cs.weights_for(result.soft_penalties.size), result.soft_penalties))
    if cs.mode == "static_penalty" and result.hard_violations.size:
        r = 1.0 if cs.penalty_coefficient is None else cs.penalty_coefficient
        value += r * result.total_violation
    return value


def sort_key(result: EvalResult, cs: ConstraintSet = DEFAULT_CONSTRAINTS) -> tuple[int, float, int]:
    """Key realizing the feasibility rules; smaller is better.

    Feasible results come first ordered by penalized objective, infeasible
    ones follow ordered by total violation; the evaluation index breaks ties.
    """
    if cs.mode == "static_penalty":
        return (0, penalized_objective(result, cs), result.eval_index)
    if result.feasible:
        return (0, penalized_objective(result, cs), result.eval_index)
    return (1, result.total_violation, result.eval_index)


def lexicographic_compare(a: EvalResult, b: EvalResult, cs: ConstraintSet = DEFAULT_CONSTRAINTS) -> int:
    """Return -1 if ``a`` is preferred, 1 if ``b`` is preferred, 0 if indistinguishable."""
    ka, kb = sort_key(a, cs), sort_key(b, cs)
    if ka < kb:
        return -1
    if kb < ka:
        return 1
    return 0


def is_better(a: EvalResult, b: EvalResult, cs: ConstraintSet = DEFAULT_CONSTRAINTS) -> bool:
    return lexicographic_compare(a, b, cs) < 0


def best_index(results: Sequence[EvalResult], cs: ConstraintSet = DEFAULT_CONSTRAINTS) -> int:
    return min(range(len(results)), key=lambda i: sort_key(results[i], cs))


def rank_order(results: Sequence[EvalResult], cs: ConstraintSet = DEFAULT_CONSTRAINTS) -> list[int]:
    return sorted(range(len(results)), key=lambda i: sort_key(results[i], cs))


def _reflect(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    w = hi - lo
    out = x.copy()
    pos = w > 0
    y = np.mod(x[pos] - lo[pos], 2.0 * w[pos])
    y = np.where(y > w[pos], 2.0 * w[pos] - y, y)
    out[pos] = lo[pos] + y
    out[~pos] = lo[~pos]
    return np.clip(out, lo, hi)


def repair_bounds(x, bounds: Bounds, policy: str = "reflect", rng=None) -> np.ndarray:
    """Map ``x`` into ``bounds``; vectors already inside are returned unchanged."""
    x = np.asarray(x, dtype=float)
    lo, hi = bounds.lower, bounds.upper
    outside = (x < lo) | (x > hi)
    if not np.any(outside):
        return x.copy()
    if policy == "clamp":
        return np.clip(x, lo, hi)
    if policy == "reflect":
        return _reflect(x, lo, hi)
    if policy == "resample":
        if rng is None:
            raise ValueError("resample policy needs a random stream")
        out = x.copy()
        idx = np.flatnonzero(outside)
        out[idx] = rng.uniform(lo[idx], hi[idx])
        return out
    raise ValueError(f"unknown bounds policy {policy!r}")


def estimate_penalty_coefficient(results: Sequence[EvalResult], factor: float = 1e3) -> float:
    """Static penalty factor: ``factor`` times the median absolute generation-0 objective."""
    scale = float(np.median([abs(r.objective) for r in results])) if results else 1.0
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    return factor * scale

