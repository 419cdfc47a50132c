"""Genotype, bounds, evaluation results, problem contract and random streams."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np


class PhysevoError(Exception):
    """Base class for all package errors."""


class UnknownFidelity(PhysevoError):
    pass


class NonFiniteInput(PhysevoError):
    pass


class DimensionMismatch(PhysevoError):
    pass


def as_solution(values, dim: int | None = None) -> np.ndarray:
    """Validate and return a solution vector as a 1-D float64 array.

    Raises
    ------
    NonFiniteInput
        If any entry is NaN or infinite.
    DimensionMismatch
        If ``dim`` is given and does not match the vector length.
    """
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise DimensionMismatch("solution vector must have at least one entry")
    if dim is not None and x.size != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput(f"solution vector has non-finite entries: {x}")
    return x


@dataclass(frozen=True)
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64).reshape(-1)
        hi = np.asarray(self.upper, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionMismatch("lower and upper bounds differ in length")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, low: float, high: float, dim: int) -> "Bounds":
        return cls(np.full(dim, low, dtype=float), np.full(dim, high, dtype=float))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def normalize(self, x) -> np.ndarray:
        w = np.where(self.width > 0, self.width, 1.0)
        return (np.asarray(x) - self.lower) / w

    def denormalize(self, z) -> np.ndarray:
        return self.lower + np.asarray(z) * self.width


@dataclass(frozen=True)
class EvalResult:
    """Outcome of one objective evaluation. All objectives are minimized."""

    objective: float
    hard_violations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    soft_penalties: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fidelity: int = 0
    eval_index: int = 0

    def __post_init__(self):
        hard = np.asarray(self.hard_violations, dtype=np.float64).reshape(-1)
        soft = np.asarray(self.soft_penalties, dtype=np.float64).reshape(-1)
        if np.any(hard < 0) or np.any(soft < 0):
            raise ValueError("violations and penalties must be non-negative")
        object.__setattr__(self, "objective", float(self.objective))
        object.__setattr__(self, "hard_violations", hard)
        object.__setattr__(self, "soft_penalties", soft)

    @property
    def total_violation(self) -> float:
        return float(np.sum(self.hard_violations))

    @property
    def feasible(self) -> bool:
        return not np.any(self.hard_violations > 0)


class Problem:
    """Evaluation contract shared by every optimization problem.

    Subclasses set ``name``, ``bounds``, ``fidelities`` and implement
    :meth:`compute`, returning ``(objective, hard_violations, soft_penalties)``
    for a vector that is already validated. Soft penalty weights live in
    ``soft_weights`` and are consumed by the constraint module.
    """

    name = "problem"
    fidelities: tuple[int, ...] = (0,)
    hard_names: tuple[str, ...] = ()
    soft_names: tuple[str, ...] = ()

    bounds: Bounds

    @property
    def dim(self) -> int:
        return self.bounds.dim

    @property
    def soft_weights(self) -> np.ndarray:
        return np.ones(len(self.soft_names))

    def seed_solutions(self) -> list[np.ndarray]:
        return []

    def compute(self, x: np.ndarray, fidelity: int) -> tuple[float, Sequence[float], Sequence[float]]:
        raise NotImplementedError

    def config(self) -> dict[str, Any]:
        return {}


class EvalCounter:
    """Monotone evaluation counter owned by one run."""

    def __init__(self, start: int = 0):
        self._it = itertools.count(start)
        self.last = start - 1

    def next(self) -> int:
        self.last = next(self._it)
        return self.last


def evaluate(problem: Problem, x, fidelity: int = 0, counter: EvalCounter | None = None,
             eval_index: int | None = None) -> EvalResult:
    """Evaluate ``problem`` at ``x``; pure in ``(problem, x, fidelity)`` apart from the index.

    The index comes from ``eval_index`` when given (pre-assigned by a
    concurrent caller), else from ``counter``, else 0.
    """
    if fidelity not in problem.fidelities:
        raise UnknownFidelity(f"{problem.name} supports fidelities {problem.fidelities}, got {fidelity}")
    x = as_solution(x, problem.dim)
    objective, hard, soft = problem.compute(x, fidelity)
    if eval_index is not None:
        index = eval_index
    else:
        index = counter.next() if counter is not None else 0
    return EvalResult(float(objective), np.asarray(hard, dtype=float), np.asarray(soft, dtype=float),
                      fidelity, index)


@dataclass
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Backed by numpy's counter-based Philox generator seeded through a
    ``SeedSequence`` whose spawn key is the stream id, so distinct stream ids
    give independent sequences. Attribute access falls through to the
    underlying ``numpy.random.Generator``.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(entropy=int(self.seed) & 0xFFFFFFFFFFFFFFFF,
                                    spawn_key=(int(self.stream_id),))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __getattr__(self, item):
        if item == "generator":
            raise AttributeError(item)
        return getattr(self.generator, item)


def rng_stream(seed: int, stream_id: int = 0) -> RngStream:
    return RngStream(seed, stream_id)


# Analytic smoke-test problems.

class Sphere(Problem):
    name = "sphere"

    def __init__(self, dim: int = 10, low: float = -5.0, high: float = 5.0):
        self.bounds = Bounds.uniform(low, high, dim)
        self._cfg = {"dim": dim, "low": low, "high": high}

    def compute(self, x, fidelity):
        return float(np.dot(x, x)), (), ()

    def config(self):
        return dict(self._cfg)


class Rosenbrock(Problem):
    name = "rosenbrock"

    def __init__(self, dim: int = 10, low: float = -5.0, high: float = 10.0):
        self.bounds = Bounds.uniform(low, high, dim)
        self._cfg = {"dim": dim, "low": low, "high": high}

    def compute(self, x, fidelity):
        return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2)), (), ()

    def config(self):
        return dict(self._cfg)


class Rastrigin(Problem):
    name = "rastrigin"

    def __init__(self, dim: int = 10, low: float = -5.12, high: float = 5.12):
        self.bounds = Bounds.uniform(low, high, dim)
        self._cfg = {"dim": dim, "low": low, "high": high}

    def compute(self, x, fidelity):
        return float(10.0 * x.size + np.sum(x * x - 10.0 * np.cos(2.0 * np.pi * x))), (), ()

    def config(self):
        return dict(self._cfg)
