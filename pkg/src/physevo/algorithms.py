"""Population-based optimizers: DE, PSO, real-coded GA and a covariance-adapting ES.

Every optimizer follows the same ask/tell protocol driven by :func:`run`:
``start`` receives the evaluated generation 0, ``propose`` returns repaired
candidate vectors and ``tell`` consumes their evaluation results (possibly
only a prefix of them when the budget runs out mid-iteration).
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .archive import EvaluationArchive
from .constraints import (DEFAULT_CONSTRAINTS, ConstraintSet, best_index, estimate_penalty_coefficient,
                          rank_order, repair_bounds, sort_key)
from .core import Bounds, EvalCounter, EvalResult, PhysevoError, Problem, as_solution, evaluate

VARIANTS = ("DE", "PSO", "GA", "ES")


class InvalidVariantParameters(PhysevoError):
    pass


class SeedOutOfBounds(PhysevoError):
    pass


class SeedDimensionMismatch(PhysevoError):
    pass


@dataclass
class DEParams:
    F: float = 0.5
    CR: float = 0.9


@dataclass
class PSOParams:
    inertia: float = 0.7298
    cognitive: float = 1.49618
    social: float = 1.49618
    velocity_clamp: float = 0.2


@dataclass
class GAParams:
    crossover_prob: float = 0.9
    sbx_eta: float = 15.0
    mutation_prob: float | None = None  # None -> 1/dim
    mutation_eta: float = 20.0
    tournament_size: int = 2


@dataclass
class ESParams:
    lam: int | None = None  # None -> 4 + floor(3 ln dim)
    mu: int | None = None  # None -> lam // 2
    sigma0: float = 0.3  # fraction of the box width
    covariance: str = "full"  # "full" or "none" (step-size adaptation only)


@dataclass
class OptimizerConfig:
    variant: str = "DE"
    population_size: int = 20
    max_evaluations: int = 10_000
    target_objective: float | None = None
    stagnation_window: int = 50  # 0 disables the stagnation test
    stagnation_tol: float = 1e-12
    de: DEParams = field(default_factory=DEParams)
    pso: PSOParams = field(default_factory=PSOParams)
    ga: GAParams = field(default_factory=GAParams)
    es: ESParams = field(default_factory=ESParams)

    def validate(self) -> "OptimizerConfig":
        if self.variant not in VARIANTS:
            raise InvalidVariantParameters(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        min_pop = 4 if self.variant == "DE" else 2
        if self.population_size < min_pop:
            raise InvalidVariantParameters(f"{self.variant} needs population_size >= {min_pop}")
        if self.max_evaluations <= self.population_size:
            raise InvalidVariantParameters("max_evaluations must exceed population_size")
        if self.stagnation_window < 0:
            raise InvalidVariantParameters("stagnation_window must be >= 0")
        probs = {"de.CR": self.de.CR, "ga.crossover_prob": self.ga.crossover_prob}
        if self.ga.mutation_prob is not None:
            probs["ga.mutation_prob"] = self.ga.mutation_prob
        for name, p in probs.items():
            if not 0.0 <= p <= 1.0:
                raise InvalidVariantParameters(f"{name}={p} is not a probability")
        if self.de.F < 0:
            raise InvalidVariantParameters("de.F must be non-negative")
        if min(self.pso.inertia, self.pso.cognitive, self.pso.social) < 0 or self.pso.velocity_clamp <= 0:
            raise InvalidVariantParameters("PSO coefficients must be non-negative, clamp positive")
        if self.ga.sbx_eta < 0 or self.ga.mutation_eta < 0 or self.ga.tournament_size < 1:
            raise InvalidVariantParameters("invalid GA distribution index or tournament size")
        if self.es.sigma0 <= 0 or self.es.covariance not in ("full", "none"):
            raise InvalidVariantParameters("ES needs sigma0 > 0 and covariance in {'full', 'none'}")
        if self.es.lam is not None and self.es.lam < 2:
            raise InvalidVariantParameters("ES lambda must be >= 2")
        if self.es.mu is not None and self.es.lam is not None and not 1 <= self.es.mu <= self.es.lam:
            raise InvalidVariantParameters("ES mu must lie in [1, lambda]")
        return self

    def resolved(self, dim: int) -> "OptimizerConfig":
        """Copy with every dimension-dependent default replaced by its value."""
        ga = replace(self.ga, mutation_prob=1.0 / dim if self.ga.mutation_prob is None else self.ga.mutation_prob)
        lam = self.es.lam if self.es.lam is not None else 4 + int(3 * math.log(dim))
        mu = self.es.mu if self.es.mu is not None else max(1, lam // 2)
        es = replace(self.es, lam=lam, mu=mu)
        return replace(self, ga=ga, es=es).validate()


@dataclass
class Population:
    """Members of one generation; ``fitness`` is empty until evaluated."""

    members: np.ndarray
    fitness: list[EvalResult] = field(default_factory=list)
    iteration: int = 0

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class TraceRow:
    iteration: int
    evaluations: int
    best_objective: float
    best_violation: float
    mean_objective: float
    diversity: float


@dataclass
class RunResult:
    best_vector: np.ndarray
    best_result: EvalResult
    trace: list[TraceRow]
    evaluations_used: int
    termination_reason: str
    archive: EvaluationArchive
    message: str = ""


def initialize_population(config: OptimizerConfig, bounds: Bounds, seeds: Sequence = (), rng=None) -> Population:
    """Seeds are copied verbatim to the front; the rest are uniform in the box."""
    seeds = [np.asarray(s, dtype=float).reshape(-1) for s in seeds]
    if len(seeds) > config.population_size:
        raise InvalidVariantParameters(f"{len(seeds)} seeds exceed population size {config.population_size}")
    for k, s in enumerate(seeds):
        if s.size != bounds.dim:
            raise SeedDimensionMismatch(f"seed {k} has dimension {s.size}, expected {bounds.dim}")
        if not np.all(np.isfinite(s)) or not bounds.contains(s):
            raise SeedOutOfBounds(f"seed {k} lies outside the bounds")
    n_rand = config.population_size - len(seeds)
    rand = bounds.lower + rng.random((n_rand, bounds.dim)) * bounds.width
    members = np.vstack([np.array(seeds).reshape(len(seeds), bounds.dim), rand]) if seeds else rand
    return Population(members)


def _diversity(X: np.ndarray, bounds: Bounds) -> float:
    if len(X) < 2:
        return 0.0
    return float(np.mean(np.std(bounds.normalize(X), axis=0)))


class Optimizer:
    def __init__(self, config: OptimizerConfig, bounds: Bounds, constraints: ConstraintSet):
        self.config = config
        self.bounds = bounds
        self.cs = constraints

    def repair(self, X: np.ndarray, rng) -> np.ndarray:
        return np.array([repair_bounds(x, self.bounds, self.cs.bounds_policy, rng) for x in X])

    def start(self, population: Population) -> None:
        self.X = np.array(population.members, dtype=float)
        self.fit = list(population.fitness)

    @property
    def population(self) -> Population:
        return Population(self.X.copy(), list(self.fit))

    def propose(self, rng) -> np.ndarray:
        raise NotImplementedError

    def tell(self, X: np.ndarray, results: Sequence[EvalResult]) -> None:
        raise NotImplementedError


class DifferentialEvolution(Optimizer):
    """DE/rand/1/bin with greedy one-to-one replacement."""

    def propose(self, rng):
        n, d = self.X.shape
        F, CR = self.config.de.F, self.config.de.CR
        trials = np.empty_like(self.X)
        self.base_indices = np.empty(n, dtype=int)
        for i in range(n):
            others = np.delete(np.arange(n), i)
            r1, r2, r3 = rng.choice(others, size=3, replace=False)
            donor = self.X[r1] + F * (self.X[r2] - self.X[r3])
            mask = rng.random(d) < CR
            mask[rng.integers(d)] = True
            trials[i] = np.where(mask, donor, self.X[i])
            self.base_indices[i] = r1
        return self.repair(trials, rng)

    def tell(self, X, results):
        for i, res in enumerate(results):
            if sort_key(res, self.cs) < sort_key(self.fit[i], self.cs):
                self.X[i] = X[i]
                self.fit[i] = res


class ParticleSwarm(Optimizer):
    """Global-best PSO with per-dimension velocity clamping."""

    def start(self, population):
        super().start(population)
        self.V = np.zeros_like(self.X)
        self.P = self.X.copy()
        self.pfit = list(self.fit)
        self.g = best_index(self.pfit, self.cs)

    def propose(self, rng):
        p = self.config.pso
        n, d = self.X.shape
        r1 = rng.random((n, d))
        r2 = rng.random((n, d))
        vmax = p.velocity_clamp * self.bounds.width
        V = p.inertia * self.V + p.cognitive * r1 * (self.P - self.X) + p.social * r2 * (self.P[self.g] - self.X)
        V = np.clip(V, -vmax, vmax)
        self._pending_v = V
        return self.repair(self.X + V, rng)

    def tell(self, X, results):
        k = len(results)
        self.X[:k] = X[:k]
        self.V[:k] = self._pending_v[:k]
        for i, res in enumerate(results):
            self.fit[i] = res
            if sort_key(res, self.cs) < sort_key(self.pfit[i], self.cs):
                self.P[i] = X[i]
                self.pfit[i] = res
        self.g = best_index(self.pfit, self.cs)

    @property
    def population(self):
        return Population(self.X.copy(), list(self.fit))


def sbx_pair(p1, p2, lo, hi, eta, rng):
    """Bounded simulated binary crossover of two parents (Deb and Agrawal)."""
    c1, c2 = p1.copy(), p2.copy()
    d = p1.size
    swap = rng.random(d) < 0.5
    u = rng.random(d)
    flip = rng.random(d) < 0.5
    for j in range(d):
        if not swap[j] or abs(p1[j] - p2[j]) <= 1e-14 or hi[j] <= lo[j]:
            continue
        y1, y2 = min(p1[j], p2[j]), max(p1[j], p2[j])
        span = y2 - y1
        beta = 1.0 + 2.0 * (y1 - lo[j]) / span
        alpha = 2.0 - beta ** -(eta + 1.0)
        betaq = (u[j] * alpha) ** (1.0 / (eta + 1.0)) if u[j] <= 1.0 / alpha \
            else (1.0 / (2.0 - u[j] * alpha)) ** (1.0 / (eta + 1.0))
        a = 0.5 * (y1 + y2 - betaq * span)
        beta = 1.0 + 2.0 * (hi[j] - y2) / span
        alpha = 2.0 - beta ** -(eta + 1.0)
        betaq = (u[j] * alpha) ** (1.0 / (eta + 1.0)) if u[j] <= 1.0 / alpha \
            else (1.0 / (2.0 - u[j] * alpha)) ** (1.0 / (eta + 1.0))
        b = 0.5 * (y1 + y2 + betaq * span)
        a, b = min(max(a, lo[j]), hi[j]), min(max(b, lo[j]), hi[j])
        if flip[j]:
            a, b = b, a
        c1[j], c2[j] = a, b
    return c1, c2


def polynomial_mutation(x, lo, hi, eta, prob, rng):
    """Bounded polynomial mutation (Deb), applied per coordinate with ``prob``."""
    y = x.copy()
    width = hi - lo
    mutate = (rng.random(x.size) < prob) & (width > 0)
    u = rng.random(x.size)
    if not np.any(mutate):
        return y
    idx = np.flatnonzero(mutate)
    w = width[idx]
    d1 = (y[idx] - lo[idx]) / w
    d2 = (hi[idx] - y[idx]) / w
    power = 1.0 / (eta + 1.0)
    ui = u[idx]
    low_side = ui < 0.5
    val_lo = 2.0 * ui + (1.0 - 2.0 * ui) * (1.0 - d1) ** (eta + 1.0)
    val_hi = 2.0 * (1.0 - ui) + 2.0 * (ui - 0.5) * (1.0 - d2) ** (eta + 1.0)
    deltaq = np.where(low_side, np.abs(val_lo) ** power - 1.0, 1.0 - np.abs(val_hi) ** power)
    y[idx] = np.clip(y[idx] + deltaq * w, lo[idx], hi[idx])
    return y


class GeneticAlgorithm(Optimizer):
    """Tournament selection, SBX, polynomial mutation, (mu + lambda) survival."""

    def _tournament(self, ranks, rng):
        k = self.config.ga.tournament_size
        cand = rng.integers(len(ranks), size=k)
        return cand[np.argmin(ranks[cand])]

    def propose(self, rng):
        g = self.config.ga
        n = len(self.X)
        order = rank_order(self.fit, self.cs)
        ranks = np.empty(n, dtype=int)
        ranks[order] = np.arange(n)
        lo, hi = self.bounds.lower, self.bounds.upper
        children = []
        while len(children) < n:
            a = self.X[self._tournament(ranks, rng)]
            b = self.X[self._tournament(ranks, rng)]
            if rng.random() < g.crossover_prob:
                c1, c2 = sbx_pair(a, b, lo, hi, g.sbx_eta, rng)
            else:
                c1, c2 = a.copy(), b.copy()
            children.append(polynomial_mutation(c1, lo, hi, g.mutation_eta, g.mutation_prob, rng))
            children.append(polynomial_mutation(c2, lo, hi, g.mutation_eta, g.mutation_prob, rng))
        return self.repair(np.array(children[:n]), rng)

    def tell(self, X, results):
        k = len(results)
        allX = np.vstack([self.X, X[:k]])
        allfit = list(self.fit) + list(results)
        keep = rank_order(allfit, self.cs)[: len(self.X)]
        self.X = allX[keep]
        self.fit = [allfit[i] for i in keep]


class EvolutionStrategy(Optimizer):
    """(mu/mu_w, lambda)-ES with cumulative step-size adaptation.

    With ``covariance="full"`` the full covariance matrix is adapted
    (rank-one and rank-mu updates); with ``"none"`` the search distribution
    stays isotropic. The search runs in box-normalized coordinates.
    """

    def start(self, population):
        super().start(population)
        es = self.config.es
        n = self.bounds.dim
        self.n = n
        self.lam, self.mu = es.lam, es.mu
        w = np.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights ** 2)
        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs_ = (self.mueff + 2) / (n + self.mueff + 5)
        if es.covariance == "full":
            self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
            self.cmu = min(1 - self.c1, 2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        else:
            self.c1 = self.cmu = 0.0
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs_
        self.chiN = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        best = best_index(self.fit, self.cs)
        self.mean = self.bounds.normalize(self.X[best])
        self.sigma = es.sigma0
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.invsqrtC = np.eye(n)
        self.generation = 0
        self._eigen_gen = 0

    def propose(self, rng):
        z = rng.standard_normal((self.lam, self.n))
        y = (z * self.D) @ self.B.T
        Xn = self.mean + self.sigma * y
        return self.repair(self.bounds.denormalize(Xn), rng)

    def tell(self, X, results):
        self.X = np.array(X[: len(results)])
        self.fit = list(results)
        if len(results) < self.lam:
            return
        n = self.n
        order = rank_order(results, self.cs)[: self.mu]
        Zsel = self.bounds.normalize(np.asarray(X)[order])
        ysel = (Zsel - self.mean) / self.sigma
        ymean = self.weights @ ysel
        self.mean = self.mean + self.sigma * ymean
        self.generation += 1
        self.ps = (1 - self.cs_) * self.ps + math.sqrt(self.cs_ * (2 - self.cs_) * self.mueff) * (self.invsqrtC @ ymean)
        norm_ps = np.linalg.norm(self.ps)
        hsig = norm_ps / math.sqrt(1 - (1 - self.cs_) ** (2 * self.generation)) / self.chiN < 1.4 + 2 / (n + 1)
        self.pc = (1 - self.cc) * self.pc + hsig * math.sqrt(self.cc * (2 - self.cc) * self.mueff) * ymean
        if self.c1 + self.cmu > 0:
            rank_mu = (ysel.T * self.weights) @ ysel
            self.C = ((1 - self.c1 - self.cmu) * self.C
                      + self.c1 * (np.outer(self.pc, self.pc) + (1 - hsig) * self.cc * (2 - self.cc) * self.C)
                      + self.cmu * rank_mu)
            if self.generation - self._eigen_gen > self.lam / (self.c1 + self.cmu) / n / 10:
                self._eigen_gen = self.generation
                self.C = np.triu(self.C) + np.triu(self.C, 1).T
                evals, self.B = np.linalg.eigh(self.C)
                self.D = np.sqrt(np.maximum(evals, 1e-20))
                self.invsqrtC = (self.B / self.D) @ self.B.T
        self.sigma *= math.exp(min(1.0, (self.cs_ / self.damps) * (norm_ps / self.chiN - 1)))
        self.sigma = min(self.sigma, 1e3)


_OPTIMIZERS = {"DE": DifferentialEvolution, "PSO": ParticleSwarm, "GA": GeneticAlgorithm,
               "ES": EvolutionStrategy}


def make_optimizer(config: OptimizerConfig, bounds: Bounds, constraints: ConstraintSet = DEFAULT_CONSTRAINTS):
    return _OPTIMIZERS[config.variant](config, bounds, constraints)


def propose(optimizer: Optimizer, rng) -> np.ndarray:
    """Candidate vectors for the next iteration, already repaired into the bounds."""
    return optimizer.propose(rng)


def evaluation_threads() -> int:
    try:
        return max(1, int(os.environ.get("PHYSEVO_THREADS", "1")))
    except ValueError:
        return 1


class BatchEvaluator:
    """Evaluates candidate batches, assigning indices in submission order."""

    def __init__(self, problem: Problem, fidelity: int = 0, threads: int | None = None):
        self.problem = problem
        self.fidelity = fidelity
        self.counter = EvalCounter()
        self.threads = threads if threads is not None else evaluation_threads()

    @property
    def used(self) -> int:
        return self.counter.last + 1

    def _one(self, args):
        x, idx = args
        t0 = time.perf_counter_ns()
        res = evaluate(self.problem, x, self.fidelity, eval_index=idx)
        return res, time.perf_counter_ns() - t0

    def __call__(self, X):
        jobs = [(x, self.counter.next()) for x in X]
        if self.threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                out = list(pool.map(self._one, jobs))
        else:
            out = [self._one(j) for j in jobs]
        return [o[0] for o in out], [o[1] for o in out]


def _improved(new_key, old_key, tol) -> bool:
    if new_key[0] != old_key[0]:
        return new_key[0] < old_key[0]
    return old_key[1] - new_key[1] > tol


def run(problem: Problem, config: OptimizerConfig, seeds: Sequence = (), rng=None,
        constraints: ConstraintSet | None = None, archive: EvaluationArchive | None = None,
        run_id: int = 0, fidelity: int = 0, threads: int | None = None) -> RunResult:
    """Optimize ``problem`` until the budget, the target or stagnation stops the run.

    Every evaluation is appended to the archive in eval-index order. An
    exception raised by the problem aborts the run; the result then carries
    ``termination_reason="error"`` and the diagnostic message.
    """
    config = config.resolved(problem.dim)
    cs = constraints if constraints is not None else DEFAULT_CONSTRAINTS
    archive = archive if archive is not None else EvaluationArchive(run_id)
    evaluator = BatchEvaluator(problem, fidelity, threads)
    bounds = problem.bounds
    trace: list[TraceRow] = []
    best_x = None
    best = None
    iteration = 0

    def record(X, results):
        nonlocal best, best_x
        for x, res in zip(X, results):
            if best is None or sort_key(res, cs) < sort_key(best, cs):
                best, best_x = res, np.array(x, dtype=float)

    def trace_row(pop_X, pop_fit):
        objs = [r.objective for r in pop_fit]
        trace.append(TraceRow(iteration, evaluator.used, best.objective, best.total_violation,
                              float(np.mean(objs)), _diversity(pop_X, bounds)))

    pop = initialize_population(config, bounds, seeds, rng)
    try:
        X0 = np.array([as_solution(x, problem.dim) for x in pop.members])
        results, walls = evaluator(X0)
        archive.extend(0, X0, results, walls)
        if cs.mode == "static_penalty" and cs.penalty_coefficient is None:
            cs = cs.with_penalty_coefficient(estimate_penalty_coefficient(results))
        pop.fitness = results
        record(X0, results)
        opt = make_optimizer(config, bounds, cs)
        opt.start(pop)
        trace_row(X0, results)
        best_key = sort_key(best, cs)
        last_improvement = 0
        reason = "budget"
        while True:
            if evaluator.used >= config.max_evaluations:
                reason = "budget"
                break
            if config.target_objective is not None and best.feasible and best.objective <= config.target_objective:
                reason = "target"
                break
            if config.stagnation_window and iteration - last_improvement >= config.stagnation_window:
                reason = "stagnation"
                break
            X = propose(opt, rng)
            X = X[: config.max_evaluations - evaluator.used]
            iteration += 1
            results, walls = evaluator(X)
            archive.extend(iteration, X, results, walls)
            record(X, results)
            opt.tell(X, results)
            key = sort_key(best, cs)
            if _improved(key, best_key, config.stagnation_tol):
                last_improvement = iteration
                best_key = key
            cur = opt.population
            trace_row(cur.members, cur.fitness)
        return RunResult(best_x, best, trace, evaluator.used, reason, archive)
    except Exception as exc:  # evaluation failures end the run with a diagnostic
        if best is None:
            best = EvalResult(float("inf"))
            best_x = np.full(problem.dim, np.nan)
        return RunResult(best_x, best, trace, evaluator.used, "error", archive,
                         message=f"{type(exc).__name__}: {exc}")
