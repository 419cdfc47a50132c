"""Post-hoc views of a search: trajectory networks, coverage, robustness, contributions, run statistics.

All functions read archives and never modify them. Genotypes are min-max
normalized before discretization, using the problem bounds when given and
the archive extent otherwise.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .archive import EvaluationArchive
from .constraints import DEFAULT_CONSTRAINTS, ConstraintSet, sort_key
from .core import Bounds, DimensionMismatch, PhysevoError, Problem, evaluate

DENSE_CELL_CAP = 1 << 20


class GridOverflow(PhysevoError):
    pass


class DegenerateArchive(PhysevoError):
    pass


class UnpairedRuns(PhysevoError):
    pass


def _normalizer(archives: Sequence[EvaluationArchive], bounds: Bounds | None):
    if bounds is not None:
        lo, width = bounds.lower, bounds.width
    else:
        G = np.vstack([a.genotypes for a in archives if len(a)])
        lo, width = G.min(axis=0), G.max(axis=0) - G.min(axis=0)
    width = np.where(width > 0, width, 1.0)
    return lambda x: np.clip((np.asarray(x, dtype=float) - lo) / width, 0.0, 1.0)


def _check_dims(archives: Sequence[EvaluationArchive]) -> int:
    dims = {len(r.genotype) for a in archives for r in a}
    if len(dims) > 1:
        raise DimensionMismatch(f"archives mix genotype dimensions {sorted(dims)}")
    return dims.pop() if dims else 0


# --------------------------------------------------------------------------- STN

@dataclass
class StnNode:
    key: tuple
    vector: tuple
    best_objective: float
    visits: int = 0
    runs: set = field(default_factory=set)
    start: bool = False
    end: bool = False

    @property
    def shared(self) -> bool:
        return len(self.runs) > 1


@dataclass
class StnEdge:
    source: tuple
    target: tuple
    count: int = 0
    runs: set = field(default_factory=set)


@dataclass
class StnGraph:
    nodes: dict
    edges: dict
    precision: int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def node_ids(self) -> dict:
        return {k: i for i, k in enumerate(sorted(self.nodes))}

    def to_json(self) -> dict:
        ids = self.node_ids()
        nodes = [{"id": ids[k], "key": list(k), "vector": list(n.vector), "best_objective": n.best_objective,
                  "visits": n.visits, "runs": sorted(n.runs), "shared": n.shared, "start": n.start,
                  "end": n.end} for k, n in sorted(self.nodes.items())]
        edges = [{"source": ids[e.source], "target": ids[e.target], "count": e.count, "runs": sorted(e.runs)}
                 for _, e in sorted(self.edges.items())]
        return {"precision": self.precision, "nodes": nodes, "edges": edges}

    def to_dot(self) -> str:
        ids = self.node_ids()
        lines = ["digraph stn {"]
        for k, n in sorted(self.nodes.items()):
            shape = "square" if n.start else ("triangle" if n.end else "circle")
            color = "gray" if n.shared else "black"
            lines.append(f'  n{ids[k]} [label="{n.best_objective:.6g}", shape={shape}, color={color}, '
                         f'visits={n.visits}];')
        for _, e in sorted(self.edges.items()):
            lines.append(f'  n{ids[e.source]} -> n{ids[e.target]} [weight={e.count}, '
                         f'label="{e.count}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def incumbent_trace(archive: EvaluationArchive, cs: ConstraintSet = DEFAULT_CONSTRAINTS) -> list:
    """Best-so-far record at the end of every iteration, in iteration order."""
    out = []
    best = None
    best_key = None
    current = None
    for rec in archive:
        if current is not None and rec.iteration != current:
            out.append(best)
        current = rec.iteration
        key = sort_key(rec.result(), cs)
        if best is None or key < best_key:
            best, best_key = rec, key
    if best is not None:
        out.append(best)
    return out


def build_stn(archives: Sequence[EvaluationArchive], precision: int = 2, bounds: Bounds | None = None,
              cs: ConstraintSet = DEFAULT_CONSTRAINTS) -> StnGraph:
    """Search trajectory network over one or more runs.

    Each iteration's incumbent is normalized to the unit box and rounded to
    ``precision`` decimals; consecutive distinct keys form a directed edge.
    Nodes reached by several runs are marked shared.
    """
    _check_dims(archives)
    norm = _normalizer(archives, bounds)
    nodes: dict = {}
    edges: dict = {}
    for run, arch in enumerate(archives):
        run_id = run  # position in the list, so repeated run ids still count separately
        path = []
        for rec in incumbent_trace(arch, cs):
            key = tuple(np.round(norm(rec.x), precision).tolist())
            node = nodes.get(key)
            if node is None:
                node = nodes[key] = StnNode(key, rec.genotype, rec.objective)
            elif rec.objective < node.best_objective:
                node.best_objective, node.vector = rec.objective, rec.genotype
            if not path or path[-1] != key:
                node.visits += 1
                path.append(key)
            node.runs.add(run_id)
        if not path:
            continue
        nodes[path[0]].start = True
        nodes[path[-1]].end = True
        for a, b in zip(path[:-1], path[1:]):
            e = edges.setdefault((a, b), StnEdge(a, b))
            e.count += 1
            e.runs.add(run_id)
    return StnGraph(nodes, edges, precision)


# ---------------------------------------------------------------------- coverage

@dataclass
class CoverageReport:
    grid_per_dim: int
    occupied: int
    total: int
    curve: np.ndarray  # cumulative occupied-cell count after each evaluation

    @property
    def fraction(self) -> float:
        return self.occupied / self.total

    @property
    def fraction_curve(self) -> np.ndarray:
        return self.curve / self.total


def coverage(archive: EvaluationArchive, grid_per_dim: int = 10, bounds: Bounds | None = None,
             max_cells: int | None = None) -> CoverageReport:
    """Fraction of grid cells holding at least one evaluated point.

    Occupied cells are kept as a sparse set, so large grids cost memory
    proportional to the archive. ``max_cells`` optionally caps the grid size.
    """
    if grid_per_dim < 1:
        raise ValueError("grid_per_dim must be positive")
    dim = _check_dims([archive])
    total = grid_per_dim ** dim
    if max_cells is not None and total > max_cells:
        raise GridOverflow(f"{grid_per_dim}^{dim} cells exceed the cap {max_cells}")
    norm = _normalizer([archive], bounds)
    cells = np.minimum((norm(archive.genotypes) * grid_per_dim).astype(np.int64), grid_per_dim - 1) \
        if len(archive) else np.zeros((0, dim), dtype=np.int64)
    seen: set = set()
    curve = np.empty(len(cells), dtype=np.int64)
    for i, c in enumerate(map(tuple, cells)):
        seen.add(c)
        curve[i] = len(seen)
    return CoverageReport(grid_per_dim, len(seen), total, curve)


# -------------------------------------------------------------------- robustness

@dataclass
class RobustnessIntervals:
    x_star: np.ndarray
    low: np.ndarray
    high: np.ndarray
    delta: float
    f_star: float
    note: str = "one-at-a-time probes; interactions between variables are not assessed"

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.high - self.low)


def _edge(f, x_star, i, f_star, delta, limit, scan, bisect_steps):
    """Largest distance toward ``limit`` along coordinate ``i`` with |f - f*| < delta."""
    span = limit - x_star[i]
    if span == 0:
        return x_star[i]
    good = 0.0
    bad = None
    for k in range(1, scan + 1):
        t = k / scan
        x = x_star.copy()
        x[i] = x_star[i] + t * span
        if abs(f(x) - f_star) < delta:
            good = t
        else:
            bad = t
            break
    if bad is None:
        return limit
    for _ in range(bisect_steps):
        mid = 0.5 * (good + bad)
        x = x_star.copy()
        x[i] = x_star[i] + mid * span
        if abs(f(x) - f_star) < delta:
            good = mid
        else:
            bad = mid
    return x_star[i] + good * span


def robustness_intervals(problem: Problem, x_star, delta: float, scan: int = 20, fidelity: int = 0,
                         bisect_steps: int = 40) -> RobustnessIntervals:
    """Per-variable range around ``x_star`` where the objective moves by less than ``delta``."""
    x_star = np.asarray(x_star, dtype=float).copy()
    if delta <= 0:
        raise ValueError("delta must be positive")

    def f(x):
        return evaluate(problem, x, fidelity).objective

    f_star = f(x_star)
    lo, hi = problem.bounds.lower, problem.bounds.upper
    low = np.empty_like(x_star)
    high = np.empty_like(x_star)
    for i in range(len(x_star)):
        low[i] = _edge(f, x_star, i, f_star, delta, lo[i], scan, bisect_steps)
        high[i] = _edge(f, x_star, i, f_star, delta, hi[i], scan, bisect_steps)
    return RobustnessIntervals(x_star, low, high, float(delta), float(f_star))


# ------------------------------------------------------------------ contribution

@dataclass
class Contribution:
    scores: np.ndarray
    ranking: np.ndarray  # variable indices, most influential first
    r_squared: float
    coefficients: np.ndarray


def contribution_ranking(archive: EvaluationArchive, bounds: Bounds | None = None) -> Contribution:
    """Linear surrogate of objective vs normalized coordinates; score = |coef| * std.

    ``r_squared`` tells how much of the objective the linear fit explains;
    low values mean the ranking should not be trusted.
    """
    X = archive.genotypes
    y = archive.objectives
    n, dim = X.shape if X.ndim == 2 else (0, 0)
    if n < dim + 1 or n == 0:
        raise DegenerateArchive(f"{n} rows cannot fit {dim} coefficients plus an intercept")
    keep = np.isfinite(y)
    X, y = X[keep], y[keep]
    if len(y) < dim + 1:
        raise DegenerateArchive("too few finite objective values")
    Z = _normalizer([], bounds)(X) if bounds is not None else _minmax(X)
    std = Z.std(axis=0)
    if np.ptp(y) == 0:
        coef = np.zeros(dim)
        r2 = 1.0
    else:
        A = np.column_stack([np.ones(len(y)), Z])
        sol, *_ = np.linalg.lstsq(A, y, rcond=None)
        coef = sol[1:]
        resid = y - A @ sol
        r2 = float(1.0 - resid @ resid / np.sum((y - y.mean()) ** 2))
    scores = np.abs(coef) * std
    ranking = np.argsort(-scores, kind="stable")
    return Contribution(scores, ranking, r2, coef)


def _minmax(X: np.ndarray) -> np.ndarray:
    lo = X.min(axis=0)
    w = X.max(axis=0) - lo
    return (X - lo) / np.where(w > 0, w, 1.0)


# --------------------------------------------------------------------- statistics

@dataclass
class RunStatistics:
    best_a: np.ndarray
    best_b: np.ndarray
    median_a: float
    median_b: float
    interval_a: tuple
    interval_b: tuple
    wins: int
    ties: int
    losses: int

    @property
    def win_probability(self) -> float:
        """Posterior mean P(A beats B) under a uniform prior; ties count as half a win."""
        n = self.wins + self.ties + self.losses
        return (self.wins + 0.5 * self.ties + 1.0) / (n + 2.0)


def bootstrap_median_interval(values, n_boot: int, rng, level: float = 0.95) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    idx = rng.integers(0, len(v), size=(n_boot, len(v)))
    meds = np.median(v[idx], axis=1)
    a = 100 * (1 - level) / 2
    lo, hi = np.percentile(meds, [a, 100 - a])
    return float(lo), float(hi)


def multi_run_stats(best_a, best_b, bootstrap_n: int = 2000, rng=None) -> RunStatistics:
    """Seed-paired comparison of two configurations (lower objective wins)."""
    a = np.asarray(best_a, dtype=float)
    b = np.asarray(best_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) == 0:
        raise UnpairedRuns(f"need equal-length paired results, got {a.shape} and {b.shape}")
    if rng is None:
        rng = np.random.default_rng(0)
    wins = int(np.sum(a < b))
    losses = int(np.sum(a > b))
    ties = len(a) - wins - losses
    return RunStatistics(a, b, float(np.median(a)), float(np.median(b)),
                         bootstrap_median_interval(a, bootstrap_n, rng),
                         bootstrap_median_interval(b, bootstrap_n, rng), wins, ties, losses)


# ------------------------------------------------------------------------ export

def write_stn(graph: StnGraph, dot_path, json_path) -> None:
    with open(dot_path, "w") as fh:
        fh.write(graph.to_dot())
    with open(json_path, "w") as fh:
        json.dump(graph.to_json(), fh, indent=1)


def write_coverage_csv(report: CoverageReport, path) -> None:
    """Columns: eval, occupied, fraction (grid-cell fraction of the unit box)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eval", "occupied", "fraction"])
        for i, c in enumerate(report.curve):
            w.writerow([i, int(c), repr(float(c / report.total))])


def write_contribution_csv(contrib: Contribution, path, names: Sequence[str] | None = None) -> None:
    """Columns: rank, variable, score, coefficient, r_squared."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "variable", "score", "coefficient", "r_squared"])
        for r, i in enumerate(contrib.ranking):
            name = names[i] if names else f"x{i + 1}"
            w.writerow([r + 1, name, repr(float(contrib.scores[i])), repr(float(contrib.coefficients[i])),
                        repr(float(contrib.r_squared))])


def write_robustness_csv(rob: RobustnessIntervals, path) -> None:
    """Columns: variable, x_star, low, high, delta."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variable", "x_star", "low", "high", "delta"])
        for i in range(len(rob.x_star)):
            w.writerow([f"x{i + 1}", repr(float(rob.x_star[i])), repr(float(rob.low[i])),
                        repr(float(rob.high[i])), repr(float(rob.delta))])
