"""Run specifications, execution, run directories and report export.

A run directory holds::

    config.toml          expanded configuration (every default written out)
    RUNNING              present while the harness works; left behind by a crash
    archive_000.jsonl    one record per evaluation, one file per repetition
    summary.json         best vector, objective, termination and timing per repetition
    reports/             files written by :func:`export_reports`
"""
from __future__ import annotations

import csv
import dataclasses
import json
import re
import sys
import time
import typing
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from . import explain
from .algorithms import OptimizerConfig, run
from .archive import EvaluationArchive
from .constraints import ConstraintSet
from .core import PhysevoError, Problem, Rastrigin, Rosenbrock, Sphere, rng_stream

MARKER = "RUNNING"
REPORT_KINDS = ("stn", "coverage", "robustness", "contribution", "stats", "convergence")


class ConfigError(PhysevoError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.line, self.column = line, column


class UnknownKey(ConfigError):
    pass


class MissingRequired(ConfigError):
    pass


class IncompleteRun(PhysevoError):
    pass


class MissingArchive(PhysevoError):
    pass


# ------------------------------------------------------------------ registry

@dataclass
class SphereConfig:
    dim: int = 10
    low: float = -5.0
    high: float = 5.0


@dataclass
class RosenbrockConfig:
    dim: int = 10
    low: float = -5.0
    high: float = 10.0


@dataclass
class RastriginConfig:
    dim: int = 10
    low: float = -5.12
    high: float = 5.12


@dataclass
class ProblemEntry:
    config_cls: type
    factory: Callable[[Any, Any], Problem]
    description: str


def _benchmark(cls):
    def make(cfg, rng):
        return cls(cfg.dim, cfg.low, cfg.high)
    return make


def _registry() -> dict[str, ProblemEntry]:
    from .problems import eit, fpp, pet, scara, shape
    return {
        "sphere": ProblemEntry(SphereConfig, _benchmark(Sphere), "sum of squares"),
        "rosenbrock": ProblemEntry(RosenbrockConfig, _benchmark(Rosenbrock), "Rosenbrock valley"),
        "rastrigin": ProblemEntry(RastriginConfig, _benchmark(Rastrigin), "multimodal Rastrigin"),
        "scara": ProblemEntry(scara.ScaraConfig, lambda c, rng: scara.ScaraProblem(c, rng=rng),
                              "hybrid physics/ANN model of a two-axis SCARA arm"),
        "pet": ProblemEntry(pet.PetConfig, lambda c, rng: pet.PetProblem(c, rng=rng),
                            "compartment-model fit of one PET time-activity curve"),
        "eit": ProblemEntry(eit.EitConfig, lambda c, rng: eit.EitProblem(c, rng=rng),
                            "conductivity reconstruction from boundary voltages"),
        "fpp": ProblemEntry(fpp.FppConfig, lambda c, rng: fpp.FppProblem(c),
                            "placement of fiber patches on a loaded plate"),
        "shape": ProblemEntry(shape.ShapeConfig, lambda c, rng: shape.ShapeProblem(c),
                              "hole shape in a biaxially loaded plate"),
    }


PROBLEMS = _registry()


# --------------------------------------------------------- dataclass <-> dict

def _convert(value, default, hint, path):
    if is_dataclass(default):
        if not isinstance(value, dict):
            raise ConfigError(f"{path} must be a table")
        return from_dict(type(default), value, path)
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    if isinstance(default, list) and default and isinstance(default[0], tuple) and isinstance(value, list):
        return [_freeze(v) for v in value]
    if isinstance(default, bool) or hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path} must be true or false")
        return value
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _freeze(v):
    return tuple(_freeze(x) for x in v) if isinstance(v, list) else v


def from_dict(cls, data: dict, path: str = ""):
    """Build dataclass ``cls`` from a mapping; unknown keys raise :class:`UnknownKey`."""
    names = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in names:
            raise UnknownKey(f"unknown key {path + '.' if path else ''}{key}; allowed: {sorted(names)}")
    hints = typing.get_type_hints(cls)
    defaults = cls()
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = _convert(value, getattr(defaults, key), hints.get(key), f"{path}.{key}" if path else key)
    return cls(**kwargs)


def to_plain(obj):
    """TOML-ready form: dataclasses become tables, tuples lists, ``None`` entries are dropped."""
    if is_dataclass(obj):
        return {f.name: to_plain(getattr(obj, f.name)) for f in fields(obj) if getattr(obj, f.name) is not None}
    if isinstance(obj, dict):
        return {k: to_plain(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ------------------------------------------------------------------- RunSpec

@dataclass
class RunSection:
    problem: str = ""
    seed: int = 0
    repetitions: int = 1
    output: str = "runs/out"
    record_wall_time: bool = True
    # (fidelity, evaluations) stages; empty means one stage at fidelity 0
    fidelity_schedule: list = field(default_factory=list)


@dataclass
class ConstraintSection:
    mode: str = "feasibility"
    bounds_policy: str = "reflect"
    penalty_coefficient: float | None = None


@dataclass
class SeedSection:
    use_problem_seeds: bool = True
    vectors: list = field(default_factory=list)
    file: str | None = None


@dataclass
class RunSpec:
    run: RunSection
    problem: Any
    optimizer: OptimizerConfig
    constraints: ConstraintSection
    seeds: SeedSection

    def to_dict(self) -> dict:
        return {"run": to_plain(self.run), "problem": to_plain(self.problem),
                "optimizer": to_plain(self.optimizer), "constraints": to_plain(self.constraints),
                "seeds": to_plain(self.seeds)}

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def build_problem(self) -> Problem:
        return PROBLEMS[self.run.problem].factory(self.problem, rng_stream(self.run.seed, 1_000_000))

    def constraint_set(self, problem: Problem) -> ConstraintSet:
        w = tuple(float(v) for v in problem.soft_weights) or None
        c = self.constraints
        return ConstraintSet(soft_weights=w, bounds_policy=c.bounds_policy, mode=c.mode,
                             penalty_coefficient=c.penalty_coefficient)

    def seed_vectors(self, problem: Problem) -> list[np.ndarray]:
        out = [np.asarray(s, dtype=float) for s in problem.seed_solutions()] if self.seeds.use_problem_seeds else []
        out += [np.asarray(v, dtype=float) for v in self.seeds.vectors]
        if self.seeds.file:
            out += [np.asarray(row, dtype=float) for row in np.atleast_2d(np.loadtxt(self.seeds.file, delimiter=","))]
        return out


_SECTIONS = ("run", "problem", "optimizer", "constraints", "seeds")


def parse_config(text: str) -> RunSpec:
    """Parse TOML text into a fully expanded :class:`RunSpec`."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ParseError(str(exc), line, col) from exc
    for key in data:
        if key not in _SECTIONS:
            raise UnknownKey(f"unknown section {key}; allowed: {list(_SECTIONS)}")
    run_sec = from_dict(RunSection, data.get("run", {}), "run")
    if not run_sec.problem:
        raise MissingRequired("run.problem is required")
    if run_sec.problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {run_sec.problem!r}; choose from {sorted(PROBLEMS)}")
    if run_sec.repetitions < 1:
        raise ConfigError("run.repetitions must be >= 1")
    entry = PROBLEMS[run_sec.problem]
    problem_cfg = from_dict(entry.config_cls, data.get("problem", {}), "problem")
    opt = from_dict(OptimizerConfig, data.get("optimizer", {}), "optimizer")
    cons = from_dict(ConstraintSection, data.get("constraints", {}), "constraints")
    ConstraintSet(bounds_policy=cons.bounds_policy, mode=cons.mode, penalty_coefficient=cons.penalty_coefficient)
    seeds = from_dict(SeedSection, data.get("seeds", {}), "seeds")
    if not run_sec.fidelity_schedule:
        run_sec.fidelity_schedule = [[0, opt.max_evaluations]]
    sched = []
    for stage in run_sec.fidelity_schedule:
        if len(stage) != 2 or int(stage[1]) < 1:
            raise ConfigError("run.fidelity_schedule entries are [fidelity, evaluations] with evaluations >= 1")
        sched.append([int(stage[0]), int(stage[1])])
    run_sec.fidelity_schedule = sched
    opt = dataclasses.replace(opt, max_evaluations=sum(s[1] for s in sched))
    spec = RunSpec(run_sec, problem_cfg, opt, cons, seeds)
    return spec


def load_config(path) -> RunSpec:
    """Read and expand a TOML run configuration.

    Raises
    ------
    ParseError
        Malformed TOML; carries ``line`` and ``column``.
    UnknownKey
        A key not in the schema, named in the message.
    MissingRequired
        ``run.problem`` absent.
    """
    return parse_config(Path(path).read_text())


def resolve_spec(spec: RunSpec, problem: Problem) -> RunSpec:
    """Fill dimension-dependent optimizer defaults and check fidelities against the problem."""
    for fid, _ in spec.run.fidelity_schedule:
        if fid not in problem.fidelities:
            raise ConfigError(f"fidelity {fid} not offered by {spec.run.problem} {problem.fidelities}")
    opt = spec.optimizer.resolved(problem.dim)
    if len(spec.run.fidelity_schedule) > 1:
        for _, n in spec.run.fidelity_schedule:
            if n <= opt.population_size:
                raise ConfigError("every fidelity stage needs more evaluations than the population size")
    return dataclasses.replace(spec, optimizer=opt)


# ----------------------------------------------------------------- execution

@dataclass
class RepetitionSummary:
    run_id: int
    seed: int
    best_vector: list
    best_objective: float
    best_violation: float
    feasible: bool
    termination: str
    evaluations: int
    message: str
    elapsed_s: float
    digest: str


def _shift(archive: EvaluationArchive, eval_offset: int, iter_offset: int, run_id: int) -> list:
    return [dataclasses.replace(r, eval_index=r.eval_index + eval_offset, iteration=r.iteration + iter_offset,
                                run_id=run_id) for r in archive]


def run_repetition(spec: RunSpec, problem: Problem, rep: int):
    """One seeded repetition through every fidelity stage; returns (archive, summary)."""
    seed = spec.run.seed + rep
    rng = rng_stream(seed)
    cs = spec.constraint_set(problem)
    seeds = spec.seed_vectors(problem)
    records = []
    best = None
    t0 = time.perf_counter()
    used = 0
    iters = 0
    for fid, budget in spec.run.fidelity_schedule:
        cfg = dataclasses.replace(spec.optimizer, max_evaluations=budget)
        stage_seeds = seeds if best is None else [best.best_vector] + seeds[: cfg.population_size - 1]
        res = run(problem, cfg, seeds=stage_seeds, rng=rng, constraints=cs, run_id=rep, fidelity=fid)
        stage = _shift(res.archive, used, iters, rep)
        records += stage
        used += res.evaluations_used
        iters = (stage[-1].iteration + 1) if stage else iters
        best = res
        if res.termination_reason == "error":
            break
    archive = EvaluationArchive(rep, records)
    summary = RepetitionSummary(rep, seed, [float(v) for v in best.best_vector], float(best.best_result.objective),
                                float(best.best_result.total_violation), bool(best.best_result.feasible),
                                best.termination_reason, used, best.message, time.perf_counter() - t0,
                                archive.digest())
    return archive, summary


def execute_run(spec: RunSpec, out_dir=None, force: bool = False) -> Path:
    """Run every repetition of ``spec`` and write the run directory.

    Raises
    ------
    IncompleteRun
        ``out_dir`` holds a crash marker or earlier results and ``force`` is off.
    """
    out = Path(out_dir if out_dir is not None else spec.run.output)
    if out.exists() and any(out.iterdir()) and not force:
        if (out / MARKER).exists():
            raise IncompleteRun(f"{out} holds an interrupted run; rerun with --force to overwrite")
        raise IncompleteRun(f"{out} already holds results; rerun with --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    for old in out.glob("archive_*.jsonl"):
        old.unlink()
    (out / MARKER).write_text("")
    problem = spec.build_problem()
    spec = resolve_spec(spec, problem)
    spec = dataclasses.replace(spec, run=dataclasses.replace(spec.run, output=str(out)))
    (out / "config.toml").write_text(spec.to_toml())
    summaries = []
    for rep in range(spec.run.repetitions):
        archive, summary = run_repetition(spec, problem, rep)
        archive.write(out / f"archive_{rep:03d}.jsonl", wall_time=spec.run.record_wall_time)
        summaries.append(dataclasses.asdict(summary))
    doc = {"problem": spec.run.problem, "dim": problem.dim, "repetitions": summaries}
    (out / "summary.json").write_text(json.dumps(doc, indent=1) + "\n")
    (out / MARKER).unlink()
    return out


# ------------------------------------------------------------------- reports

def load_run(run_dir) -> tuple[RunSpec, list[EvaluationArchive], dict]:
    d = Path(run_dir)
    if (d / MARKER).exists():
        raise IncompleteRun(f"{d} holds an interrupted run")
    paths = sorted(d.glob("archive_*.jsonl"))
    if not paths or not (d / "summary.json").exists():
        raise MissingArchive(f"no archives or summary in {d}")
    spec = load_config(d / "config.toml")
    return spec, [EvaluationArchive.read(p) for p in paths], json.loads((d / "summary.json").read_text())


def best_so_far(archive: EvaluationArchive, cs: ConstraintSet) -> np.ndarray:
    """Objective of the incumbent after each evaluation (feasibility rules)."""
    from .constraints import sort_key
    out = np.empty(len(archive))
    best = None
    for i, rec in enumerate(archive):
        key = sort_key(rec.result(), cs)
        if best is None or key < best[0]:
            best = (key, rec.objective)
        out[i] = best[1]
    return out


def convergence_svg(curves: list[np.ndarray], title: str = "convergence", width: int = 640,
                    height: int = 400) -> str:
    """Best objective vs evaluations, one polyline per run, linear axes."""
    ml, mr, mt, mb = 70, 20, 30, 50
    pw, ph = width - ml - mr, height - mt - mb
    finite = [c[np.isfinite(c)] for c in curves]
    ys = np.concatenate([f for f in finite if f.size]) if any(f.size for f in finite) else np.zeros(1)
    xmax = max((len(c) for c in curves), default=1)
    ymin, ymax = float(ys.min()), float(ys.max())
    if ymax == ymin:
        ymax = ymin + 1.0
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]

    def px(i):
        return ml + pw * (i / max(xmax - 1, 1))

    def py(v):
        return mt + ph * (1 - (v - ymin) / (ymax - ymin))

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
             f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
             f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
             f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle" font-size="12">evaluations</text>',
             f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" font-size="12" '
             f'transform="rotate(-90 16 {mt + ph / 2})">best objective</text>']
    for t in np.linspace(0, 1, 5):
        xv = (xmax - 1) * t
        yv = ymin + (ymax - ymin) * t
        parts.append(f'<text x="{px(xv):.1f}" y="{mt + ph + 16}" text-anchor="middle" font-size="10">{xv:.0f}</text>')
        parts.append(f'<text x="{ml - 4}" y="{py(yv) + 3:.1f}" text-anchor="end" font-size="10">{yv:.3g}</text>')
    for k, c in enumerate(curves):
        pts = " ".join(f"{px(i):.2f},{py(v):.2f}" for i, v in enumerate(c) if np.isfinite(v))
        parts.append(f'<polyline class="run" fill="none" stroke="{colors[k % len(colors)]}" '
                     f'stroke-width="1.5" points="{pts}"><title>run {k}</title></polyline>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


@dataclass
class ReportOptions:
    precision: int = 2
    grid: int = 10
    delta: float = 0.01
    scan: int = 10
    bisect_steps: int = 20
    bootstrap_n: int = 2000


def export_reports(run_dir, kinds=REPORT_KINDS, options: ReportOptions | None = None) -> list[Path]:
    """Write the requested report files into ``run_dir/reports`` and return their paths."""
    opts = options or ReportOptions()
    kinds = list(kinds)
    for k in kinds:
        if k not in REPORT_KINDS:
            raise ConfigError(f"unknown report kind {k!r}; choose from {REPORT_KINDS}")
    spec, archives, summary = load_run(run_dir)
    need_problem = bool({"stn", "coverage", "robustness", "convergence", "contribution"} & set(kinds))
    problem = spec.build_problem() if need_problem else None
    cs = spec.constraint_set(problem) if problem is not None else ConstraintSet()
    rd = Path(run_dir) / "reports"
    rd.mkdir(exist_ok=True)
    written = []
    if "stn" in kinds:
        g = explain.build_stn(archives, opts.precision, problem.bounds, cs)
        explain.write_stn(g, rd / "stn.dot", rd / "stn.json")
        written += [rd / "stn.dot", rd / "stn.json"]
    if "coverage" in kinds:
        for a in archives:
            p = rd / f"coverage_{a.run_id:03d}.csv"
            explain.write_coverage_csv(explain.coverage(a, opts.grid, problem.bounds), p)
            written.append(p)
    if "contribution" in kinds:
        merged = EvaluationArchive(0, [r for a in archives for r in a])
        p = rd / "contribution.csv"
        explain.write_contribution_csv(explain.contribution_ranking(merged, problem.bounds), p)
        written.append(p)
    if "robustness" in kinds:
        reps = summary["repetitions"]
        best = min(reps, key=lambda r: (not r["feasible"], r["best_objective"] if r["feasible"] else r["best_violation"]))
        fid = spec.run.fidelity_schedule[-1][0]
        rob = explain.robustness_intervals(problem, best["best_vector"], opts.delta, opts.scan, fid, opts.bisect_steps)
        p = rd / "robustness.csv"
        explain.write_robustness_csv(rob, p)
        written.append(p)
    if "stats" in kinds:
        vals = np.array([r["best_objective"] for r in summary["repetitions"]])
        lo, hi = explain.bootstrap_median_interval(vals, opts.bootstrap_n, rng_stream(spec.run.seed, 2_000_000))
        doc = {"best_objectives": vals.tolist(), "median": float(np.median(vals)), "median_interval": [lo, hi]}
        p = rd / "stats.json"
        p.write_text(json.dumps(doc, indent=1) + "\n")
        written.append(p)
    if "convergence" in kinds:
        curves = [best_so_far(a, cs) for a in archives]
        p = rd / "convergence.svg"
        p.write_text(convergence_svg(curves, f"{spec.run.problem}: best objective"))
        written.append(p)
    return written


def compare_runs(dir_a, dir_b, bootstrap_n: int = 2000) -> explain.RunStatistics:
    """Seed-paired statistics of two run directories (repetition i of A against repetition i of B)."""
    sa = json.loads((Path(dir_a) / "summary.json").read_text())
    sb = json.loads((Path(dir_b) / "summary.json").read_text())
    ra, rb = sa["repetitions"], sb["repetitions"]
    if len(ra) != len(rb) or any(a["seed"] != b["seed"] for a, b in zip(ra, rb)):
        raise explain.UnpairedRuns("run directories differ in repetition count or seeds")
    return explain.multi_run_stats([r["best_objective"] for r in ra], [r["best_objective"] for r in rb],
                                   bootstrap_n, rng_stream(0, 3_000_000))


def write_vectors_csv(path, vectors) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for v in vectors:
            w.writerow([repr(float(x)) for x in v])
