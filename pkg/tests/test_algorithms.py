import numpy as np
import pytest

from physevo.algorithms import (InvalidVariantParameters, OptimizerConfig, SeedDimensionMismatch, SeedOutOfBounds,
                                initialize_population, run)
from physevo.constraints import ConstraintSet
from physevo.core import Bounds, Problem, Sphere, rng_stream


@pytest.mark.parametrize("variant", ["DE", "PSO", "GA", "ES"])
def test_variants_improve_on_sphere(variant):
    res = run(Sphere(4), OptimizerConfig(variant, max_evaluations=3000), rng=rng_stream(0))
    first = res.trace[0].best_objective
    assert res.best_result.objective < 0.01 * first
    assert res.evaluations_used <= 3000
    assert len(res.archive) == res.evaluations_used


@pytest.mark.parametrize("variant", ["DE", "PSO", "GA", "ES"])
def test_same_seed_same_archive(variant):
    cfg = OptimizerConfig(variant, max_evaluations=600)
    a = run(Sphere(3), cfg, rng=rng_stream(9))
    b = run(Sphere(3), cfg, rng=rng_stream(9))
    assert a.archive.digest() == b.archive.digest()
    c = run(Sphere(3), cfg, rng=rng_stream(10))
    assert a.archive.digest() != c.archive.digest()


def test_candidates_stay_in_bounds():
    p = Sphere(5, -1.0, 2.0)
    res = run(p, OptimizerConfig("PSO", max_evaluations=1000), rng=rng_stream(1))
    X = res.archive.genotypes
    assert np.all(X >= -1.0) and np.all(X <= 2.0)


def test_target_and_stagnation_stop_early():
    res = run(Sphere(2), OptimizerConfig("ES", max_evaluations=50_000, target_objective=1e-6), rng=rng_stream(2))
    assert res.termination_reason == "target"
    flat = type("Flat", (Problem,), {"bounds": Bounds.uniform(0, 1, 2), "compute": lambda s, x, f: (1.0, (), ())})()
    res = run(flat, OptimizerConfig("DE", max_evaluations=50_000, stagnation_window=5), rng=rng_stream(2))
    assert res.termination_reason == "stagnation"


def test_seeds_are_evaluated_first():
    seed = np.array([0.1, -0.2, 0.3])
    res = run(Sphere(3), OptimizerConfig("GA", max_evaluations=100), seeds=[seed], rng=rng_stream(3))
    np.testing.assert_array_equal(res.archive[0].x, seed)


def test_seed_validation():
    b = Bounds.uniform(0, 1, 2)
    cfg = OptimizerConfig(population_size=4)
    with pytest.raises(SeedOutOfBounds):
        initialize_population(cfg, b, [[2.0, 0.0]], rng_stream(0))
    with pytest.raises(SeedDimensionMismatch):
        initialize_population(cfg, b, [[0.5]], rng_stream(0))
    with pytest.raises(InvalidVariantParameters):
        initialize_population(cfg, b, [[0.5, 0.5]] * 5, rng_stream(0))


@pytest.mark.parametrize("kwargs", [dict(variant="SA"), dict(population_size=3), dict(max_evaluations=10),
                                    dict(stagnation_window=-1)])
def test_config_validation(kwargs):
    with pytest.raises(InvalidVariantParameters):
        OptimizerConfig(**kwargs).validate()


def test_resolved_fills_dimension_defaults():
    cfg = OptimizerConfig("ES").resolved(10)
    assert cfg.es.lam == 4 + int(3 * np.log(10)) and cfg.es.mu == cfg.es.lam // 2
    assert cfg.ga.mutation_prob == pytest.approx(0.1)


def test_constraint_handling_reaches_feasible_region():
    class Constrained(Problem):
        bounds = Bounds.uniform(-2, 2, 2)
        hard_names = ("x0 >= 1",)

        def compute(self, x, fidelity):
            return float(x @ x), [max(0.0, 1.0 - x[0])], ()

    res = run(Constrained(), OptimizerConfig("DE", max_evaluations=3000), rng=rng_stream(4))
    assert res.best_result.feasible
    assert res.best_result.objective == pytest.approx(1.0, abs=1e-3)
    pen = run(Constrained(), OptimizerConfig("DE", max_evaluations=3000), rng=rng_stream(4),
              constraints=ConstraintSet(mode="static_penalty"))
    assert pen.best_vector[0] == pytest.approx(1.0, abs=1e-2)


def test_evaluation_error_recorded():
    class Broken(Problem):
        bounds = Bounds.uniform(0, 1, 2)

        def compute(self, x, fidelity):
            raise RuntimeError("solver exploded")

    res = run(Broken(), OptimizerConfig(max_evaluations=100), rng=rng_stream(0))
    assert res.termination_reason == "error" and "solver exploded" in res.message


def test_threads_do_not_change_results():
    cfg = OptimizerConfig("DE", max_evaluations=400)
    a = run(Sphere(3), cfg, rng=rng_stream(6), threads=1)
    b = run(Sphere(3), cfg, rng=rng_stream(6), threads=3)
    assert a.archive.digest() == b.archive.digest()
