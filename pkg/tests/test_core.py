import numpy as np
import pytest
from numpy.testing import assert_array_equal

from physevo.core import (Bounds, DimensionMismatch, EvalCounter, EvalResult, NonFiniteInput, Rastrigin,
                          Rosenbrock, Sphere, UnknownFidelity, as_solution, evaluate, rng_stream)


def test_as_solution_validates():
    assert_array_equal(as_solution([1, 2]), [1.0, 2.0])
    with pytest.raises(NonFiniteInput):
        as_solution([1.0, np.nan])
    with pytest.raises(DimensionMismatch):
        as_solution([1.0, 2.0], dim=3)
    with pytest.raises(DimensionMismatch):
        as_solution([])


def test_bounds_normalize_roundtrip():
    b = Bounds([-1.0, 0.0], [1.0, 10.0])
    x = np.array([0.5, 2.5])
    np.testing.assert_allclose(b.denormalize(b.normalize(x)), x)
    assert b.contains(x) and not b.contains([2.0, 0.0])
    with pytest.raises(ValueError):
        Bounds([1.0], [0.0])
    with pytest.raises(DimensionMismatch):
        Bounds([0.0], [1.0, 2.0])


def test_eval_result_rejects_negative_violation():
    with pytest.raises(ValueError):
        EvalResult(1.0, [-0.1])
    r = EvalResult(1.0, [0.0, 0.2])
    assert not r.feasible and r.total_violation == pytest.approx(0.2)


def test_evaluate_counts_and_checks_fidelity():
    c = EvalCounter()
    p = Sphere(3)
    r1 = evaluate(p, [1, 1, 1], counter=c)
    r2 = evaluate(p, [0, 0, 0], counter=c)
    assert (r1.eval_index, r2.eval_index) == (0, 1)
    assert r1.objective == 3.0
    with pytest.raises(UnknownFidelity):
        evaluate(p, [0, 0, 0], fidelity=1)


def test_benchmarks_vanish_at_optimum():
    assert evaluate(Sphere(4), np.zeros(4)).objective == 0.0
    assert evaluate(Rosenbrock(4), np.ones(4)).objective == 0.0
    assert evaluate(Rastrigin(4), np.zeros(4)).objective == pytest.approx(0.0, abs=1e-12)


def test_rng_streams_reproducible_and_independent():
    a = rng_stream(5, 0).random(4)
    b = rng_stream(5, 0).random(4)
    c = rng_stream(5, 1).random(4)
    assert_array_equal(a, b)
    assert not np.allclose(a, c)
