import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from physevo.constraints import (ConstraintSet, best_index, estimate_penalty_coefficient, is_better,
                                 lexicographic_compare, penalized_objective, rank_order, repair_bounds, sort_key,
                                 violation_vector)
from physevo.core import Bounds, EvalResult

finite = st.floats(-1e6, 1e6, allow_nan=False)
viol = st.one_of(st.just(0.0), st.floats(0, 10, allow_nan=False))
results = st.builds(lambda f, h, s, i: EvalResult(f, h, s, 0, i), finite, st.lists(viol, min_size=2, max_size=2),
                    st.lists(st.floats(0, 5, allow_nan=False), min_size=1, max_size=1), st.integers(0, 100))


@given(results, results)
def test_antisymmetry(a, b):
    assert lexicographic_compare(a, b) == -lexicographic_compare(b, a)


@given(results, results, results)
def test_transitivity(a, b, c):
    if lexicographic_compare(a, b) <= 0 and lexicographic_compare(b, c) <= 0:
        assert lexicographic_compare(a, c) <= 0


@given(results, results)
def test_feasible_always_beats_infeasible(a, b):
    if a.feasible and not b.feasible:
        assert is_better(a, b)


@given(results)
@settings(max_examples=50)
def test_static_penalty_adds_weighted_violation(r):
    cs = ConstraintSet(mode="static_penalty", penalty_coefficient=10.0)
    expected = r.objective + r.soft_penalties.sum() + 10.0 * r.total_violation
    assert penalized_objective(r, cs) == pytest.approx(expected)


def test_infeasible_ordered_by_violation():
    a = EvalResult(100.0, [0.1], eval_index=0)
    b = EvalResult(-100.0, [0.5], eval_index=1)
    assert is_better(a, b)
    assert rank_order([b, a]) == [1, 0]
    assert best_index([b, a]) == 1


def test_soft_weights_applied():
    r = EvalResult(1.0, soft_penalties=[2.0])
    assert penalized_objective(r, ConstraintSet(soft_weights=(0.5,))) == 2.0
    with pytest.raises(ValueError):
        penalized_objective(r, ConstraintSet(soft_weights=(0.5, 1.0)))


def test_eval_index_breaks_ties():
    a, b = EvalResult(1.0, eval_index=3), EvalResult(1.0, eval_index=7)
    assert sort_key(a) < sort_key(b)


def test_violation_vector_clips_negative():
    cs = ConstraintSet(hard=(lambda x, s: x[0] - 1.0, lambda x, s: -x[0]))
    np.testing.assert_array_equal(violation_vector(cs, np.array([2.0])), [1.0, 0.0])


@pytest.mark.parametrize("policy", ["clamp", "reflect", "resample"])
def test_repair_lands_in_bounds(policy):
    b = Bounds([0.0, -1.0], [1.0, 1.0])
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.uniform(-5, 5, 2)
        assert b.contains(repair_bounds(x, b, policy, rng))


def test_repair_leaves_inside_points_alone():
    b = Bounds([0.0], [1.0])
    np.testing.assert_array_equal(repair_bounds([0.3], b, "reflect"), [0.3])
    np.testing.assert_allclose(repair_bounds([1.25], b, "reflect"), [0.75])


def test_invalid_policies_rejected():
    with pytest.raises(ValueError):
        ConstraintSet(bounds_policy="wrap")
    with pytest.raises(ValueError):
        ConstraintSet(mode="lexi")


def test_penalty_coefficient_estimate():
    rs = [EvalResult(v) for v in (1.0, -3.0, 2.0)]
    assert estimate_penalty_coefficient(rs) == pytest.approx(2e3)
