import json

import numpy as np
import pytest

from physevo import explain
from physevo.archive import EvaluationArchive
from physevo.core import Bounds, DimensionMismatch, EvalResult, Sphere


def _archive(X, objs, iterations=None, run_id=0):
    a = EvaluationArchive(run_id)
    iterations = range(len(X)) if iterations is None else iterations
    for i, (x, f, it) in enumerate(zip(X, objs, iterations)):
        a.append(it, x, EvalResult(f, eval_index=i))
    return a


def test_revisited_node_gives_two_nodes_two_edges():
    # two runs: A -> B and B -> A
    A, B = [0.1, 0.1], [0.9, 0.9]
    r1 = _archive([A, B], [2.0, 1.0])
    r2 = _archive([B, A], [2.0, 1.0])
    g = explain.build_stn([r1, r2], 1, Bounds.uniform(0, 1, 2))
    assert g.n_nodes == 2 and g.n_edges == 2
    assert all(n.shared for n in g.nodes.values())


def test_stn_writers(tmp_path):
    g = explain.build_stn([_archive([[0.1, 0.2], [0.3, 0.4]], [1.0, 0.5])], 2, Bounds.uniform(0, 1, 2))
    explain.write_stn(g, tmp_path / "g.dot", tmp_path / "g.json")
    dot = (tmp_path / "g.dot").read_text()
    assert dot.startswith("digraph") and "->" in dot
    doc = json.loads((tmp_path / "g.json").read_text())
    assert len(doc["nodes"]) == 2 and len(doc["edges"]) == 1


def test_stn_rejects_mixed_dimensions():
    with pytest.raises(DimensionMismatch):
        explain.build_stn([_archive([[0.1]], [1.0]), _archive([[0.1, 0.2]], [1.0])])


def test_single_point_coverage():
    rep = explain.coverage(_archive([[0.5, 0.5]], [0.0]), 10, Bounds.uniform(0, 1, 2))
    assert rep.fraction == pytest.approx(0.01)
    np.testing.assert_allclose(rep.fraction_curve, [0.01])


def test_coverage_curve_is_monotone():
    rng = np.random.default_rng(0)
    rep = explain.coverage(_archive(rng.uniform(size=(200, 3)), np.zeros(200)), 4, Bounds.uniform(0, 1, 3))
    assert np.all(np.diff(rep.fraction_curve) >= 0) and rep.fraction <= 1.0


def test_grid_overflow():
    with pytest.raises(explain.GridOverflow):
        explain.coverage(_archive([[0.5] * 30], [0.0]), 10, Bounds.uniform(0, 1, 30), max_cells=10 ** 6)


def test_contribution_needs_enough_rows():
    with pytest.raises(explain.DegenerateArchive):
        explain.contribution_ranking(_archive([[0.1, 0.2], [0.3, 0.4]], [1.0, 2.0]))


def test_constant_objective_gives_zero_scores():
    rng = np.random.default_rng(1)
    c = explain.contribution_ranking(_archive(rng.uniform(size=(20, 3)), np.ones(20)), Bounds.uniform(0, 1, 3))
    np.testing.assert_allclose(c.scores, 0.0, atol=1e-12)


def test_robustness_widens_with_delta():
    p = Sphere(3)
    narrow = explain.robustness_intervals(p, np.zeros(3), 0.01)
    wide = explain.robustness_intervals(p, np.zeros(3), 0.04)
    assert np.all(wide.half_width > narrow.half_width)
    np.testing.assert_allclose(wide.half_width, 0.2, rtol=1e-3)
    with pytest.raises(ValueError):
        explain.robustness_intervals(p, np.zeros(3), 0.0)


def test_robustness_clips_at_bounds():
    rob = explain.robustness_intervals(Sphere(2, -0.05, 0.05), np.zeros(2), 0.01)
    np.testing.assert_allclose(rob.low, -0.05)
    np.testing.assert_allclose(rob.high, 0.05)


def test_unpaired_runs():
    with pytest.raises(explain.UnpairedRuns):
        explain.multi_run_stats([1.0, 2.0], [1.0])


def test_identical_runs_are_a_coin_flip():
    st = explain.multi_run_stats([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 100, np.random.default_rng(0))
    assert st.ties == 3 and st.win_probability == pytest.approx(0.5)


def test_bootstrap_interval_contains_median():
    v = np.random.default_rng(2).normal(size=50)
    lo, hi = explain.bootstrap_median_interval(v, 500, np.random.default_rng(3))
    assert lo <= np.median(v) <= hi
