import numpy as np
import pytest

from physevo.constraints import ConstraintSet, is_better
from physevo.core import evaluate
from physevo.problems import fpp


def test_hashin_modes():
    lim = fpp.StrengthLimits()
    assert fpp.hashin_index([-lim.Xc, 0, 0], lim) == pytest.approx(1.0)
    assert fpp.hashin_index([0, lim.Yt, 0], lim) == pytest.approx(1.0)
    assert fpp.hashin_index([0, -lim.Yc, 0], lim) == pytest.approx(1.0)
    assert fpp.hashin_index([0, 0, lim.S], lim) == pytest.approx(1.0)
    assert lim.St == lim.Yc / 2
    with pytest.raises(ValueError):
        fpp.StrengthLimits(Xt=0.0)


def test_patch_sampling_and_cover():
    p = fpp.Patch(0.1, 0.05, np.pi / 2, width=0.08, height=0.02)
    pts = p.corners_grid()
    assert pts.shape == (16, 2)
    np.testing.assert_allclose(pts[:, 1].max() - pts[:, 1].min(), 0.08)
    assert p.covers(np.array([[0.1, 0.09], [0.12, 0.05]])).tolist() == [True, False]


def test_stacked_patches_add_stiffness():
    prob = fpp.FppProblem(fpp.FppConfig(n_patches=2))
    one = fpp.stiffness_field(fpp.design_patches([0.1, 0.05, 0.0, 0.5, 0.5, 0.0], prob.cfg), prob.mesh,
                              prob.cfg.material)
    two = fpp.stiffness_field(fpp.design_patches([0.1, 0.05, 0.0, 0.1, 0.05, 0.0], prob.cfg), prob.mesh,
                              prob.cfg.material)
    assert two.T.max() == pytest.approx(2 * one.T.max())


def test_thickness_jump_zero_for_uniform_field():
    prob = fpp.FppProblem()
    assert fpp.thickness_jump(prob.mesh, np.ones(prob.mesh.n_elements)) == 0.0


def test_seeds_are_feasible_in_position():
    prob = fpp.FppProblem()
    for x in prob.seed_solutions():
        assert evaluate(prob, x).hard_violations[0] == 0.0


def test_misaligned_fibres_raise_compliance():
    prob = fpp.FppProblem()
    x = prob.seed_solutions()[1].reshape(-1, 3).copy()
    values = []
    for theta in (0.0, 0.2, 0.5):
        x[:, 2] = theta
        values.append(evaluate(prob, x.ravel()).objective)
    assert values[0] < values[1] < values[2] < fpp.PENALTY_CAP


def test_unsupported_layout_is_penalized():
    prob = fpp.FppProblem(fpp.FppConfig(n_patches=1))
    res = evaluate(prob, np.array([0.1, 0.05, 0.0]))
    assert res.objective == fpp.PENALTY_CAP and res.hard_violations[1] == 1.0


def test_design_csv_roundtrip(tmp_path):
    x = fpp.FppProblem().seed_solutions()[0]
    fpp.write_design_csv(tmp_path / "d.csv", x)
    np.testing.assert_array_equal(fpp.read_design_csv(tmp_path / "d.csv"), x)


def test_hole_removes_material():
    prob = fpp.FppProblem(fpp.FppConfig(hole_radius=0.02))
    assert prob.void.sum() > 0
    assert not prob.inside(np.array([[0.1, 0.05]]))[0]


def test_feasible_beats_infeasible_with_lower_objective():
    cs = ConstraintSet()
    prob = fpp.FppProblem()
    good = evaluate(prob, prob.seed_solutions()[0])
    bad = evaluate(prob, np.tile([0.2, 0.1, 0.0], 8))
    assert good.feasible and not bad.feasible
    assert is_better(good, bad, cs)
