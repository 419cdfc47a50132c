import numpy as np
import pytest

from physevo.core import evaluate
from physevo.problems import shape


def test_circle_boundary_radius():
    pts = shape.hole_boundary(shape.HoleSpline.circle(0.4), 64)
    r = np.linalg.norm(pts, axis=1)
    assert np.max(np.abs(r / 0.4 - 1)) < 0.01
    np.testing.assert_allclose(pts[0], [0.4, 0.0], atol=1e-14)
    np.testing.assert_allclose(pts[-1], [0.0, 0.4], atol=1e-14)


def test_vector_roundtrip():
    s = shape.HoleSpline(0.3, 0.25, 0.2, 0.35, 2.0)
    assert shape.HoleSpline.from_vector(s.as_vector()) == s


def test_axis_parallel_tangent_is_invalid():
    with pytest.raises(shape.InvalidSpline):
        shape.HoleSpline(0.3, 0.2, 0.2, 0.3, np.pi).control_points()


def test_validity():
    assert shape.validity(shape.HoleSpline.circle(0.3)) == 0.0
    assert shape.validity(shape.HoleSpline(1.2, 0.2, 0.2, 0.3, 2.0)) == pytest.approx(0.2)
    # node far outside the chord of the endpoints folds the curve
    assert shape.validity(shape.HoleSpline(0.1, 0.7, 0.7, 0.1, 1.7)) > 0


def test_points_in_polygon():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert shape.points_in_polygon(np.array([[0.5, 0.5], [1.5, 0.5]]), sq).tolist() == [True, False]
    assert shape.shoelace(sq) == pytest.approx(1.0)


@pytest.fixture(scope="module")
def problem():
    return shape.ShapeProblem()


def test_mirror_symmetry_under_equal_loads(problem):
    a = problem.evaluate_detail(shape.HoleSpline.ellipse(0.45, 0.3), 0)
    b = problem.evaluate_detail(shape.HoleSpline.ellipse(0.3, 0.45), 0)
    assert a.objective == pytest.approx(b.objective, rel=1e-9)
    assert a.area == pytest.approx(b.area, rel=1e-12)


def test_small_hole_fails_area_constraint(problem):
    res = evaluate(problem, shape.HoleSpline.circle(0.1).as_vector())
    assert res.hard_violations[0] > 0 and not res.feasible
    assert evaluate(problem, problem.seed_solutions()[0]).feasible


def test_probe_designs_load():
    X = shape.load_probe_designs()
    assert X.shape == (5, 5)


def test_polyline_csv(tmp_path):
    pts = shape.hole_boundary(shape.HoleSpline.circle(0.3), 8)
    shape.write_polyline_csv(tmp_path / "p.csv", pts)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "x,y"
    assert len((tmp_path / "p.csv").read_text().splitlines()) == len(pts) + 1
