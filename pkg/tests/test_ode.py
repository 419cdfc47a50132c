import math

import numpy as np
import pytest

from physevo.ode import NonFiniteState, Trajectory, integrate_fixed_rk4


def test_harmonic_oscillator_energy():
    traj = integrate_fixed_rk4(lambda t, x: np.array([x[1], -x[0]]), [1.0, 0.0], 0.0, 2 * math.pi, 400)
    np.testing.assert_allclose(traj.states[-1], [1.0, 0.0], atol=1e-8)


def test_polynomial_rhs_integrated_exactly():
    # RK4 is exact for dx/dt = t^3
    traj = integrate_fixed_rk4(lambda t, x: np.array([t ** 3]), [0.0], 0.0, 2.0, 3)
    assert traj.states[-1, 0] == pytest.approx(4.0, rel=1e-14)


def test_sampling_interpolates_between_grid_points():
    traj = integrate_fixed_rk4(lambda t, x: np.array([1.0]), [0.0], 0.0, 1.0, 4, sample_times=[0.1, 0.55, 1.0])
    np.testing.assert_allclose(traj.states[:, 0], [0.1, 0.55, 1.0])
    with pytest.raises(ValueError):
        integrate_fixed_rk4(lambda t, x: x, [1.0], 0.0, 1.0, 4, sample_times=[1.5])


def test_blow_up_reports_time():
    with pytest.raises(NonFiniteState) as info, np.errstate(over="ignore"):
        integrate_fixed_rk4(lambda t, x: x ** 2 * 1e200, [1e200], 0.0, 1.0, 10)
    assert 0.0 < info.value.time <= 1.0


def test_invalid_arguments():
    with pytest.raises(ValueError):
        integrate_fixed_rk4(lambda t, x: x, [1.0], 1.0, 0.0, 10)
    with pytest.raises(ValueError):
        integrate_fixed_rk4(lambda t, x: x, [1.0], 0.0, 1.0, 0)
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 1)))
