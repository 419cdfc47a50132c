import numpy as np
import pytest

from physevo.ode import integrate_fixed_rk4
from physevo.problems import scara


def test_kernel_matches_generic_rk4():
    phys = scara.default_phys()
    times = np.linspace(0.0, 2.0, 21)
    fast = scara.simulate_hybrid(np.zeros(6), phys, None, 0.0, 2.0, times, 0.01)
    ref = integrate_fixed_rk4(lambda t, x: scara.physical_rhs(x, phys, t), np.zeros(6), 0.0, 2.0, 200,
                              sample_times=times)
    np.testing.assert_allclose(fast.states, ref.states, rtol=1e-9, atol=1e-12)


def test_ann_size_and_unpack():
    n = scara.AnnParams.size(8)
    assert n == 12 * 8 + 8 + 8 * 6 + 6
    W1, b1, W2, b2 = scara.AnnParams(8, np.arange(n, dtype=float)).unpack()
    assert W1.shape == (8, 12) and b1.shape == (8,) and W2.shape == (6, 8) and b2.shape == (6,)
    assert b2[-1] == n - 1
    with pytest.raises(scara.DimensionMismatch):
        scara.AnnParams(8, np.zeros(n + 1))


def test_measured_data_roundtrip(tmp_path):
    prob = scara.ScaraProblem()
    prob.data.write_csv(tmp_path / "m.csv")
    back = scara.MeasuredData.read_csv(tmp_path / "m.csv")
    np.testing.assert_array_equal(back.Y, prob.data.Y)
    again = scara.ScaraProblem(scara.ScaraConfig(data_path=str(tmp_path / "m.csv")))
    assert again.loss(np.zeros(again.dim)) == prob.loss(np.zeros(prob.dim))


def test_sample_mismatch():
    with pytest.raises(scara.SampleMismatch):
        scara.MeasuredData([0.0, 1.0], np.zeros((3, 2)))
    prob = scara.ScaraProblem()
    X = scara.simulate_hybrid(np.zeros(6), prob.phys, None, 0.0, 1.0, [0.0, 1.0])
    with pytest.raises(scara.SampleMismatch):
        scara.trajectory_loss(X, prob.data)


def test_friction_makes_physical_model_wrong():
    prob = scara.ScaraProblem()
    assert prob.loss(np.zeros(prob.dim)) > 1e-3


def test_exploding_weights_are_capped():
    prob = scara.ScaraProblem()
    assert prob.loss(np.full(prob.dim, 5.0)) <= scara.PENALTY_CAP
