import numpy as np
import pytest

from physevo.core import evaluate
from physevo.algorithms import OptimizerConfig
from physevo.problems import pet


def test_invalid_parameters_rejected():
    with pytest.raises(pet.InvalidParams):
        pet.Microparams(-0.1, 0.2)
    with pytest.raises(pet.InvalidParams):
        pet.Microparams(0.1, 0.2, VB=1.5)
    with pytest.raises(pet.InvalidParams):
        pet.FrameSchedule([0.0, 2.0], [1.0, 3.0])
    with pytest.raises(pet.InvalidParams):
        pet.InputFunction([1.0, 0.5], [0.0, 1.0])


def test_default_schedule_spans_an_hour():
    s = pet.FrameSchedule.default()
    assert s.n_frames == 37 and s.ends[-1] == pytest.approx(60.0)


def test_tac_is_linear_in_the_input():
    A = pet.InputFunction.gamma_variate()
    A2 = pet.InputFunction(A.times, 2.0 * A.activity)
    s = pet.FrameSchedule.default()
    p = pet.Microparams(0.1, 0.2, 0.05, 0.0, 0.05)
    np.testing.assert_allclose(pet.model_tac(p, A2, s), 2.0 * pet.model_tac(p, A, s), rtol=1e-12)


def test_blood_only_tac_is_frame_mean_of_input():
    A = pet.InputFunction.gamma_variate()
    s = pet.FrameSchedule.default()
    tac = pet.model_tac(pet.Microparams(0.0, 0.0, VB=1.0), A, s)
    t = np.linspace(s.starts[3], s.ends[3], 20001)
    assert tac[3] == pytest.approx(np.trapezoid(A(t), t) / s.durations[3], rel=1e-6)


def test_true_parameters_give_zero_loss():
    prob = pet.PetProblem()
    assert evaluate(prob, np.array(prob.cfg.true_params)).objective == pytest.approx(0.0, abs=1e-18)


def test_noise_is_seeded():
    cfg = pet.PetConfig(noise_sigma0=0.5)
    a = pet.PetProblem(cfg, rng=np.random.default_rng(1)).measured
    b = pet.PetProblem(cfg, rng=np.random.default_rng(1)).measured
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, pet.PetProblem().measured)


def test_voxel_csv_roundtrip_and_fit(tmp_path):
    truth = [pet.Microparams(0.1, 0.2, 0.05, 0.0, 0.05), pet.Microparams(0.3, 0.4, 0.1, 0.0, 0.02)]
    A, s = pet.InputFunction.gamma_variate(), pet.FrameSchedule.default()
    tacs = np.array([pet.model_tac(p, A, s) for p in truth])
    pet.write_voxel_csv(tmp_path / "v.csv", ["a", "b"], tacs)
    ids, read = pet.read_voxel_csv(tmp_path / "v.csv")
    assert ids == ["a", "b"]
    np.testing.assert_array_equal(read, tacs)
    fits = pet.fit_voxels(ids, read, OptimizerConfig("DE", population_size=40, max_evaluations=4000), seed=0)
    for f, p in zip(fits, truth):
        np.testing.assert_allclose(f.params, [p.K1, p.k2, p.k3, p.VB], rtol=0.05)
    pet.write_param_csv(tmp_path / "p.csv", ids, [f.params for f in fits], [f.loss for f in fits])
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "voxel_id,K1,k2,k3,VB,loss"


def test_one_compartment_model():
    cfg = pet.PetConfig(model="1c", true_params=(0.1, 0.2, 0.05))
    prob = pet.PetProblem(cfg)
    assert prob.dim == 3
    assert evaluate(prob, np.array([0.1, 0.2, 0.05])).objective == pytest.approx(0.0, abs=1e-18)
