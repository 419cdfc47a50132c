import os
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from physevo import _accel, fem
from physevo.problems import pet, scara  # noqa: F401  (registers kernels)

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "benchmarks"))
from bench_kernels import captured_inputs  # noqa: E402


def test_all_kernels_registered():
    assert _accel.registered_kernels() == ["fem.elastic_triplets", "fem.scalar_triplets", "pet.exp_conv_integrals",
                                           "scara.simulate"]


@pytest.fixture(scope="module")
def inputs():
    return captured_inputs()


@pytest.mark.parametrize("name", ["fem.elastic_triplets", "fem.scalar_triplets", "pet.exp_conv_integrals",
                                  "scara.simulate"])
def test_numba_matches_numpy(name, inputs):
    jit, ref = _accel.kernel_pair(name)
    a, b = jit(*inputs[name]), ref(*inputs[name])
    for x, y in zip(a, b):
        assert_allclose(np.asarray(x), np.asarray(y), rtol=1e-12, atol=1e-14 * np.max(np.abs(y)))


def test_env_flag_selects_numpy():
    code = ("from physevo import fem, _accel; "
            "print(fem.elastic_triplets is _accel.kernel_pair('fem.elastic_triplets')[1])")
    env = dict(os.environ, PHYSEVO_JIT="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "True"


def test_default_uses_numba():
    assert fem.elastic_triplets is _accel.kernel_pair("fem.elastic_triplets")[0] or not _accel.USE_NUMBA
