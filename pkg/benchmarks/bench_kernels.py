"""Time the numba and numpy implementations of every registered kernel.

Inputs are captured from real problem evaluations, so the sizes match what
the optimizers see. Usage::

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from physevo import _accel, fem
from physevo.problems import eit, fpp, pet, scara


def _capture(module, attr, action):
    """Run ``action`` once while recording the arguments passed to ``module.attr``."""
    original = getattr(module, attr)
    seen = []

    def spy(*args):
        seen.append(args)
        return original(*args)

    setattr(module, attr, spy)
    try:
        action()
    finally:
        setattr(module, attr, original)
    return seen[0]


def captured_inputs() -> dict:
    rng = np.random.default_rng(0)
    fp = fpp.FppProblem()
    sc = scara.ScaraProblem()
    pp = pet.PetProblem()
    ep = eit.EitProblem()
    sigma = np.full(ep.fine.n_elements, 0.3)
    return {
        "fem.scalar_triplets": _capture(fem, "scalar_triplets", lambda: fem.assemble_scalar(ep.fine, sigma)),
        "fem.elastic_triplets": _capture(fem, "elastic_triplets", lambda: fp.compute(fp.seed_solutions()[0], 0)),
        "scara.simulate": _capture(scara, "simulate_kernel", lambda: sc.loss(rng.uniform(-1, 1, sc.dim))),
        "pet.exp_conv_integrals": _capture(pet, "exp_conv_integrals",
                                           lambda: pp.compute(np.array([0.1, 0.2, 0.05, 0.05]), 0)),
    }


def best_time(fn, args, repeat: int) -> float:
    fn(*args)  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    inputs = captured_inputs()
    print(f"{'kernel':<26}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name in _accel.registered_kernels():
        jit, ref = _accel.kernel_pair(name)
        a = inputs[name]
        tj = best_time(jit, a, args.repeat)
        tn = best_time(ref, a, args.repeat)
        print(f"{name:<26}{1e3 * tj:>12.3f}{1e3 * tn:>12.3f}{tn / tj:>10.1f}")


if __name__ == "__main__":
    main()
