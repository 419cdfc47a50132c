"""Voxel-wise tracer-kinetic fitting with one- and two-tissue compartment models.

Model curves are computed in closed form: the tissue response is a sum of
decaying exponentials convolved with a piecewise-linear input function, and
every convolution and frame average is integrated exactly segment by segment.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .._accel import dispatch, njit
from ..core import Bounds, PhysevoError, Problem


class InvalidParams(PhysevoError):
    pass


@dataclass(frozen=True)
class Microparams:
    K1: float
    k2: float
    k3: float = 0.0
    k4: float = 0.0
    VB: float = 0.0

    def __post_init__(self):
        vals = (self.K1, self.k2, self.k3, self.k4, self.VB)
        if not all(math.isfinite(v) and v >= 0 for v in vals) or self.VB > 1:
            raise InvalidParams(f"rate constants must be >= 0 and VB in [0, 1]: {vals}")

    def as_tuple(self):
        return (self.K1, self.k2, self.k3, self.k4, self.VB)


@dataclass(frozen=True)
class InputFunction:
    """Plasma activity, linear between samples and held constant beyond the last one.

    If the first sample is after ``t = 0`` the activity ramps linearly from zero.
    """

    times: np.ndarray
    activity: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        a = np.asarray(self.activity, dtype=float)
        if t.ndim != 1 or t.shape != a.shape or t.size < 2:
            raise InvalidParams("input function needs matching 1-D times and activities")
        if np.any(np.diff(t) <= 0) or t[0] < 0:
            raise InvalidParams("input times must be non-negative and strictly increasing")
        if np.any(~np.isfinite(a)) or np.any(a < 0):
            raise InvalidParams("input activities must be finite and >= 0")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "activity", a)

    def __call__(self, t):
        if self.times[0] > 0:
            return np.interp(t, np.r_[0.0, self.times], np.r_[0.0, self.activity])
        return np.interp(t, self.times, self.activity)

    @classmethod
    def gamma_variate(cls, a: float = 1000.0, b: float = 2.0, t_end: float = 60.0, spacing: float = 0.06):
        """``A(t) = a t exp(-t / b)`` sampled every ``spacing`` minutes from 0."""
        n = int(round(t_end / spacing))
        t = spacing * np.arange(n + 1)
        return cls(t, a * t * np.exp(-t / b))


@dataclass(frozen=True)
class FrameSchedule:
    starts: np.ndarray
    ends: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.starts, dtype=float)
        e = np.asarray(self.ends, dtype=float)
        if s.shape != e.shape or s.ndim != 1 or s.size == 0:
            raise InvalidParams("frame starts and ends must be matching non-empty vectors")
        if np.any(e <= s) or np.any(s[1:] != e[:-1]) or s[0] < 0:
            raise InvalidParams("frames must be contiguous, increasing and non-overlapping")
        object.__setattr__(self, "starts", s)
        object.__setattr__(self, "ends", e)

    @property
    def durations(self) -> np.ndarray:
        return self.ends - self.starts

    @property
    def n_frames(self) -> int:
        return self.starts.size

    @classmethod
    def from_durations(cls, durations, start: float = 0.0):
        edges = start + np.concatenate([[0.0], np.cumsum(durations)])
        return cls(edges[:-1], edges[1:])

    @classmethod
    def default(cls):
        """37 frames over 60 min, shortest at the start (durations in min)."""
        d = [0.12] * 10 + [0.3] * 6 + [0.6] * 5 + [1.2] * 5 + [3.0] * 6 + [6.0] * 5
        return cls.from_durations(d)


# Exact integrals of exponential convolutions ---------------------------------

@njit
def _phi(n, z):
    """``phi_n(z) = sum_k (-z)^k / (k + n)!`` in closed form or by series near 0."""
    if z < 0.1:
        term = 1.0
        for j in range(2, n + 1):
            term /= j
        acc = term
        for k in range(1, 14):
            term *= -z / (k + n)
            acc += term
        return acc
    e = math.exp(-z)
    if n == 1:
        return (1.0 - e) / z
    if n == 2:
        return (z - 1.0 + e) / (z * z)
    return (0.5 * z * z - z + 1.0 - e) / (z * z * z)


@njit
def _exp_conv_integrals_numba(grid, a, lams):
    """Cumulative ``int_0^t (exp(-lam .) * A)(s) ds`` on ``grid`` for every ``lam``."""
    n = grid.size
    out = np.zeros((lams.size, n))
    for r in range(lams.size):
        lam = lams[r]
        E = 0.0
        acc = 0.0
        for i in range(n - 1):
            h = grid[i + 1] - grid[i]
            z = lam * h
            dA = a[i + 1] - a[i]
            p1 = _phi(1, z)
            p2 = _phi(2, z)
            acc += h * (E * p1 + h * (a[i] * p2 + dA * _phi(3, z)))
            E = math.exp(-z) * E + h * (a[i] * p1 + dA * p2)
            out[r, i + 1] = acc
    return out


def _phi_vec(n, z):
    z = np.asarray(z, dtype=float)
    small = z < 0.1
    out = np.empty_like(z)
    zs = z[small]
    term = np.full(zs.shape, 1.0 / math.factorial(n))
    acc = term.copy()
    for k in range(1, 14):
        term = term * (-zs / (k + n))
        acc += term
    out[small] = acc
    zb = z[~small]
    e = np.exp(-zb)
    if n == 1:
        out[~small] = (1.0 - e) / zb
    elif n == 2:
        out[~small] = (zb - 1.0 + e) / zb ** 2
    else:
        out[~small] = (0.5 * zb ** 2 - zb + 1.0 - e) / zb ** 3
    return out


def _exp_conv_integrals_numpy(grid, a, lams):
    h = np.diff(grid)
    dA = np.diff(a)
    out = np.zeros((lams.size, grid.size))
    for r, lam in enumerate(lams):
        z = lam * h
        p1, p2, p3 = _phi_vec(1, z), _phi_vec(2, z), _phi_vec(3, z)
        decay = np.exp(-z)
        forced = h * (a[:-1] * p2 + dA * p3) * h
        drive = h * (a[:-1] * p1 + dA * p2)
        E = np.zeros(grid.size)
        for i in range(h.size):
            E[i + 1] = decay[i] * E[i] + drive[i]
        out[r, 1:] = np.cumsum(h * E[:-1] * p1 + forced)
    return out


exp_conv_integrals = dispatch("pet.exp_conv_integrals", _exp_conv_integrals_numba, _exp_conv_integrals_numpy)


def impulse_response(p: Microparams):
    """Exponents and weights with tissue response ``K1 * sum_r w_r exp(-lam_r t)``."""
    K1, k2, k3, k4 = p.K1, p.k2, p.k3, p.k4
    if k3 == 0.0:
        return np.array([k2]), np.array([1.0])
    if k4 == 0.0:
        s = k2 + k3
        return np.array([s, 0.0]), np.array([k2 / s, k3 / s])
    b = k2 + k3 + k4
    root = math.sqrt(max(b * b - 4.0 * k2 * k4, 0.0))
    a1, a2 = 0.5 * (b - root), 0.5 * (b + root)
    return np.array([a1, a2]), np.array([(k3 + k4 - a1) / (a2 - a1), (a2 - k3 - k4) / (a2 - a1)])


class _Plan:
    """Merged integration grid for one (input, schedule) pair, reused across parameter sets."""

    def __init__(self, inp: InputFunction, schedule: FrameSchedule):
        t_end = schedule.ends[-1]
        pts = np.concatenate([[0.0], inp.times[inp.times < t_end], schedule.starts, [t_end]])
        self.grid = np.unique(pts)
        self.a = inp(self.grid)
        self.start_idx = np.searchsorted(self.grid, schedule.starts)
        self.end_idx = np.searchsorted(self.grid, schedule.ends)
        cum_a = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(self.grid) * (self.a[1:] + self.a[:-1]))])
        self.durations = schedule.durations
        self.blood = (cum_a[self.end_idx] - cum_a[self.start_idx]) / self.durations

    def tissue(self, p: Microparams) -> np.ndarray:
        lams, weights = impulse_response(p)
        cum = exp_conv_integrals(self.grid, self.a, lams)
        frame = (cum[:, self.end_idx] - cum[:, self.start_idx]) / self.durations
        return p.K1 * (weights @ frame)

    def tac(self, p: Microparams) -> np.ndarray:
        return (1.0 - p.VB) * self.tissue(p) + p.VB * self.blood


def model_tac(p: Microparams, A: InputFunction, schedule: FrameSchedule) -> np.ndarray:
    """Frame-averaged ``(1 - VB) C_T + VB A`` for one voxel."""
    return _Plan(A, schedule).tac(p)


def decay_exponents(p: Microparams) -> np.ndarray:
    return impulse_response(p)[0]


def objective(p: Microparams, A: InputFunction, schedule: FrameSchedule, measured, reg_weight: float = 0.0,
              regularize: bool = False, plan: _Plan | None = None) -> float:
    """Duration-weighted squared error, plus ``reg_weight * max|exponent|`` when ``regularize``."""
    plan = plan or _Plan(A, schedule)
    r = plan.tac(p) - np.asarray(measured, dtype=float)
    loss = float(np.sum(plan.durations * r * r))
    if regularize:
        loss += reg_weight * float(np.max(np.abs(decay_exponents(p))))
    return loss


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian approximation of counting noise: ``sd = sigma0 sqrt(max(v, eps) / duration)``."""

    sigma0: float = 0.0
    eps: float = 1e-6

    def sd(self, values, durations) -> np.ndarray:
        return self.sigma0 * np.sqrt(np.maximum(values, self.eps) / np.asarray(durations, dtype=float))


def synthesize_frames(p: Microparams, A: InputFunction, schedule: FrameSchedule, noise: NoiseModel, rng=None):
    clean = model_tac(p, A, schedule)
    if noise.sigma0 == 0:
        return clean
    return clean + noise.sd(clean, schedule.durations) * rng.standard_normal(clean.shape)


# Problem and batch I/O --------------------------------------------------------

PARAM_NAMES = {"2c": ("K1", "k2", "k3", "VB"), "1c": ("K1", "k2", "VB")}


@dataclass
class PetConfig:
    model: str = "2c"
    input_a: float = 1000.0
    input_b: float = 2.0
    true_params: tuple = (0.1, 0.2, 0.05, 0.05)
    noise_sigma0: float = 0.0
    regularize: bool = False
    reg_weight: float = 0.0
    rate_upper: float = 2.0
    vb_upper: float = 0.5
    frame_durations: tuple | None = None


def params_from_vector(x, model: str = "2c") -> Microparams:
    if model == "2c":
        return Microparams(x[0], x[1], x[2], 0.0, x[3])
    if model == "1c":
        return Microparams(x[0], x[1], 0.0, 0.0, x[2])
    raise InvalidParams(f"unknown model {model!r}")


class PetProblem(Problem):
    """Fit rate constants of one voxel; genotype ``(K1, k2, k3, VB)`` or ``(K1, k2, VB)``."""

    name = "pet"

    def __init__(self, config: PetConfig | None = None, measured=None, rng=None, input_function=None,
                 schedule=None):
        self.cfg = c = config or PetConfig()
        if c.model not in PARAM_NAMES:
            raise InvalidParams(f"unknown model {c.model!r}")
        self.schedule = schedule or (FrameSchedule.from_durations(c.frame_durations) if c.frame_durations
                                     else FrameSchedule.default())
        self.input = input_function or InputFunction.gamma_variate(c.input_a, c.input_b,
                                                                   t_end=float(self.schedule.ends[-1]))
        self.plan = _Plan(self.input, self.schedule)
        names = PARAM_NAMES[c.model]
        upper = np.array([c.vb_upper if n == "VB" else c.rate_upper for n in names])
        self.bounds = Bounds(np.zeros(len(names)), upper)
        if measured is None:
            truth = params_from_vector(np.asarray(c.true_params, dtype=float), c.model)
            measured = synthesize_frames(truth, self.input, self.schedule, NoiseModel(c.noise_sigma0), rng)
        self.measured = np.asarray(measured, dtype=float)
        if self.measured.shape != (self.schedule.n_frames,):
            raise InvalidParams("measured TAC length must equal the frame count")

    def compute(self, x, fidelity):
        p = params_from_vector(x, self.cfg.model)
        return objective(p, self.input, self.schedule, self.measured, self.cfg.reg_weight, self.cfg.regularize,
                         self.plan), (), ()

    def config(self):
        c = self.cfg
        return {"model": c.model, "input_a": c.input_a, "input_b": c.input_b, "true_params": list(c.true_params),
                "noise_sigma0": c.noise_sigma0, "regularize": c.regularize, "reg_weight": c.reg_weight,
                "rate_upper": c.rate_upper, "vb_upper": c.vb_upper}


def read_voxel_csv(path) -> tuple[list[str], np.ndarray]:
    """Rows ``voxel_id, f0, f1, ...`` with a header line."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    return [r[0] for r in body], np.array([[float(v) for v in r[1:]] for r in body])


def write_voxel_csv(path, ids, tacs) -> None:
    tacs = np.atleast_2d(tacs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["voxel_id"] + [f"frame_{i}" for i in range(tacs.shape[1])])
        for vid, row in zip(ids, tacs):
            w.writerow([vid] + [repr(float(v)) for v in row])


def write_param_csv(path, ids, params, losses, model: str = "2c") -> None:
    names = PARAM_NAMES[model]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["voxel_id", *names, "loss"])
        for vid, p, loss in zip(ids, params, losses):
            w.writerow([vid] + [repr(float(v)) for v in p] + [repr(float(loss))])


@dataclass
class VoxelFit:
    voxel_id: str
    params: np.ndarray
    loss: float
    evaluations: int


def fit_voxels(ids, tacs, optimizer_config, seed: int, config: PetConfig | None = None,
               input_function=None, schedule=None) -> list[VoxelFit]:
    """Fit each voxel independently; voxel ``i`` draws from stream ``i`` of ``seed``."""
    from ..algorithms import run
    from ..core import rng_stream

    fits = []
    for i, (vid, tac) in enumerate(zip(ids, np.atleast_2d(tacs))):
        prob = PetProblem(config, measured=tac, input_function=input_function, schedule=schedule)
        res = run(prob, optimizer_config, rng=rng_stream(seed, i))
        fits.append(VoxelFit(str(vid), res.best_vector, res.best_result.objective, res.evaluations_used))
    return fits
