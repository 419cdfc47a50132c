"""Hybrid physics + neural-network model fitting for a two-axis SCARA plotter.

The physical part is a surrogate DC-motor-driven two-axis arm with state
``[i1, alpha1, dalpha1, i2, alpha2, dalpha2]``. A small tanh network adds a
residual correction to the physical state derivative; its flattened weights
are the genotype. Ground-truth data contain a smooth stick-slip friction
torque that the physical model lacks.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .._accel import dispatch, njit
from ..core import Bounds, DimensionMismatch, PhysevoError, Problem
from ..ode import NonFiniteState, Trajectory

N_STATE = 6
MEASURED_COLUMNS = (1, 4)
PENALTY_CAP = 1e9


class SampleMismatch(PhysevoError):
    pass


@dataclass(frozen=True)
class ScaraPhysParams:
    """Per-axis motor/arm constants and a sampled reference-voltage table.

    Each per-axis field is a length-2 tuple (axis 1, axis 2). ``vref_values``
    has one column per axis and is linearly interpolated over ``vref_times``.
    """

    inertia: tuple[float, float] = (0.02, 0.01)
    damping: tuple[float, float] = (0.05, 0.04)
    motor_constant: tuple[float, float] = (0.1, 0.08)
    time_constant: tuple[float, float] = (0.05, 0.05)
    resistance: tuple[float, float] = (2.0, 2.0)
    vref_times: tuple[float, ...] = ()
    vref_values: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        arr = self.as_array()
        if np.any(~(arr > 0)):
            raise ValueError("physical parameters must be positive")
        if len(self.vref_times) != len(self.vref_values):
            raise ValueError("reference voltage table lengths differ")

    def as_array(self) -> np.ndarray:
        """``(2, 5)`` array: inertia, damping, motor constant, time constant, resistance."""
        return np.array([self.inertia, self.damping, self.motor_constant, self.time_constant,
                         self.resistance], dtype=float).T.copy()

    def vref_table(self):
        if not self.vref_times:
            return np.array([0.0, 1.0]), np.zeros((2, 2))
        return np.asarray(self.vref_times, dtype=float), np.asarray(self.vref_values, dtype=float).reshape(-1, 2)

    def vref(self, t: float) -> np.ndarray:
        ts, vs = self.vref_table()
        return np.array([np.interp(t, ts, vs[:, 0]), np.interp(t, ts, vs[:, 1])])


def default_reference(t_final: float = 4.0, spacing: float = 0.05):
    """Smooth two-axis drive: sums of sines sampled on a uniform table."""
    ts = np.arange(0.0, t_final + 0.5 * spacing, spacing)
    v1 = 1.2 * np.sin(2 * np.pi * 0.5 * ts) + 0.4 * np.sin(2 * np.pi * 1.3 * ts)
    v2 = 1.0 * np.sin(2 * np.pi * 0.7 * ts + 0.6) - 0.3 * np.cos(2 * np.pi * 1.7 * ts)
    return tuple(float(t) for t in ts), tuple((float(a), float(b)) for a, b in zip(v1, v2))


def default_phys(t_final: float = 4.0) -> ScaraPhysParams:
    ts, vs = default_reference(t_final)
    return ScaraPhysParams(vref_times=ts, vref_values=vs)


@dataclass(frozen=True)
class StickSlip:
    """Smooth friction ``-(c_static tanh(w/v) - c_drop tanh(w/v)^3) * load(alpha1, alpha2)``.

    ``load = 1 + load_amplitude * cos(alpha2)^2`` mimics a pen pressure that
    varies with arm pose.
    """

    c_static: float = 0.02
    c_drop: float = 0.01
    v_eps: float = 0.05
    load_amplitude: float = 0.5

    def as_array(self) -> np.ndarray:
        return np.array([self.c_static, self.c_drop, self.v_eps, self.load_amplitude], dtype=float)


NO_FRICTION = StickSlip(0.0, 0.0, 0.05, 0.0)


@dataclass(frozen=True)
class AnnParams:
    """Residual network ``12 -> hidden (tanh) -> 6 (linear)`` stored as one flat vector.

    Layout: ``W1`` (hidden x 12, row-major), ``b1``, ``W2`` (6 x hidden), ``b2``.
    Inputs are divided by ``in_scale`` and outputs multiplied by
    ``out_scale`` (both fixed, default ones) so that weights of order one
    act on order-one signals.
    """

    hidden: int = 8
    theta: np.ndarray = field(default=None)
    in_scale: np.ndarray = field(default=None)
    out_scale: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.size(self.hidden)
        theta = np.zeros(n) if self.theta is None else np.asarray(self.theta, dtype=float).reshape(-1)
        if theta.size != n:
            raise DimensionMismatch(f"expected {n} network parameters for hidden={self.hidden}, got {theta.size}")
        object.__setattr__(self, "theta", theta)
        for name, size in (("in_scale", 2 * N_STATE), ("out_scale", N_STATE)):
            v = getattr(self, name)
            v = np.ones(size) if v is None else np.asarray(v, dtype=float).reshape(-1)
            if v.size != size:
                raise DimensionMismatch(f"{name} needs {size} entries")
            object.__setattr__(self, name, v)

    @staticmethod
    def size(hidden: int) -> int:
        return 2 * N_STATE * hidden + hidden + hidden * N_STATE + N_STATE

    def unpack(self):
        h, n = self.hidden, 2 * N_STATE
        th = self.theta
        W1 = th[:h * n].reshape(h, n)
        b1 = th[h * n:h * n + h]
        o = h * n + h
        W2 = th[o:o + N_STATE * h].reshape(N_STATE, h)
        b2 = th[o + N_STATE * h:]
        return W1, b1, W2, b2


@dataclass(frozen=True)
class MeasuredData:
    times: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if t.size < 2 or Y.shape != (t.size, len(MEASURED_COLUMNS)):
            raise SampleMismatch("need N >= 2 samples and an N x 2 angle matrix")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "Y", Y)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "alpha1", "alpha2"])
            for t, (a1, a2) in zip(self.times, self.Y):
                w.writerow([repr(float(t)), repr(float(a1)), repr(float(a2))])

    @classmethod
    def read_csv(cls, path) -> "MeasuredData":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([float(r["time"]) for r in rows]),
                   np.array([[float(r["alpha1"]), float(r["alpha2"])] for r in rows]))


# Right-hand sides ----------------------------------------------------------

def physical_rhs(state, phys: ScaraPhysParams, t: float, friction: StickSlip | None = None) -> np.ndarray:
    """Physical state derivative; ``friction`` is only used to generate ground truth."""
    x = np.asarray(state, dtype=float)
    P = phys.as_array()
    v = phys.vref(t)
    out = np.empty(N_STATE)
    fr = None if friction is None else friction.as_array()
    load = 1.0
    if fr is not None:
        load = 1.0 + fr[3] * np.cos(x[4]) ** 2
    for j in range(2):
        J, d, km, tau, R = P[j]
        i, w = x[3 * j], x[3 * j + 2]
        torque = km * i - d * w
        if fr is not None:
            s = np.tanh(w / fr[2])
            torque -= (fr[0] * s - fr[1] * s ** 3) * load
        out[3 * j] = (v[j] - R * i) / (R * tau)
        out[3 * j + 1] = w
        out[3 * j + 2] = torque / J
    return out


def ann_forward(ann: AnnParams, state, phys_derivative) -> np.ndarray:
    """Hybrid derivative ``dx_phy + s_out * (W2 tanh(W1 ([x, dx_phy] / s_in) + b1) + b2)``."""
    x = np.asarray(state, dtype=float).reshape(-1)
    dx = np.asarray(phys_derivative, dtype=float).reshape(-1)
    if x.size != N_STATE or dx.size != N_STATE:
        raise DimensionMismatch("state and physical derivative must both have 6 entries")
    W1, b1, W2, b2 = ann.unpack()
    z = np.concatenate([x, dx]) / ann.in_scale
    return dx + ann.out_scale * (W2 @ np.tanh(W1 @ z + b1) + b2)


# Simulation kernels -------------------------------------------------------

@njit
def _hybrid_rhs_nb(v1, v2, x, P, fr, W1, b1, W2, b2, s_out, out):
    load = 1.0 + fr[3] * np.cos(x[4]) ** 2
    for j in range(2):
        i = x[3 * j]
        w = x[3 * j + 2]
        s = np.tanh(w / fr[2])
        torque = P[j, 2] * i - P[j, 1] * w - (fr[0] * s - fr[1] * s * s * s) * load
        vj = v1 if j == 0 else v2
        out[3 * j] = (vj - P[j, 4] * i) / (P[j, 4] * P[j, 3])
        out[3 * j + 1] = w
        out[3 * j + 2] = torque / P[j, 0]
    hidden = W1.shape[0]
    if hidden > 0:
        r0, r1, r2, r3, r4, r5 = b2[0], b2[1], b2[2], b2[3], b2[4], b2[5]
        for h in range(hidden):
            a = b1[h]
            for k in range(6):
                a += W1[h, k] * x[k] + W1[h, 6 + k] * out[k]
            a = np.tanh(a)
            r0 += W2[0, h] * a
            r1 += W2[1, h] * a
            r2 += W2[2, h] * a
            r3 += W2[3, h] * a
            r4 += W2[4, h] * a
            r5 += W2[5, h] * a
        out[0] += s_out[0] * r0
        out[1] += s_out[1] * r1
        out[2] += s_out[2] * r2
        out[3] += s_out[3] * r3
        out[4] += s_out[4] * r4
        out[5] += s_out[5] * r5


@njit
def _simulate_numba(x0, h, V, P, fr, W1, b1, W2, b2, s_out):
    n_steps = V.shape[0]
    states = np.empty((n_steps + 1, 6))
    x = x0.copy()
    y = np.empty(6)
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    states[0] = x
    for k in range(n_steps):
        _hybrid_rhs_nb(V[k, 0, 0], V[k, 0, 1], x, P, fr, W1, b1, W2, b2, s_out, k1)
        for c in range(6):
            y[c] = x[c] + 0.5 * h * k1[c]
        _hybrid_rhs_nb(V[k, 1, 0], V[k, 1, 1], y, P, fr, W1, b1, W2, b2, s_out, k2)
        for c in range(6):
            y[c] = x[c] + 0.5 * h * k2[c]
        _hybrid_rhs_nb(V[k, 1, 0], V[k, 1, 1], y, P, fr, W1, b1, W2, b2, s_out, k3)
        for c in range(6):
            y[c] = x[c] + h * k3[c]
        _hybrid_rhs_nb(V[k, 2, 0], V[k, 2, 1], y, P, fr, W1, b1, W2, b2, s_out, k4)
        for c in range(6):
            x[c] += (h / 6.0) * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
            if not np.isfinite(x[c]):
                return states, k + 1
            states[k + 1, c] = x[c]
    return states, -1


def _simulate_numpy(x0, h, V, P, fr, W1, b1, W2, b2, s_out):
    J, d, km, tau, R = P.T

    def rhs(v, x):
        i, w = x[0::3], x[2::3]
        s = np.tanh(w / fr[2])
        load = 1.0 + fr[3] * np.cos(x[4]) ** 2
        torque = km * i - d * w - (fr[0] * s - fr[1] * s ** 3) * load
        out = np.empty(6)
        out[0::3] = (v - R * i) / (R * tau)
        out[1::3] = w
        out[2::3] = torque / J
        if W1.shape[0]:
            out = out + s_out * (W2 @ np.tanh(W1 @ np.concatenate([x, out]) + b1) + b2)
        return out

    n_steps = V.shape[0]
    states = np.empty((n_steps + 1, 6))
    x = np.array(x0, dtype=float)
    states[0] = x
    for k in range(n_steps):
        k1 = rhs(V[k, 0], x)
        k2 = rhs(V[k, 1], x + 0.5 * h * k1)
        k3 = rhs(V[k, 1], x + 0.5 * h * k2)
        k4 = rhs(V[k, 2], x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            return states, k + 1
        states[k + 1] = x
    return states, -1


simulate_kernel = dispatch("scara.simulate", _simulate_numba, _simulate_numpy)


def _grid(t0: float, tf: float, step: float) -> tuple[int, float]:
    n = max(1, int(np.ceil((tf - t0) / step - 1e-9)))
    return n, (tf - t0) / n


def simulate_hybrid(x0, phys: ScaraPhysParams, ann: AnnParams | None, t0: float, tf: float, sample_times,
                    step: float = 0.01, friction: StickSlip | None = None) -> Trajectory:
    """RK4 simulation of the hybrid model sampled (linearly) at ``sample_times``.

    Raises
    ------
    NonFiniteState
        When the state blows up; the time is the first affected grid point.
    """
    n, h = _grid(t0, tf, step)
    vt, vv = phys.vref_table()
    fr = (friction or NO_FRICTION).as_array()
    if ann is None or ann.hidden == 0:
        W1, b1, W2, b2 = np.zeros((0, 12)), np.zeros(0), np.zeros((6, 0)), np.zeros(6)
        s_out = np.ones(6)
    else:
        W1, b1, W2, b2 = ann.unpack()
        W1 = np.ascontiguousarray(W1 / ann.in_scale)
        W2 = np.ascontiguousarray(W2)
        s_out = ann.out_scale
    # drive voltages at the three distinct RK4 stage times of every step
    stage_t = t0 + h * (np.arange(n)[:, None] + np.array([0.0, 0.5, 1.0]))
    V = np.stack([np.interp(stage_t, vt, vv[:, 0]), np.interp(stage_t, vt, vv[:, 1])], axis=-1)
    with np.errstate(all="ignore"):
        states, fail = simulate_kernel(np.asarray(x0, dtype=float), float(h), V, phys.as_array(), fr,
                                       W1, np.ascontiguousarray(b1), W2, np.ascontiguousarray(b2), s_out)
    if fail >= 0:
        raise NonFiniteState(t0 + fail * h)
    grid = t0 + h * np.arange(n + 1)
    ts = np.asarray(sample_times, dtype=float)
    idx = np.clip(np.searchsorted(grid, ts, side="right") - 1, 0, n - 1)
    w = ((ts - grid[idx]) / h)[:, None]
    return Trajectory(ts, (1.0 - w) * states[idx] + w * states[idx + 1])


def trajectory_loss(X: Trajectory, data: MeasuredData) -> float:
    """Mean over samples of the squared angle errors summed over the measured columns."""
    if X.times.shape != data.times.shape or not np.allclose(X.times, data.times, rtol=0, atol=1e-12):
        raise SampleMismatch("trajectory is not sampled at the measurement times")
    diff = X.states[:, list(MEASURED_COLUMNS)] - data.Y
    return float(np.sum(diff ** 2) / len(data.times))


def synthesize_measurements(phys: ScaraPhysParams, friction: StickSlip, x0, times, noise_sd: float,
                            rng=None, step: float = 0.01) -> MeasuredData:
    """Ground truth from the physical model plus stick-slip friction, with Gaussian angle noise."""
    times = np.asarray(times, dtype=float)
    traj = simulate_hybrid(x0, phys, None, float(times[0]), float(times[-1]), times, step, friction)
    Y = traj.states[:, list(MEASURED_COLUMNS)].copy()
    if noise_sd > 0:
        Y = Y + noise_sd * rng.standard_normal(Y.shape)
    return MeasuredData(times, Y)


# Problem ------------------------------------------------------------------

@dataclass
class ScaraConfig:
    hidden: int = 8
    t_final: float = 4.0
    n_samples: int = 101
    step: float = 0.01
    noise_sd: float = 0.0
    weight_bound: float = 5.0
    out_gain: float = 0.1
    friction: StickSlip = field(default_factory=StickSlip)
    data_path: str | None = None


class ScaraProblem(Problem):
    """Fit the residual-network weights so the hybrid model reproduces measured angles."""

    name = "scara"

    def __init__(self, config: ScaraConfig | None = None, data: MeasuredData | None = None, rng=None):
        self.cfg = config or ScaraConfig()
        self.phys = default_phys(self.cfg.t_final)
        self.x0 = np.zeros(N_STATE)
        if data is None and self.cfg.data_path:
            data = MeasuredData.read_csv(self.cfg.data_path)
        if data is None:
            times = np.linspace(0.0, self.cfg.t_final, self.cfg.n_samples)
            data = synthesize_measurements(self.phys, self.cfg.friction, self.x0, times, self.cfg.noise_sd,
                                           rng, self.cfg.step)
        self.data = data
        self.in_scale, self.out_scale = self._signal_scales()
        n = AnnParams.size(self.cfg.hidden)
        self.bounds = Bounds.uniform(-self.cfg.weight_bound, self.cfg.weight_bound, n)

    def _signal_scales(self):
        """Peak magnitudes of state and physical derivative along the physical-only trajectory."""
        n, h = _grid(0.0, self.cfg.t_final, self.cfg.step)
        grid = h * np.arange(n + 1)
        X = simulate_hybrid(self.x0, self.phys, None, 0.0, self.cfg.t_final, grid, self.cfg.step)
        D = np.array([physical_rhs(x, self.phys, t) for t, x in zip(grid, X.states)])
        peak = np.concatenate([np.abs(X.states).max(axis=0), np.abs(D).max(axis=0)])
        peak = np.maximum(peak, 1e-6)
        return peak, self.cfg.out_gain * peak[N_STATE:]

    def ann(self, theta) -> AnnParams:
        return AnnParams(self.cfg.hidden, theta, self.in_scale, self.out_scale)

    def loss(self, theta) -> float:
        ann = self.ann(theta)
        t = self.data.times
        try:
            X = simulate_hybrid(self.x0, self.phys, ann, float(t[0]), float(t[-1]), t, self.cfg.step)
        except NonFiniteState:
            return PENALTY_CAP
        value = trajectory_loss(X, self.data)
        return value if np.isfinite(value) and value < PENALTY_CAP else PENALTY_CAP

    def compute(self, x, fidelity):
        return self.loss(x), (), ()

    def seed_solutions(self):
        return [np.zeros(self.dim)]

    def config(self):
        c = self.cfg
        return {"hidden": c.hidden, "t_final": c.t_final, "n_samples": c.n_samples, "step": c.step,
                "noise_sd": c.noise_sd, "weight_bound": c.weight_bound, "out_gain": c.out_gain,
                "friction": {"c_static": c.friction.c_static, "c_drop": c.friction.c_drop,
                             "v_eps": c.friction.v_eps, "load_amplitude": c.friction.load_amplitude}}
