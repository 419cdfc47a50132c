"""Fixed-step classic Runge-Kutta integration with interpolated sampling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import PhysevoError


class NonFiniteState(PhysevoError):
    """Integration produced NaN/Inf; ``time`` is the first grid time affected."""

    def __init__(self, time: float):
        super().__init__(f"non-finite state at t={time:.6g}")
        self.time = time


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        if self.states.shape[0] != self.times.shape[0]:
            raise ValueError("one state row per sample time is required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")


def rk4_grid(rhs: Callable[[float, np.ndarray], np.ndarray], x0, t0: float, tf: float, step_count: int):
    """Return ``(grid, states)`` of RK4 on ``step_count`` uniform steps."""
    if not tf > t0:
        raise ValueError("tf must exceed t0")
    if step_count < 1:
        raise ValueError("step_count must be >= 1")
    h = (tf - t0) / step_count
    x = np.array(x0, dtype=float)
    grid = t0 + h * np.arange(step_count + 1)
    grid[-1] = tf
    out = np.empty((step_count + 1, x.size))
    out[0] = x
    for k in range(step_count):
        t = grid[k]
        k1 = rhs(t, x)
        k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = rhs(t + h, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(float(grid[k + 1]))
        out[k + 1] = x
    return grid, out


def sample_linear(grid: np.ndarray, states: np.ndarray, sample_times) -> np.ndarray:
    """Linear interpolation of grid states at ``sample_times`` (column-wise)."""
    ts = np.asarray(sample_times, dtype=float)
    idx = np.clip(np.searchsorted(grid, ts, side="right") - 1, 0, len(grid) - 2)
    w = ((ts - grid[idx]) / (grid[idx + 1] - grid[idx]))[:, None]
    return (1.0 - w) * states[idx] + w * states[idx + 1]


def integrate_fixed_rk4(rhs, x0, t0: float, tf: float, step_count: int, sample_times=None) -> Trajectory:
    """Integrate ``dx/dt = rhs(t, x)`` with classic RK4 on a uniform grid.

    ``sample_times`` default to the grid itself; other times in ``[t0, tf]``
    are linearly interpolated between neighbouring grid points.
    """
    grid, states = rk4_grid(rhs, x0, t0, tf, step_count)
    if sample_times is None:
        return Trajectory(grid, states)
    ts = np.asarray(sample_times, dtype=float)
    if ts.size and (ts.min() < t0 - 1e-12 * abs(tf - t0) or ts.max() > tf + 1e-12 * abs(tf - t0)):
        raise ValueError("sample times must lie within [t0, tf]")
    return Trajectory(ts, sample_linear(grid, states, ts))
