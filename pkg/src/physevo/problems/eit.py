"""Electrical impedance tomography on a disk with point electrodes.

The forward model solves the conduction equation on a fine fan mesh for every
current drive; the inverse genotype is ``log(sigma)`` on a coarser fan mesh
whose elements are mapped onto the forward elements.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..core import Bounds, PhysevoError, Problem
from ..fem import Mesh, NonPositiveConductivity, SpdFactor, disk_mesh, scalar_triplets


class UnsupportedStrategy(PhysevoError):
    pass


class InclusionOutsideDomain(PhysevoError):
    pass


@dataclass(frozen=True)
class ElectrodeLayout:
    nodes: tuple[int, ...]
    current: float = 1e-3

    @property
    def L(self) -> int:
        return len(self.nodes)

    @classmethod
    def on_mesh(cls, mesh: Mesh, L: int, current: float = 1e-3) -> "ElectrodeLayout":
        """``L`` equally spaced electrodes on the boundary, the first on the positive x axis."""
        if L < 4 or L % 2:
            raise ValueError("electrode count must be even and >= 4")
        nb = len(mesh.boundary_nodes)
        if nb % L:
            raise ValueError(f"{nb} boundary nodes cannot host {L} equally spaced electrodes")
        step = nb // L
        return cls(tuple(int(n) for n in mesh.boundary_nodes[::step]), current)


@dataclass(frozen=True)
class MeasurementSchedule:
    strategy: str
    entries: tuple[tuple[tuple[int, int], tuple[int, int]], ...]

    @property
    def R(self) -> int:
        return len(self.entries)

    @property
    def drives(self) -> list[tuple[int, int]]:
        seen = []
        for d, _ in self.entries:
            if d not in seen:
                seen.append(d)
        return seen


def expected_count(strategy: str, L: int) -> int:
    """Independent measurement counts per injection strategy."""
    table = {"adjacent": L * (L - 3), "cross": (L // 2 - 1) * (L - 3), "opposite": L * (L - 3),
             "trigonometric": (L // 2) * (L - 1)}
    return table[strategy]


def measurement_schedule(layout: ElectrodeLayout | int, strategy: str = "adjacent") -> MeasurementSchedule:
    """Adjacent drive ``(e, e+1)`` with every adjacent measuring pair that avoids both driven electrodes."""
    L = layout if isinstance(layout, int) else layout.L
    if L % 2:
        raise ValueError("electrode count must be even")
    if strategy != "adjacent":
        raise UnsupportedStrategy(f"strategy {strategy!r} is not implemented")
    entries = []
    for e in range(L):
        drive = (e, (e + 1) % L)
        for m in range(L):
            meas = (m, (m + 1) % L)
            if set(meas) & set(drive):
                continue
            entries.append((drive, meas))
    return MeasurementSchedule(strategy, tuple(entries))


class ForwardModel:
    """Conduction solver with a cached sparsity pattern; the last electrode node is grounded."""

    def __init__(self, mesh: Mesh, layout: ElectrodeLayout, schedule: MeasurementSchedule):
        self.mesh, self.layout, self.schedule = mesh, layout, schedule
        n = mesh.n_nodes
        ground = layout.nodes[-1]
        keep = np.setdiff1d(np.arange(n), [ground])
        self._new = -np.ones(n, dtype=np.int64)
        self._new[keep] = np.arange(keep.size)
        rows, cols, _ = scalar_triplets(mesh.nodes, mesh.triangles, np.ones(mesh.n_elements))
        r, c = self._new[rows], self._new[cols]
        self._mask = (r >= 0) & (c >= 0)
        # each triplet's slot in the CSC data array, for summing values straight into place
        lookup = sp.csc_matrix((np.ones(self._mask.sum()), (r[self._mask], c[self._mask])),
                               shape=(keep.size, keep.size))
        lookup.sum_duplicates()
        self._indptr, self._indices = lookup.indptr, lookup.indices
        col_of = c[self._mask]
        row_of = r[self._mask]
        starts = self._indptr[col_of]
        ends = self._indptr[col_of + 1]
        slot = np.empty(row_of.size, dtype=np.int64)
        for k in range(row_of.size):
            seg = self._indices[starts[k]:ends[k]]
            slot[k] = starts[k] + np.searchsorted(seg, row_of[k])
        self._slot = slot
        self._nnz = lookup.nnz
        self._size = keep.size
        drives = schedule.drives
        self._drive_col = {d: j for j, d in enumerate(drives)}
        rhs = np.zeros((keep.size, len(drives)))
        for j, (a, b) in enumerate(drives):
            for node, sign in ((layout.nodes[a], 1.0), (layout.nodes[b], -1.0)):
                if self._new[node] >= 0:
                    rhs[self._new[node], j] += sign * layout.current
        self._rhs = rhs
        self._meas = np.array([(self._drive_col[d], layout.nodes[m[0]], layout.nodes[m[1]])
                               for d, m in schedule.entries], dtype=np.int64)

    def system(self, sigma) -> sp.csc_matrix:
        sigma = np.asarray(sigma, dtype=float)
        if np.any(~(sigma > 0)):
            raise NonPositiveConductivity("conductivity must be positive in every element")
        _, _, vals = scalar_triplets(self.mesh.nodes, self.mesh.triangles, np.ascontiguousarray(sigma))
        data = np.bincount(self._slot, weights=vals[self._mask], minlength=self._nnz)
        return sp.csc_matrix((data, self._indices, self._indptr), shape=(self._size, self._size))

    def potentials(self, sigma) -> np.ndarray:
        """Nodal potentials, one column per drive (ground node potential 0)."""
        sol = SpdFactor(self.system(sigma)).solve(self._rhs)
        full = np.zeros((self.mesh.n_nodes, sol.shape[1]))
        full[self._new >= 0] = sol
        return full

    def voltages(self, sigma) -> np.ndarray:
        V = self.potentials(sigma)
        j, p, q = self._meas.T
        return V[p, j] - V[q, j]


def forward_voltages(mesh: Mesh, layout: ElectrodeLayout, schedule: MeasurementSchedule, sigma) -> np.ndarray:
    return ForwardModel(mesh, layout, schedule).voltages(sigma)


def objective(sigma, measured, forward: ForwardModel, reg_weight: float = 0.0, sigma_ref=None) -> float:
    """``||U_hat(sigma) - U||^2 + reg_weight ||sigma - sigma_ref||^2``."""
    r = forward.voltages(sigma) - np.asarray(measured, dtype=float)
    value = float(r @ r)
    if reg_weight:
        d = np.asarray(sigma, dtype=float) - (0.0 if sigma_ref is None else np.asarray(sigma_ref, dtype=float))
        value += reg_weight * float(d @ d)
    return value


@dataclass(frozen=True)
class Inclusion:
    center: tuple[float, float]
    radius: float
    value: float


def phantom_sigma(mesh: Mesh, background: float, inclusions=(), domain_radius: float | None = None) -> np.ndarray:
    """Per-element conductivity: the last inclusion containing the centroid wins, else ``background``."""
    R = domain_radius if domain_radius is not None else float(np.max(np.linalg.norm(mesh.nodes, axis=1)))
    sigma = np.full(mesh.n_elements, float(background))
    cen = mesh.centroids
    for inc in inclusions:
        inc = inc if isinstance(inc, Inclusion) else Inclusion(*inc)
        if np.hypot(*inc.center) > R:
            raise InclusionOutsideDomain(f"inclusion centre {inc.center} lies outside the disk")
        inside = np.hypot(cen[:, 0] - inc.center[0], cen[:, 1] - inc.center[1]) <= inc.radius
        sigma[inside] = inc.value
    return sigma


def element_map(coarse: Mesh, fine: Mesh) -> np.ndarray:
    """Index of the coarse element containing each fine centroid (nearest coarse centroid if none)."""
    c = fine.centroids
    p = coarse.nodes[coarse.triangles]
    out = -np.ones(len(c), dtype=np.int64)
    for e in range(coarse.n_elements):
        a, b, d = p[e]
        det = (b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1])
        l1 = ((b[0] - c[:, 0]) * (d[1] - c[:, 1]) - (d[0] - c[:, 0]) * (b[1] - c[:, 1])) / det
        l2 = ((d[0] - c[:, 0]) * (a[1] - c[:, 1]) - (a[0] - c[:, 0]) * (d[1] - c[:, 1])) / det
        inside = (l1 >= -1e-12) & (l2 >= -1e-12) & (1 - l1 - l2 >= -1e-12) & (out < 0)
        out[inside] = e
    missing = out < 0
    if np.any(missing):
        cc = coarse.centroids
        d2 = ((c[missing, None, :] - cc[None, :, :]) ** 2).sum(axis=-1)
        out[missing] = np.argmin(d2, axis=1)
    return out


def write_measurements(path, U) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "voltage"])
        for i, u in enumerate(np.asarray(U, dtype=float)):
            w.writerow([i, repr(float(u))])


def read_measurements(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([float(r["voltage"]) for r in csv.DictReader(fh)])


@dataclass
class EitConfig:
    electrodes: int = 16
    current: float = 1e-3
    radius: float = 1.0
    forward_rings: int = 5
    forward_sectors: int = 16
    inverse_rings: int = 4
    inverse_sectors: int = 4
    background: float = 0.3
    inclusions: list = field(default_factory=lambda: [((0.4, 0.2), 0.3, 1.0)])
    sigma_min: float = 1e-3
    sigma_max: float = 10.0
    noise_sd: float = 0.0
    reg_weight: float = 0.0
    sigma_ref: float | None = None
    measurements_path: str | None = None


class EitProblem(Problem):
    """Reconstruct ``log(sigma)`` per inverse element from adjacent-drive boundary voltages."""

    name = "eit"
    soft_names = ()

    def __init__(self, config: EitConfig | None = None, measured=None, rng=None):
        self.cfg = c = config or EitConfig()
        self.fine = disk_mesh(c.forward_rings, c.forward_sectors, c.radius)
        self.coarse = disk_mesh(c.inverse_rings, c.inverse_sectors, c.radius)
        self.layout = ElectrodeLayout.on_mesh(self.fine, c.electrodes, c.current)
        self.schedule = measurement_schedule(self.layout, "adjacent")
        self.forward = ForwardModel(self.fine, self.layout, self.schedule)
        self.map = element_map(self.coarse, self.fine)
        if measured is None and c.measurements_path:
            measured = read_measurements(c.measurements_path)
        if measured is None:
            truth = phantom_sigma(self.fine, c.background, c.inclusions, c.radius)
            measured = self.forward.voltages(truth)
            if c.noise_sd > 0:
                measured = measured + c.noise_sd * rng.standard_normal(measured.shape)
        self.measured = np.asarray(measured, dtype=float)
        if self.measured.shape != (self.schedule.R,):
            raise ValueError(f"expected {self.schedule.R} measurements, got {self.measured.shape}")
        self.bounds = Bounds.uniform(np.log(c.sigma_min), np.log(c.sigma_max), self.coarse.n_elements)

    def sigma_fine(self, x) -> np.ndarray:
        return np.exp(np.asarray(x, dtype=float))[self.map]

    def compute(self, x, fidelity):
        sigma = np.exp(np.asarray(x, dtype=float))
        value = objective(sigma[self.map], self.measured, self.forward)
        if self.cfg.reg_weight:
            ref = self.cfg.background if self.cfg.sigma_ref is None else self.cfg.sigma_ref
            value += self.cfg.reg_weight * float(np.sum((sigma - ref) ** 2))
        return value, (), ()

    def seed_solutions(self):
        return [np.full(self.dim, np.log(self.cfg.background))]

    def config(self):
        c = self.cfg
        return {"electrodes": c.electrodes, "current": c.current, "radius": c.radius,
                "forward_rings": c.forward_rings, "forward_sectors": c.forward_sectors,
                "inverse_rings": c.inverse_rings, "inverse_sectors": c.inverse_sectors,
                "background": c.background,
                "inclusions": [{"center": list(i[0]), "radius": i[1], "value": i[2]} for i in c.inclusions],
                "sigma_min": c.sigma_min, "sigma_max": c.sigma_max, "noise_sd": c.noise_sd,
                "reg_weight": c.reg_weight}
