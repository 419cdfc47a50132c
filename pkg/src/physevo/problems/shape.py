"""Hole-shape optimization in a biaxially loaded plate, evaluated on a quarter model.

The hole boundary in the first quadrant is two quadratic Bezier segments
joined at an interior node with a prescribed tangent angle; quarter symmetry
closes it. The plate is meshed on a structured grid and elements whose
centroid falls inside the hole are given a vanishing stiffness.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..core import Bounds, PhysevoError, Problem, UnknownFidelity
from ..fem import (ElasticBc, NoConvergence, NotPositiveDefinite, assemble_elastic, deviatoric_norm, element_fields, isotropic_stiffness,
                   lame_plane_stress, rectangle_mesh, solve_elastic)

VOID_FLOOR = 1e-6
PENALTY_CAP = 1e12


class InvalidSpline(PhysevoError):
    pass


class SelfIntersecting(PhysevoError):
    pass


@dataclass(frozen=True)
class HoleSpline:
    """Endpoints ``(P1_1, 0)`` and ``(0, P2_3)``, interior node ``(P1_2, P2_2)``, tangent angle ``psi_2``."""

    P1_1: float
    P1_2: float
    P2_2: float
    P2_3: float
    psi_2: float

    @classmethod
    def from_vector(cls, x) -> "HoleSpline":
        return cls(*(float(v) for v in x))

    def as_vector(self) -> np.ndarray:
        return np.array([self.P1_1, self.P1_2, self.P2_2, self.P2_3, self.psi_2])

    @classmethod
    def circle(cls, r: float) -> "HoleSpline":
        return cls.ellipse(r, r)

    @classmethod
    def ellipse(cls, a: float, b: float) -> "HoleSpline":
        """Approximation of the ellipse with semi-axes ``a`` (along x) and ``b``."""
        return cls(a, a / np.sqrt(2), b / np.sqrt(2), b, float(np.arctan2(b, -a)))

    def control_points(self):
        """Bezier control points ``(P0, C1, N, C2, P3)``; ``C1`` and ``C2`` lie on the node tangent."""
        d = np.array([np.cos(self.psi_2), np.sin(self.psi_2)])
        N = np.array([self.P1_2, self.P2_2])
        if abs(d[0]) < 1e-12 or abs(d[1]) < 1e-12:
            raise InvalidSpline("tangent parallel to an axis leaves a control point undefined")
        # C1 sits straight above the x-axis endpoint and C2 level with the y-axis endpoint,
        # so the curve meets both axes at right angles and reflects smoothly
        s1 = (N[0] - self.P1_1) / d[0]
        s2 = (self.P2_3 - N[1]) / d[1]
        return np.array([self.P1_1, 0.0]), N - s1 * d, N, N + s2 * d, np.array([0.0, self.P2_3])


def _bezier(p0, c, p1, t):
    t = t[:, None]
    return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * c + t ** 2 * p1


def hole_boundary(spline: HoleSpline, samples: int = 64) -> np.ndarray:
    """``samples`` points from the x-axis endpoint to the y-axis endpoint."""
    if samples < 3:
        raise InvalidSpline("need at least 3 samples")
    P0, C1, N, C2, P3 = spline.control_points()
    u = np.linspace(0.0, 2.0, samples)
    first = u < 1.0
    pts = np.empty((samples, 2))
    pts[first] = _bezier(P0, C1, N, u[first])
    pts[~first] = _bezier(N, C2, P3, u[~first] - 1.0)
    pts[0] = (spline.P1_1, 0.0)
    pts[-1] = (0.0, spline.P2_3)
    return pts


def closed_boundary(quarter: np.ndarray) -> np.ndarray:
    """Reflect a first-quadrant arc into a closed counterclockwise polygon (no repeated end point)."""
    q = np.asarray(quarter, dtype=float)
    q2 = q[::-1] * (-1, 1)
    q3 = q * (-1, -1)
    q4 = q[::-1] * (1, -1)
    return np.concatenate([q[:-1], q2[:-1], q3[:-1], q4[:-1]])


def _segments_cross(p, q, r, s):
    """Proper crossing test of segments ``p-q`` and ``r-s`` (arrays of points)."""
    def orient(a, b, c):
        return np.sign((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0]))
    return (orient(p, q, r) * orient(p, q, s) < 0) & (orient(r, s, p) * orient(r, s, q) < 0)


def self_intersections(polygon: np.ndarray) -> int:
    """Number of crossing pairs of non-adjacent edges of a closed polygon."""
    P = np.asarray(polygon, dtype=float)
    n = len(P)
    a, b = P, np.roll(P, -1, axis=0)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    return int(np.sum(_segments_cross(a[i], b[i], a[j], b[j])))


def shoelace(polygon: np.ndarray) -> float:
    P = np.asarray(polygon, dtype=float)
    x, y = P[:, 0], P[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def enclosed_area(boundary: np.ndarray) -> float:
    """Shoelace area of a closed polygon (pass a quarter arc to have it reflected first).

    Raises
    ------
    SelfIntersecting
        If two non-adjacent edges cross.
    """
    B = np.asarray(boundary, dtype=float)
    if np.all(B >= -1e-15) and np.isclose(B[0, 1], 0.0) and np.isclose(B[-1, 0], 0.0):
        B = closed_boundary(B)
    if self_intersections(B):
        raise SelfIntersecting("hole boundary crosses itself")
    return abs(shoelace(B))


def points_in_polygon(pts: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd rule containment of ``pts`` in a closed polygon."""
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    a = polygon
    b = np.roll(polygon, -1, axis=0)
    ax, ay, bx, by = a[:, 0][None], a[:, 1][None], b[:, 0][None], b[:, 1][None]
    straddle = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = ax + (y - ay) * (bx - ax) / (by - ay)
    return np.sum(straddle & (x < xcross), axis=1) % 2 == 1


@dataclass
class ShapeConfig:
    E: float = 210e9
    nu: float = 0.3
    lam: float | None = None
    mu: float | None = None
    half_width: float = 1.0
    half_height: float = 1.0
    traction_x: float = 1e6
    traction_y: float = 1e6
    area_min: float = 0.2
    grids: list = field(default_factory=lambda: [(32, 32), (96, 96)])
    samples: int = 64
    radius_min: float = 0.05
    radius_max: float = 0.8

    def lame(self) -> tuple[float, float]:
        if self.lam is not None and self.mu is not None:
            lam, mu = self.lam, self.mu
        else:
            lam, mu = lame_plane_stress(self.E, self.nu)
        if not (mu > 0 and lam + mu > 0):
            raise ValueError("need mu > 0 and lam + mu > 0")
        return lam, mu


def validity(spline: HoleSpline, half_width: float = 1.0, half_height: float = 1.0, samples: int = 64) -> float:
    """Graded violation: bound exceedances, plus the self-intersection count when bounds hold."""
    s = spline
    v = 0.0
    v += max(0.0, -s.P1_1) + max(0.0, s.P1_1 - half_width)
    v += max(0.0, -s.P2_3) + max(0.0, s.P2_3 - half_height)
    v += max(0.0, -s.P1_2) + max(0.0, s.P1_2 - half_width)
    v += max(0.0, -s.P2_2) + max(0.0, s.P2_2 - half_height)
    v += max(0.0, np.pi / 2 - s.psi_2) + max(0.0, s.psi_2 - np.pi)
    if v > 0:
        return v
    try:
        poly = closed_boundary(hole_boundary(s, samples))
    except InvalidSpline:
        return 1.0
    return float(self_intersections(poly))


class _Level:
    def __init__(self, cfg: ShapeConfig, nx: int, ny: int):
        self.mesh = rectangle_mesh(nx, ny, cfg.half_width, cfg.half_height)
        self.bc = ElasticBc()
        for n in self.mesh.node_sets["left"]:
            self.bc.dirichlet.append((int(n), 0, 0.0))
        for n in self.mesh.node_sets["bottom"]:
            self.bc.dirichlet.append((int(n), 1, 0.0))
        for e in ElasticBc.edges_along(self.mesh.node_sets["right"]):
            self.bc.neumann.append((e, (cfg.traction_x, 0.0)))
        for e in ElasticBc.edges_along(self.mesh.node_sets["top"]):
            self.bc.neumann.append((e, (0.0, cfg.traction_y)))


@dataclass
class ShapeEvaluation:
    objective: float
    area: float
    validity: float
    compliance: float
    void: np.ndarray
    stress_norm: np.ndarray


class ShapeProblem(Problem):
    """Minimize the peak deviatoric stress norm around the hole; fidelity indexes the grid list."""

    name = "shape"
    hard_names = ("area", "validity")

    def __init__(self, config: ShapeConfig | None = None):
        self.cfg = c = config or ShapeConfig()
        self.fidelities = tuple(range(len(c.grids)))
        self._levels = {}
        lam, mu = c.lame()
        self.C = isotropic_stiffness(lam, mu)
        lo = [c.radius_min, c.radius_min, c.radius_min, c.radius_min, np.pi / 2 + 0.05]
        hi = [c.radius_max, c.radius_max, c.radius_max, c.radius_max, np.pi - 0.05]
        self.bounds = Bounds(np.array(lo), np.array(hi))

    def level(self, fidelity: int) -> _Level:
        if fidelity not in self.fidelities:
            raise UnknownFidelity(f"fidelity {fidelity} not in {self.fidelities}")
        if fidelity not in self._levels:
            nx, ny = self.cfg.grids[fidelity]
            self._levels[fidelity] = _Level(self.cfg, nx, ny)
        return self._levels[fidelity]

    def evaluate_detail(self, spline, fidelity: int = 0) -> ShapeEvaluation:
        """Full evaluation of a spline (or its parameter vector) at one grid level."""
        if not isinstance(spline, HoleSpline):
            spline = HoleSpline.from_vector(spline)
        c = self.cfg
        lvl = self.level(fidelity)
        mesh = lvl.mesh
        valid = validity(spline, c.half_width, c.half_height, c.samples)
        try:
            quarter = hole_boundary(spline, c.samples)
            poly = closed_boundary(quarter)
            area = abs(shoelace(poly))
            void = points_in_polygon(mesh.centroids, poly)
        except InvalidSpline:
            area, void = 0.0, np.zeros(mesh.n_elements, dtype=bool)
        C = np.broadcast_to(self.C, (mesh.n_elements, 3, 3)).copy()
        C[void] *= VOID_FLOOR
        # nodes touched only by void elements carry no load; pinning them keeps K well conditioned
        touched = np.zeros(mesh.n_nodes, dtype=bool)
        touched[mesh.triangles[~void].ravel()] = True
        fixed = {(n, c) for n, c, _ in lvl.bc.dirichlet}
        extra = [(int(n), c, 0.0) for n in np.flatnonzero(~touched) for c in (0, 1) if (int(n), c) not in fixed]
        bc = ElasticBc(lvl.bc.dirichlet + extra, lvl.bc.neumann)
        try:
            u = solve_elastic(assemble_elastic(mesh, C, bc))
        except (NoConvergence, NotPositiveDefinite):
            return ShapeEvaluation(PENALTY_CAP, area, max(valid, 1.0), np.inf, void, np.full(mesh.n_elements, np.nan))
        sol = element_fields(mesh, u, C)
        norm = deviatoric_norm(sol.stress_voigt)
        solid = ~void
        obj = float(np.max(norm[solid])) if solid.any() else 0.0
        return ShapeEvaluation(obj, area, valid, sol.compliance, void, norm)

    def compute(self, x, fidelity):
        ev = self.evaluate_detail(HoleSpline.from_vector(x), fidelity)
        return ev.objective, [max(0.0, self.cfg.area_min - ev.area), ev.validity], ()

    def seed_solutions(self):
        r = float(np.sqrt(self.cfg.area_min / np.pi)) * 1.05
        r = min(max(r, self.cfg.radius_min), self.cfg.radius_max)
        return [HoleSpline.circle(r).as_vector()]

    def config(self):
        c = self.cfg
        lam, mu = c.lame()
        return {"lam": lam, "mu": mu, "half_width": c.half_width, "half_height": c.half_height,
                "traction_x": c.traction_x, "traction_y": c.traction_y, "area_min": c.area_min,
                "grids": [list(g) for g in c.grids], "samples": c.samples,
                "radius_min": c.radius_min, "radius_max": c.radius_max}


def write_polyline_csv(path, pts) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for x, y in np.asarray(pts, dtype=float):
            w.writerow([repr(float(x)), repr(float(y))])


def load_probe_designs(path=None) -> np.ndarray:
    """Five fixed spline parameter vectors used for cross-fidelity ranking checks."""
    if path is None:
        text = resources.files("physevo.data").joinpath("shape_probes.csv").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    rows = list(csv.DictReader(text.splitlines()))
    return np.array([[float(r[k]) for k in ("P1_1", "P1_2", "P2_2", "P2_3", "psi_2")] for r in rows])
