"""Fiber patch placement on a plate: patch layout to stiffness field to compliance.

Each patch is a rotated rectangle of an orthotropic layer. Elements whose
centroid lies under several patches take the thickness-weighted mean of the
rotated layer stiffnesses (equal strain in all layers), and the membrane
stiffness scales with the summed thickness.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..core import Bounds, Problem
from ..fem import (ElasticBc, FemSolution, Mesh, NoConvergence, NotPositiveDefinite, assemble_elastic, element_fields, isotropic_stiffness,
                   lame_plane_stress, orthotropic_stiffness, principal_angle, rectangle_mesh, rotate_stiffness,
                   solve_elastic, stress_rotation)

EPS_STIFFNESS = 1e-6
# objective for layouts whose stiffness matrix cannot be solved to tolerance (load path through void)
PENALTY_CAP = 1e12


@dataclass(frozen=True)
class PatchMaterial:
    E1: float = 135e9
    E2: float = 10e9
    nu12: float = 0.3
    G12: float = 5e9

    def stiffness(self) -> np.ndarray:
        return orthotropic_stiffness(self.E1, self.E2, self.nu12, self.G12)


@dataclass(frozen=True)
class StrengthLimits:
    """Layer strengths in Pa; ``St`` is the transverse shear strength (default ``Yc / 2``)."""

    Xt: float = 1500e6
    Xc: float = 1200e6
    Yt: float = 50e6
    Yc: float = 250e6
    S: float = 70e6
    St: float | None = None

    def __post_init__(self):
        if self.St is None:
            object.__setattr__(self, "St", self.Yc / 2.0)
        if min(self.Xt, self.Xc, self.Yt, self.Yc, self.S, self.St) <= 0:
            raise ValueError("strengths must be positive")


def hashin_index(sigma, limits: StrengthLimits) -> np.ndarray:
    """Largest active plane-stress Hashin mode for material-frame stresses ``[s11, s22, s12]``."""
    s = np.atleast_2d(np.asarray(sigma, dtype=float))
    s11, s22, s12 = s[:, 0], s[:, 1], s[:, 2]
    shear = (s12 / limits.S) ** 2
    fiber = np.where(s11 >= 0, (s11 / limits.Xt) ** 2 + shear, (s11 / limits.Xc) ** 2)
    mc = ((s22 / (2 * limits.St)) ** 2 + ((limits.Yc / (2 * limits.St)) ** 2 - 1) * s22 / limits.Yc + shear)
    matrix = np.where(s22 >= 0, (s22 / limits.Yt) ** 2 + shear, mc)
    out = np.maximum(fiber, matrix)
    return out if np.ndim(sigma) > 1 else out[0]


@dataclass(frozen=True)
class Patch:
    x: float
    y: float
    theta: float
    thickness: float = 0.25e-3
    width: float = 0.08
    height: float = 0.02

    def corners_grid(self, n: int = 4) -> np.ndarray:
        """``n x n`` sample points spanning the patch, corners included, in plate coordinates."""
        u = np.linspace(-0.5 * self.width, 0.5 * self.width, n)
        v = np.linspace(-0.5 * self.height, 0.5 * self.height, n)
        U, V = np.meshgrid(u, v)
        c, s = np.cos(self.theta), np.sin(self.theta)
        return np.column_stack([self.x + c * U.ravel() - s * V.ravel(), self.y + s * U.ravel() + c * V.ravel()])

    def covers(self, pts) -> np.ndarray:
        d = np.asarray(pts) - (self.x, self.y)
        c, s = np.cos(self.theta), np.sin(self.theta)
        u = c * d[:, 0] + s * d[:, 1]
        v = -s * d[:, 0] + c * d[:, 1]
        return (np.abs(u) <= 0.5 * self.width) & (np.abs(v) <= 0.5 * self.height)


@dataclass
class FppConfig:
    n_patches: int = 8
    plate_width: float = 0.2
    plate_height: float = 0.1
    nx: int = 20
    ny: int = 10
    patch_width: float = 0.1
    patch_height: float = 0.04
    patch_thickness: float = 0.25e-3
    traction: float = 5e3
    hole_center: tuple = (0.1, 0.05)
    hole_radius: float = 0.0
    material: PatchMaterial = field(default_factory=PatchMaterial)
    limits: StrengthLimits = field(default_factory=StrengthLimits)
    jump_weight: float = 1.0


def design_patches(x, cfg: FppConfig) -> list[Patch]:
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    return [Patch(a, b, th, cfg.patch_thickness, cfg.patch_width, cfg.patch_height) for a, b, th in x]


@dataclass
class StiffnessField:
    C: np.ndarray  # (m, 3, 3)
    T: np.ndarray  # summed patch thickness per element
    cover: np.ndarray  # (n_patches, m) boolean
    assembly_thickness: np.ndarray


def reference_stiffness(material: PatchMaterial) -> np.ndarray:
    lam, mu = lame_plane_stress(material.E2, 0.3)
    return isotropic_stiffness(lam, mu)


def stiffness_field(patches, mesh: Mesh, material: PatchMaterial, void=None) -> StiffnessField:
    """Per-element laminate stiffness ``sum_i (t_i / T) rot(C_i, theta_i)`` and thickness ``T``.

    Elements with no covering patch (or flagged in ``void``) get
    ``1e-6`` times a reference isotropic stiffness and the mean patch thickness.
    """
    m = mesh.n_elements
    cen = mesh.centroids
    C0 = material.stiffness()
    cover = np.array([p.covers(cen) for p in patches]).reshape(len(patches), m)
    if void is not None:
        cover &= ~np.asarray(void)[None, :]
    t = np.array([p.thickness for p in patches])
    T = (cover * t[:, None]).sum(axis=0)
    rot = np.array([rotate_stiffness(C0, p.theta) for p in patches]).reshape(len(patches), 3, 3)
    Csum = np.einsum("pe,p,pij->eij", cover.astype(float), t, rot)
    C = np.empty((m, 3, 3))
    covered = T > 0
    C[covered] = Csum[covered] / T[covered, None, None]
    C[~covered] = EPS_STIFFNESS * reference_stiffness(material)
    t_floor = float(np.mean(t)) if len(t) else 1.0
    return StiffnessField(C, T, cover, np.where(covered, T, t_floor))


def position_violation(patches, inside, n: int = 4) -> np.ndarray:
    """Per patch, fraction of its ``n x n`` corner-inclusive sample points outside the domain."""
    return np.array([1.0 - np.mean(inside(p.corners_grid(n))) for p in patches])


def thickness_jump(mesh: Mesh, T) -> float:
    """``sum |T(a) - T(b)| * shared edge length`` over interior edges."""
    a, b, length = mesh.edge_adjacency()
    return float(np.sum(np.abs(T[a] - T[b]) * length))


def strength_index(patches, field_: StiffnessField, solution: FemSolution, material: PatchMaterial,
                   limits: StrengthLimits) -> float:
    """Max Hashin index over covered elements and the patches covering them."""
    eps = solution.element_strain
    eps_v = np.column_stack([eps[:, 0, 0], eps[:, 1, 1], 2.0 * eps[:, 0, 1]])
    C0 = material.stiffness()
    worst = 0.0
    for p, cov in zip(patches, field_.cover):
        if not cov.any():
            continue
        # equal-strain layer stress, expressed in the patch material frame
        layer = eps_v[cov] @ rotate_stiffness(C0, p.theta).T
        local = layer @ stress_rotation(p.theta).T
        worst = max(worst, float(np.max(hashin_index(local, limits))))
    return worst


def constraint_report(patches, mesh: Mesh, field_: StiffnessField, solution: FemSolution, cfg: FppConfig,
                      inside) -> tuple[np.ndarray, np.ndarray]:
    """Hard ``[position, strength]`` violations and soft ``[thickness jump]`` penalty."""
    pos = float(np.sum(position_violation(patches, inside)))
    strength = max(0.0, strength_index(patches, field_, solution, cfg.material, cfg.limits) - 1.0)
    return np.array([pos, strength]), np.array([thickness_jump(mesh, field_.T)])


class FppProblem(Problem):
    """Minimize compliance of a left-clamped, right-loaded plate over patch positions and angles."""

    name = "fpp"
    hard_names = ("position", "strength")
    soft_names = ("thickness_jump",)

    def __init__(self, config: FppConfig | None = None):
        self.cfg = c = config or FppConfig()
        if c.n_patches < 1:
            raise ValueError("need at least one patch")
        self.mesh = rectangle_mesh(c.nx, c.ny, c.plate_width, c.plate_height)
        self.void = self._in_hole(self.mesh.centroids) if c.hole_radius > 0 else None
        self.bc = ElasticBc()
        left = self.mesh.node_sets["left"]
        for n in left:
            self.bc.dirichlet += [(int(n), 0, 0.0), (int(n), 1, 0.0)]
        for e in ElasticBc.edges_along(self.mesh.node_sets["right"]):
            self.bc.neumann.append((e, (c.traction, 0.0)))
        lo = np.tile([0.0, 0.0, -np.pi / 2], c.n_patches)
        hi = np.tile([c.plate_width, c.plate_height, np.pi / 2], c.n_patches)
        self.bounds = Bounds(lo, hi)

    def _in_hole(self, pts) -> np.ndarray:
        c = self.cfg
        return np.hypot(pts[:, 0] - c.hole_center[0], pts[:, 1] - c.hole_center[1]) < c.hole_radius

    def inside(self, pts) -> np.ndarray:
        c = self.cfg
        tol = 1e-12 * max(c.plate_width, c.plate_height)
        ok = ((pts[:, 0] >= -tol) & (pts[:, 0] <= c.plate_width + tol)
              & (pts[:, 1] >= -tol) & (pts[:, 1] <= c.plate_height + tol))
        if c.hole_radius > 0:
            ok &= ~self._in_hole(pts)
        return ok

    @property
    def soft_weights(self):
        return np.array([self.cfg.jump_weight])

    def solve(self, x):
        patches = design_patches(x, self.cfg)
        fld = stiffness_field(patches, self.mesh, self.cfg.material, self.void)
        system = assemble_elastic(self.mesh, fld.C, self.bc, fld.assembly_thickness)
        u = solve_elastic(system)
        sol = element_fields(self.mesh, u, fld.C, fld.assembly_thickness)
        return patches, fld, sol

    def compute(self, x, fidelity):
        try:
            patches, fld, sol = self.solve(x)
        except (NoConvergence, NotPositiveDefinite):
            patches = design_patches(x, self.cfg)
            fld = stiffness_field(patches, self.mesh, self.cfg.material, self.void)
            pos = float(np.sum(position_violation(patches, self.inside)))
            return PENALTY_CAP, np.array([pos, 1.0]), np.array([thickness_jump(self.mesh, fld.T)])
        hard, soft = constraint_report(patches, self.mesh, fld, sol, self.cfg, self.inside)
        return min(sol.compliance, PENALTY_CAP), hard, soft

    def seed_solutions(self):
        return principal_stress_seeds(self)

    def config(self):
        c = self.cfg
        m, l = c.material, c.limits
        return {"n_patches": c.n_patches, "plate_width": c.plate_width, "plate_height": c.plate_height,
                "nx": c.nx, "ny": c.ny, "patch_width": c.patch_width, "patch_height": c.patch_height,
                "patch_thickness": c.patch_thickness, "traction": c.traction, "hole_center": list(c.hole_center),
                "hole_radius": c.hole_radius, "jump_weight": c.jump_weight,
                "material": {"E1": m.E1, "E2": m.E2, "nu12": m.nu12, "G12": m.G12},
                "limits": {"Xt": l.Xt, "Xc": l.Xc, "Yt": l.Yt, "Yc": l.Yc, "S": l.S, "St": l.St}}


def _spread(lo: float, hi: float, n: int) -> np.ndarray:
    if n == 1 or hi <= lo:
        return np.full(n, 0.5 * (lo + hi))
    return np.linspace(lo, hi, n)


def principal_stress_seeds(problem: FppProblem) -> list[np.ndarray]:
    """Patch grids whose angles follow the major principal stress of the bare isotropic plate."""
    c = problem.cfg
    mesh = problem.mesh
    C = reference_stiffness(c.material)
    system = assemble_elastic(mesh, C, problem.bc)
    sol = element_fields(mesh, solve_elastic(system), C)
    angle = principal_angle(sol.stress_voigt)
    cen = mesh.centroids
    seeds = []
    for rows in (3, 2, 1):
        cols = int(np.ceil(c.n_patches / rows))
        # centres spread over the region where an unrotated patch stays on the plate
        xs = _spread(0.5 * c.patch_width, c.plate_width - 0.5 * c.patch_width, cols)
        ys = _spread(0.5 * c.patch_height, c.plate_height - 0.5 * c.patch_height, rows)
        pts = [(x, y) for y in ys for x in xs][:c.n_patches]
        x = []
        for px, py in pts:
            e = int(np.argmin((cen[:, 0] - px) ** 2 + (cen[:, 1] - py) ** 2))
            th = float(angle[e])
            # keep the rotated patch on the plate where possible
            ex = 0.5 * (c.patch_width * abs(np.cos(th)) + c.patch_height * abs(np.sin(th)))
            ey = 0.5 * (c.patch_width * abs(np.sin(th)) + c.patch_height * abs(np.cos(th)))
            px = float(np.clip(px, min(ex, 0.5 * c.plate_width), max(c.plate_width - ex, 0.5 * c.plate_width)))
            py = float(np.clip(py, min(ey, 0.5 * c.plate_height), max(c.plate_height - ey, 0.5 * c.plate_height)))
            x += [px, py, th]
        seeds.append(np.clip(np.array(x), problem.bounds.lower, problem.bounds.upper))
    return seeds


def write_design_csv(path, x) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patch_id", "x", "y", "theta"])
        for i, (a, b, th) in enumerate(np.asarray(x, dtype=float).reshape(-1, 3)):
            w.writerow([i, repr(float(a)), repr(float(b)), repr(float(th))])


def read_design_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(r["x"]), float(r["y"]), float(r["theta"])] for r in csv.DictReader(fh)]).ravel()


def write_field_csv(path, mesh: Mesh, fld: StiffnessField) -> None:
    cen = mesh.centroids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element", "cx", "cy", "thickness", "C11", "C12", "C16", "C22", "C26", "C66"])
        for e in range(mesh.n_elements):
            C = fld.C[e]
            w.writerow([e, cen[e, 0], cen[e, 1], fld.T[e], C[0, 0], C[0, 1], C[0, 2], C[1, 1], C[1, 2], C[2, 2]])
