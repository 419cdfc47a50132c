"""Linear-triangle finite elements in 2D: meshing, conduction and plane-stress assembly.

Stiffness tensors use the Voigt form ``[s11, s22, s12]`` with engineering
shear strain ``g12 = 2 e12``. Tractions are forces per unit edge length;
element thickness scales the membrane stiffness only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._accel import dispatch, njit
from .core import PhysevoError


class DegenerateGeometry(PhysevoError):
    pass


class NonPositiveConductivity(PhysevoError):
    pass


class NotPositiveDefinite(PhysevoError):
    pass


class NoConvergence(PhysevoError):
    pass


class SingularAfterBc(NotPositiveDefinite):
    pass


@dataclass
class Mesh:
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    element_area: np.ndarray = field(default=None)
    node_sets: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.boundary_nodes = np.asarray(self.boundary_nodes, dtype=np.int64)
        if self.element_area is None:
            self.element_area = triangle_areas(self.nodes, self.triangles)
        if np.any(self.element_area <= 0):
            raise DegenerateGeometry("triangles must be positively oriented with positive area")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def edge_adjacency(self):
        """Interior edges as ``(elem_a, elem_b, length)`` arrays."""
        tri = self.triangles
        edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        owner = np.tile(np.arange(len(tri)), 3)
        key = np.sort(edges, axis=1)
        order = np.lexsort((key[:, 1], key[:, 0]))
        key, owner = key[order], owner[order]
        same = np.all(key[1:] == key[:-1], axis=1)
        i = np.flatnonzero(same)
        a, b = owner[i], owner[i + 1]
        lengths = np.linalg.norm(self.nodes[key[i, 0]] - self.nodes[key[i, 1]], axis=1)
        return a, b, lengths


def triangle_areas(nodes, triangles) -> np.ndarray:
    p = nodes[triangles]
    return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))


def rectangle_mesh(nx: int, ny: int, width: float, height: float, x0: float = 0.0, y0: float = 0.0) -> Mesh:
    """Structured ``nx`` x ``ny`` grid, each cell split along its rising diagonal.

    The split direction makes a square grid symmetric under reflection about
    the line ``x = y``. Node sets ``left``, ``right``, ``bottom``, ``top`` are
    ordered by increasing coordinate along the edge.
    """
    if nx < 1 or ny < 1:
        raise DegenerateGeometry("subdivision counts must be >= 1")
    if not (width > 0 and height > 0):
        raise DegenerateGeometry("rectangle extents must be positive")
    xs = x0 + width * np.arange(nx + 1) / nx
    ys = y0 + height * np.arange(ny + 1) / ny
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    nid = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    n00 = nid[:-1, :-1].ravel()
    n10 = nid[:-1, 1:].ravel()
    n11 = nid[1:, 1:].ravel()
    n01 = nid[1:, :-1].ravel()
    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([n00, n10, n11])
    tris[1::2] = np.column_stack([n00, n11, n01])
    bottom, right, top, left = nid[0, :], nid[:, -1], nid[-1, :], nid[:, 0]
    boundary = np.concatenate([bottom[:-1], right[:-1], top[::-1][:-1], left[::-1][:-1]])
    sets = {"bottom": bottom, "right": right, "top": top, "left": left}
    return Mesh(nodes, tris, boundary, node_sets=sets)


def disk_mesh(rings: int, sectors: int, radius: float) -> Mesh:
    """Structured fan of a disk: ring ``k`` carries ``sectors * k`` equally spaced nodes.

    Every sector is triangulated identically, so the mesh maps onto itself
    under rotation by ``2 pi / sectors``. Boundary nodes run counterclockwise
    starting on the positive x axis.
    """
    if rings < 1 or sectors < 3:
        raise DegenerateGeometry("need rings >= 1 and sectors >= 3")
    if not radius > 0:
        raise DegenerateGeometry("radius must be positive")
    nodes = [(0.0, 0.0)]
    ring_ids = [np.array([0])]
    for k in range(1, rings + 1):
        m = sectors * k
        ang = 2.0 * np.pi * np.arange(m) / m
        r = radius * k / rings
        start = len(nodes)
        nodes.extend(zip(r * np.cos(ang), r * np.sin(ang)))
        ring_ids.append(np.arange(start, start + m))
    tris = []
    for k in range(1, rings + 1):
        outer = ring_ids[k]
        m_out = len(outer)
        if k == 1:
            for j in range(m_out):
                tris.append((0, outer[j], outer[(j + 1) % m_out]))
            continue
        inner = ring_ids[k - 1]
        m_in = len(inner)
        i = o = 0
        while i < m_in or o < m_out:
            # next angular positions as exact fractions of a full turn
            next_in = Fraction(i + 1, m_in)
            next_out = Fraction(o + 1, m_out)
            if o < m_out and (i >= m_in or next_out <= next_in):
                tris.append((inner[i % m_in], outer[o], outer[(o + 1) % m_out]))
                o += 1
            else:
                tris.append((inner[i % m_in], outer[(o) % m_out], inner[(i + 1) % m_in]))
                i += 1
    nodes = np.array(nodes)
    tris = np.array(tris, dtype=np.int64)
    area = triangle_areas(nodes, tris)
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return Mesh(nodes, tris, ring_ids[-1], node_sets={"boundary": ring_ids[-1]})


def build_mesh(kind: str, **params) -> Mesh:
    """``build_mesh("rectangle", nx=, ny=, width=, height=)`` or ``build_mesh("disk", rings=, sectors=, radius=)``."""
    if kind == "rectangle":
        return rectangle_mesh(**params)
    if kind == "disk":
        return disk_mesh(**params)
    raise DegenerateGeometry(f"unknown mesh kind {kind!r}")


def write_mesh(mesh: Mesh, path) -> None:
    """Plain-text dump: ``node <id> <x> <y>`` then ``tri <id> <a> <b> <c>`` lines."""
    lines = [f"node {i} {float(x)!r} {float(y)!r}" for i, (x, y) in enumerate(mesh.nodes)]
    lines += [f"tri {e} {a} {b} {c}" for e, (a, b, c) in enumerate(mesh.triangles)]
    lines += ["boundary " + " ".join(str(n) for n in mesh.boundary_nodes)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    nodes, tris, boundary = [], [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "node":
            nodes.append((float(parts[2]), float(parts[3])))
        elif parts[0] == "tri":
            tris.append(tuple(int(p) for p in parts[2:5]))
        elif parts[0] == "boundary":
            boundary = [int(p) for p in parts[1:]]
    return Mesh(np.array(nodes), np.array(tris), np.array(boundary))


# Element kernels ---------------------------------------------------------

def _gradients_numpy(nodes, tris):
    p = nodes[tris]
    x, y = p[:, :, 0], p[:, :, 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    b = np.column_stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]]) / area2[:, None]
    c = np.column_stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]]) / area2[:, None]
    return b, c, 0.5 * area2


def shape_gradients(mesh: Mesh):
    """Per-element shape-function gradients ``(dN/dx, dN/dy)``, each ``(m, 3)``."""
    b, c, _ = _gradients_numpy(mesh.nodes, mesh.triangles)
    return b, c


def _scalar_triplets_numpy(nodes, tris, coef):
    b, c, area = _gradients_numpy(nodes, tris)
    ke = (coef * area)[:, None, None] * (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    return rows, cols, ke.ravel()


@njit
def _scalar_triplets_numba(nodes, tris, coef):
    m = tris.shape[0]
    rows = np.empty(9 * m, dtype=np.int64)
    cols = np.empty(9 * m, dtype=np.int64)
    vals = np.empty(9 * m)
    b = np.empty(3)
    c = np.empty(3)
    for e in range(m):
        i0, i1, i2 = tris[e, 0], tris[e, 1], tris[e, 2]
        x0, y0 = nodes[i0, 0], nodes[i0, 1]
        x1, y1 = nodes[i1, 0], nodes[i1, 1]
        x2, y2 = nodes[i2, 0], nodes[i2, 1]
        a2 = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        b[0] = (y1 - y2) / a2
        b[1] = (y2 - y0) / a2
        b[2] = (y0 - y1) / a2
        c[0] = (x2 - x1) / a2
        c[1] = (x0 - x2) / a2
        c[2] = (x1 - x0) / a2
        s = coef[e] * 0.5 * a2
        k = 9 * e
        for p in range(3):
            for q in range(3):
                rows[k] = tris[e, p]
                cols[k] = tris[e, q]
                vals[k] = s * (b[p] * b[q] + c[p] * c[q])
                k += 1
    return rows, cols, vals


scalar_triplets = dispatch("fem.scalar_triplets", _scalar_triplets_numba, _scalar_triplets_numpy)


def _strain_matrices_numpy(nodes, tris):
    b, c, area = _gradients_numpy(nodes, tris)
    m = len(tris)
    B = np.zeros((m, 3, 6))
    B[:, 0, 0::2] = b
    B[:, 1, 1::2] = c
    B[:, 2, 0::2] = c
    B[:, 2, 1::2] = b
    return B, area


def _elastic_dofs(tris):
    d = np.empty((len(tris), 6), dtype=np.int64)
    d[:, 0::2] = 2 * tris
    d[:, 1::2] = 2 * tris + 1
    return d


def _elastic_triplets_numpy(nodes, tris, D, thickness):
    B, area = _strain_matrices_numpy(nodes, tris)
    ke = np.einsum("eki,ekl,elj->eij", B, D, B) * (area * thickness)[:, None, None]
    dofs = _elastic_dofs(tris)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    return rows, cols, ke.ravel()


@njit
def _elastic_triplets_numba(nodes, tris, D, thickness):
    m = tris.shape[0]
    rows = np.empty(36 * m, dtype=np.int64)
    cols = np.empty(36 * m, dtype=np.int64)
    vals = np.empty(36 * m)
    B = np.zeros((3, 6))
    DB = np.empty((3, 6))
    dofs = np.empty(6, dtype=np.int64)
    for e in range(m):
        i0, i1, i2 = tris[e, 0], tris[e, 1], tris[e, 2]
        x0, y0 = nodes[i0, 0], nodes[i0, 1]
        x1, y1 = nodes[i1, 0], nodes[i1, 1]
        x2, y2 = nodes[i2, 0], nodes[i2, 1]
        a2 = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        bs = ((y1 - y2) / a2, (y2 - y0) / a2, (y0 - y1) / a2)
        cs = ((x2 - x1) / a2, (x0 - x2) / a2, (x1 - x0) / a2)
        for a in range(3):
            B[0, 2 * a] = bs[a]
            B[1, 2 * a + 1] = cs[a]
            B[2, 2 * a] = cs[a]
            B[2, 2 * a + 1] = bs[a]
            dofs[2 * a] = 2 * tris[e, a]
            dofs[2 * a + 1] = 2 * tris[e, a] + 1
        for r in range(3):
            for j in range(6):
                acc = 0.0
                for k in range(3):
                    acc += D[e, r, k] * B[k, j]
                DB[r, j] = acc
        s = 0.5 * a2 * thickness[e]
        base = 36 * e
        for i in range(6):
            for j in range(6):
                acc = 0.0
                for k in range(3):
                    acc += B[k, i] * DB[k, j]
                rows[base] = dofs[i]
                cols[base] = dofs[j]
                vals[base] = s * acc
                base += 1
    return rows, cols, vals


elastic_triplets = dispatch("fem.elastic_triplets", _elastic_triplets_numba, _elastic_triplets_numpy)


# Assembly ----------------------------------------------------------------

def assemble_scalar(mesh: Mesh, sigma) -> sp.csr_matrix:
    """Conduction stiffness ``sum_e sigma_e A_e grad(N)^T grad(N)``; singular until grounded."""
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (mesh.n_elements,))
    if np.any(~(sigma > 0)):
        raise NonPositiveConductivity("conductivity must be positive in every element")
    rows, cols, vals = scalar_triplets(mesh.nodes, mesh.triangles, np.ascontiguousarray(sigma))
    n = mesh.n_nodes
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def isotropic_stiffness(lam: float, mu: float) -> np.ndarray:
    """Voigt matrix of ``sigma = lam tr(eps) I + 2 mu eps`` for 2D tensors."""
    return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])


def orthotropic_stiffness(E1: float, E2: float, nu12: float, G12: float) -> np.ndarray:
    """Plane-stress Voigt stiffness of an orthotropic layer in its material frame."""
    nu21 = nu12 * E2 / E1
    d = 1.0 - nu12 * nu21
    if not (E1 > 0 and E2 > 0 and G12 > 0 and d > 0):
        raise ValueError("orthotropic constants do not give a positive-definite stiffness")
    return np.array([[E1 / d, nu12 * E2 / d, 0.0], [nu12 * E2 / d, E2 / d, 0.0], [0.0, 0.0, G12]])


def lame_plane_stress(E: float, nu: float) -> tuple[float, float]:
    """2D Lamé parameters reproducing plane-stress behaviour of an (E, nu) solid."""
    return E * nu / (1 - nu * nu), E / (2 * (1 + nu))


def stress_rotation(theta: float) -> np.ndarray:
    """Matrix mapping global Voigt stress to a frame rotated by ``theta``."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c * c, s * s, 2 * s * c], [s * s, c * c, -2 * s * c], [-s * c, s * c, c * c - s * s]])


def rotate_stiffness(C: np.ndarray, theta: float) -> np.ndarray:
    """Voigt stiffness of a material whose principal frame is rotated by ``theta``."""
    Tinv = stress_rotation(-theta)
    return Tinv @ C @ Tinv.T


@dataclass
class ElasticBc:
    """Dirichlet ``(node, component, value)`` and Neumann ``((node_a, node_b), (t1, t2))`` data."""

    dirichlet: list = field(default_factory=list)
    neumann: list = field(default_factory=list)

    @staticmethod
    def edges_along(node_ids) -> list[tuple[int, int]]:
        ids = list(node_ids)
        return list(zip(ids[:-1], ids[1:]))


@dataclass
class ElasticSystem:
    K: sp.csr_matrix
    f: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray

    @property
    def reduced(self):
        K_ff = self.K[self.free][:, self.free]
        rhs = self.f[self.free]
        if self.fixed.size:
            rhs = rhs - self.K[self.free][:, self.fixed] @ self.fixed_values
        return K_ff.tocsc(), rhs

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        u = np.zeros(self.K.shape[0])
        u[self.free] = u_free
        u[self.fixed] = self.fixed_values
        return u


def traction_loads(mesh: Mesh, bc: ElasticBc) -> np.ndarray:
    f = np.zeros(2 * mesh.n_nodes)
    for (a, b), t in bc.neumann:
        length = float(np.linalg.norm(mesh.nodes[a] - mesh.nodes[b]))
        t = np.asarray(t, dtype=float)
        for n in (a, b):
            f[2 * n:2 * n + 2] += 0.5 * length * t
    return f


def assemble_elastic(mesh: Mesh, C_per_element, bc: ElasticBc, thickness=None) -> ElasticSystem:
    """Constant-strain-triangle plane-stress system with lumped edge tractions.

    ``C_per_element`` is a single 3x3 Voigt matrix or an ``(m, 3, 3)`` stack;
    ``thickness`` (default 1) multiplies each element stiffness.
    """
    m = mesh.n_elements
    C = np.asarray(C_per_element, dtype=float)
    if C.ndim == 2:
        C = np.broadcast_to(C, (m, 3, 3))
    if C.shape != (m, 3, 3):
        raise ValueError("need one 3x3 stiffness per element")
    t = np.ones(m) if thickness is None else np.broadcast_to(np.asarray(thickness, dtype=float), (m,))
    rows, cols, vals = elastic_triplets(mesh.nodes, mesh.triangles, np.ascontiguousarray(C), np.ascontiguousarray(t))
    n = 2 * mesh.n_nodes
    K = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    f = traction_loads(mesh, bc)
    fixed_map = {}
    for node, comp, value in bc.dirichlet:
        fixed_map[2 * int(node) + int(comp)] = float(value)
    fixed = np.array(sorted(fixed_map), dtype=np.int64)
    values = np.array([fixed_map[d] for d in fixed], dtype=float)
    free = np.setdiff1d(np.arange(n), fixed)
    if fixed.size == 0:
        raise SingularAfterBc("no Dirichlet constraints: rigid-body modes remain")
    return ElasticSystem(K, f, free, fixed, values)


# Solve -------------------------------------------------------------------

RESIDUAL_TOL = 1e-10


class SpdFactor:
    """Factorization of a symmetric positive-definite matrix, reusable across right-hand sides.

    Sparse input is Jacobi-scaled and factored by SuperLU with diagonal
    pivots only, so the pivots are those of a Cholesky factorization and
    their signs certify positive definiteness.
    """

    def __init__(self, A):
        self.A = A
        self.sparse = sp.issparse(A)
        if self.sparse:
            A = A.tocsc()
            diag = A.diagonal()
            if np.any(~(diag > 0)):
                raise NotPositiveDefinite("matrix has a non-positive diagonal entry")
            self._d = 1.0 / np.sqrt(diag)
            D = sp.diags(self._d)
            try:
                lu = spla.splu((D @ A @ D).tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                               options={"SymmetricMode": True})
            except RuntimeError as exc:
                raise NotPositiveDefinite(str(exc)) from exc
            if not np.array_equal(lu.perm_r, lu.perm_c) or np.any(lu.U.diagonal() <= 0):
                raise NotPositiveDefinite("matrix is not symmetric positive definite")
            self._lu = lu
        else:
            try:
                self._cho = sla.cho_factor(np.asarray(A, dtype=float))
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefinite(str(exc)) from exc

    def _raw(self, b):
        if not self.sparse:
            return sla.cho_solve(self._cho, b)
        d = self._d if b.ndim == 1 else self._d[:, None]
        return d * self._lu.solve(d * b)

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = self._raw(b)
        bnorm = np.linalg.norm(b, axis=0)
        for _ in range(3):
            r = b - self.A @ x
            rel = np.linalg.norm(r, axis=0) / np.where(bnorm > 0, bnorm, 1.0)
            if np.all(rel <= RESIDUAL_TOL):
                return x
            x = x + self._raw(r)
        r = b - self.A @ x
        rel = np.max(np.linalg.norm(r, axis=0) / np.where(bnorm > 0, bnorm, 1.0))
        if rel > RESIDUAL_TOL:
            raise NoConvergence(f"relative residual {rel:.3e} exceeds {RESIDUAL_TOL:.0e}")
        return x


def solve_spd(A, b) -> np.ndarray:
    """Solve ``A x = b`` for SPD ``A`` (dense or sparse) to relative residual 1e-10."""
    return SpdFactor(A).solve(b)


def solve_elastic(system: ElasticSystem) -> np.ndarray:
    K_ff, rhs = system.reduced
    try:
        u_free = solve_spd(K_ff, rhs)
    except NotPositiveDefinite as exc:
        raise SingularAfterBc(f"stiffness not positive definite after boundary conditions: {exc}") from exc
    return system.expand(u_free)


# Derived fields ----------------------------------------------------------

@dataclass
class FemSolution:
    primary_field: np.ndarray
    element_strain: np.ndarray | None = None  # (m, 2, 2)
    element_stress: np.ndarray | None = None  # (m, 2, 2)
    compliance: float = 0.0
    current_density: np.ndarray | None = None  # (m, 2)

    @property
    def stress_voigt(self) -> np.ndarray:
        s = self.element_stress
        return np.column_stack([s[:, 0, 0], s[:, 1, 1], s[:, 0, 1]])


def _voigt_to_tensor(v):
    t = np.empty((len(v), 2, 2))
    t[:, 0, 0] = v[:, 0]
    t[:, 1, 1] = v[:, 1]
    t[:, 0, 1] = t[:, 1, 0] = v[:, 2]
    return t


def element_fields(mesh: Mesh, solution: np.ndarray, material, thickness=None) -> FemSolution:
    """Strain, stress and compliance ``sum_e t_e A_e sigma_e : eps_e`` from nodal displacements."""
    m = mesh.n_elements
    C = np.asarray(material, dtype=float)
    if C.ndim == 2:
        C = np.broadcast_to(C, (m, 3, 3))
    t = np.ones(m) if thickness is None else np.broadcast_to(np.asarray(thickness, dtype=float), (m,))
    B, area = _strain_matrices_numpy(mesh.nodes, mesh.triangles)
    ue = solution[_elastic_dofs(mesh.triangles)]
    eps_v = np.einsum("eij,ej->ei", B, ue)
    sig_v = np.einsum("eij,ej->ei", C, eps_v)
    eps_t = _voigt_to_tensor(np.column_stack([eps_v[:, 0], eps_v[:, 1], 0.5 * eps_v[:, 2]]))
    sig_t = _voigt_to_tensor(sig_v)
    compliance = float(np.sum(area * t * np.einsum("eij,eij->e", sig_t, eps_t)))
    return FemSolution(np.asarray(solution, dtype=float), eps_t, sig_t, compliance)


def conduction_fields(mesh: Mesh, potential: np.ndarray, sigma) -> FemSolution:
    """Current density ``j = -sigma grad V`` per element."""
    b, c = shape_gradients(mesh)
    v = potential[mesh.triangles]
    grad = np.column_stack([np.sum(b * v, axis=1), np.sum(c * v, axis=1)])
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (mesh.n_elements,))
    return FemSolution(np.asarray(potential, dtype=float), current_density=-sigma[:, None] * grad)


def deviatoric_norm(stress_voigt: np.ndarray) -> np.ndarray:
    """Frobenius norm of the 3D deviator of plane stress (``s33 = 0``)."""
    s = np.atleast_2d(stress_voigt)
    mean = (s[:, 0] + s[:, 1]) / 3.0
    d11, d22, d33 = s[:, 0] - mean, s[:, 1] - mean, -mean
    return np.sqrt(d11 ** 2 + d22 ** 2 + d33 ** 2 + 2.0 * s[:, 2] ** 2)


def principal_angle(stress_voigt: np.ndarray) -> np.ndarray:
    """Angle in ``(-pi/2, pi/2]`` of the major principal stress direction."""
    s = np.atleast_2d(stress_voigt)
    return 0.5 * np.arctan2(2.0 * s[:, 2], s[:, 0] - s[:, 1])
