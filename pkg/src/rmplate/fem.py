"""Finite element spaces and the discrete Reissner-Mindlin problem.

Deflection and rotations are continuous P1 with homogeneous Dirichlet
conditions. The shear term uses the reduction operator ``R_h``, i.e. the
interpolant onto lowest-order Nedelec (Whitney) edge elements whose degree of
freedom on edge ``E`` is the tangential moment ``int_E v . tau_E``.

Global unknown layout: ``[w_0 .. w_{V-1}, phi_0x, phi_0y, phi_1x, ...]``.
Dirichlet unknowns are removed by row/column deletion.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Tuple, Union

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .mesh import Mesh
from .quadrature import quadrature_rule

C_F_UNIT_SQUARE = 1.0 / (math.sqrt(2.0) * math.pi)

Load = Union[float, Callable[[np.ndarray, np.ndarray], np.ndarray]]


class SolverError(RuntimeError):
    """Raised when the linear solve fails or misses its residual target."""


@dataclass(frozen=True)
class ModelParams:
    """Thickness and material coefficients of the plate.

    ``lam`` scales the shear energy, ``mu`` and ``lam_tilde`` are the Lame
    coefficients of the bending tensor ``C eps = 2 mu eps + lam_tilde tr(eps) I``.
    """

    t: float
    lam: float = 1.0
    mu: float = 1.0
    lam_tilde: float = 1.0

    def __post_init__(self):
        for name in ("t", "lam", "mu"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")
        if not (np.isfinite(self.lam_tilde) and self.lam_tilde >= 0):
            raise ValueError(f"lam_tilde must be non-negative, got {self.lam_tilde!r}")

    @property
    def shear_factor(self) -> float:
        """``lam / t**2``."""
        return self.lam / self.t**2

    def thickness_bound(self, c_f: float = C_F_UNIT_SQUARE) -> float:
        return math.sqrt(3.0 * self.lam * c_f**2 / self.mu)

    def thickness_warning(self, c_f: float = C_F_UNIT_SQUARE) -> bool:
        """True when ``t`` exceeds the bound under which the estimator constants hold."""
        return self.t > self.thickness_bound(c_f)

    def stress(self, strain: np.ndarray) -> np.ndarray:
        """Apply ``C`` to symmetric 2x2 tensors stored in the last two axes."""
        tr = strain[..., 0, 0] + strain[..., 1, 1]
        return 2.0 * self.mu * strain + self.lam_tilde * tr[..., None, None] * np.eye(2)


# ---------------------------------------------------------------------------
# evaluation helpers


def physical_points(mesh: Mesh, bary: np.ndarray) -> np.ndarray:
    """Map barycentric points to every triangle, shape (F, k, 2)."""
    return np.einsum("kj,fjd->fkd", bary, mesh.vertices[mesh.triangles])


def integrate(mesh: Mesh, values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Elementwise integrals of quadrature-point values of shape (F, k, ...)."""
    scale = (2.0 * mesh.areas).reshape((-1,) + (1,) * (values.ndim - 2))
    return np.einsum("k,fk...->f...", weights, values) * scale


def _whitney(mesh: Mesh, bary: np.ndarray) -> np.ndarray:
    """Globally oriented Whitney functions at barycentric points, (F, k, 3, 2)."""
    G = mesh.barycentric_gradients
    s = mesh.tri_edge_signs
    out = np.empty((mesh.n_triangles, bary.shape[0], 3, 2))
    for k in range(3):
        a, b = (k + 1) % 3, (k + 2) % 3
        out[:, :, k, :] = s[:, None, k, None] * (
            bary[None, :, a, None] * G[:, None, b, :] - bary[None, :, b, None] * G[:, None, a, :]
        )
    return out


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class P1ScalarField:
    """Continuous piecewise-linear scalar with one value per vertex."""

    mesh: Mesh
    values: np.ndarray
    constrained: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_vertices,):
            raise ValueError(f"expected {self.mesh.n_vertices} nodal values, got shape {v.shape}")
        if self.constrained and np.any(v[self.mesh.boundary_vertices] != 0.0):
            raise ValueError("constrained P1 field must vanish on the boundary")
        object.__setattr__(self, "values", v)

    def gradients(self) -> np.ndarray:
        """Elementwise constant gradient, (F, 2)."""
        return np.einsum("fa,fad->fd", self.values[self.mesh.triangles], self.mesh.barycentric_gradients)

    def at(self, bary: np.ndarray) -> np.ndarray:
        return self.values[self.mesh.triangles] @ bary.T


@dataclass(frozen=True, eq=False)
class P1VectorField:
    """Continuous piecewise-linear 2-vector field, values of shape (V, 2)."""

    mesh: Mesh
    values: np.ndarray
    constrained: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_vertices, 2):
            raise ValueError(f"expected nodal values of shape ({self.mesh.n_vertices}, 2), got {v.shape}")
        if self.constrained and np.any(v[self.mesh.boundary_vertices] != 0.0):
            raise ValueError("constrained P1 field must vanish on the boundary")
        object.__setattr__(self, "values", v)

    def gradients(self) -> np.ndarray:
        """Elementwise Jacobian ``[i, j] = d phi_i / d x_j``, (F, 2, 2)."""
        return np.einsum("fai,faj->fij", self.values[self.mesh.triangles], self.mesh.barycentric_gradients)

    def strains(self) -> np.ndarray:
        g = self.gradients()
        return 0.5 * (g + np.swapaxes(g, 1, 2))

    def rot(self) -> np.ndarray:
        g = self.gradients()
        return g[:, 1, 0] - g[:, 0, 1]

    def at(self, bary: np.ndarray) -> np.ndarray:
        return np.einsum("kj,fjd->fkd", bary, self.values[self.mesh.triangles])


@dataclass(frozen=True, eq=False)
class NedelecField:
    """Lowest-order Nedelec field given by its tangential edge moments."""

    mesh: Mesh
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.mesh.n_edges,):
            raise ValueError(f"expected {self.mesh.n_edges} edge moments, got shape {c.shape}")
        object.__setattr__(self, "coeffs", c)

    def at(self, bary: np.ndarray) -> np.ndarray:
        """Values at barycentric points of every triangle, (F, k, 2)."""
        return np.einsum("fe,fked->fkd", self.coeffs[self.mesh.tri_edges], _whitney(self.mesh, bary))

    def rot(self) -> np.ndarray:
        """Elementwise constant rot, (F,)."""
        local = self.coeffs[self.mesh.tri_edges] * self.mesh.tri_edge_signs
        return local.sum(axis=1) / self.mesh.areas

    def __mul__(self, s: float) -> "NedelecField":
        return NedelecField(self.mesh, s * self.coeffs)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class Bdm1VectorField:
    """Elementwise P1 vector field with single-valued linear normal traces.

    ``traces[E]`` holds ``p . nu_E`` at the first and second vertex of edge
    ``E`` (in the stored edge orientation).
    """

    mesh: Mesh
    traces: np.ndarray
    nodal: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        tr = np.asarray(self.traces, dtype=float)
        if tr.shape != (self.mesh.n_edges, 2):
            raise ValueError(f"expected traces of shape ({self.mesh.n_edges}, 2), got {tr.shape}")
        object.__setattr__(self, "traces", tr)
        object.__setattr__(self, "nodal", bdm1_nodal_values(self.mesh, tr))

    def at(self, bary: np.ndarray) -> np.ndarray:
        return np.einsum("kj,fjd->fkd", bary, self.nodal)

    def divergence(self) -> np.ndarray:
        """Elementwise constant divergence, (F,)."""
        return np.einsum("fad,fad->f", self.nodal, self.mesh.barycentric_gradients)


@dataclass(frozen=True, eq=False)
class Bdm1TensorField:
    """2x2 tensor field whose rows are independent BDM1 fields."""

    rows: Tuple[Bdm1VectorField, Bdm1VectorField]

    @property
    def mesh(self) -> Mesh:
        return self.rows[0].mesh

    def at(self, bary: np.ndarray) -> np.ndarray:
        """Values (F, k, 2, 2); ``[..., i, :]`` is row ``i``."""
        return np.stack([r.at(bary) for r in self.rows], axis=-2)

    def divergence(self) -> np.ndarray:
        """Row-wise divergence, (F, 2)."""
        return np.stack([r.divergence() for r in self.rows], axis=-1)


# ---------------------------------------------------------------------------
# BDM1 reconstruction


def _vertex_trace_systems(mesh: Mesh, traces: np.ndarray):
    """Per (triangle, local vertex): the two edge normals and prescribed traces."""
    te = mesh.tri_edges
    nrm = mesh.normals[te]  # (F, 3, 2)
    starts = mesh.edges[te, 0]  # (F, 3)
    tri = mesh.triangles
    A = np.empty((mesh.n_triangles, 3, 2, 2))
    rhs = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        for r, k in enumerate(((i + 1) % 3, (i + 2) % 3)):
            A[:, i, r, :] = nrm[:, k, :]
            at_start = starts[:, k] == tri[:, i]
            rhs[:, i, r] = np.where(at_start, traces[te[:, k], 0], traces[te[:, k], 1])
    return A, rhs


def bdm1_nodal_values(mesh: Mesh, traces: np.ndarray) -> np.ndarray:
    """Vertex values (F, 3, 2) of the BDM1 field with the given edge traces.

    A P1 vector field is fixed by its vertex values, and at each vertex the
    two incident edges prescribe two independent normal components.
    """
    A, rhs = _vertex_trace_systems(mesh, np.asarray(traces, dtype=float))
    det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    if np.any(np.abs(det) < 1e-14):
        raise np.linalg.LinAlgError("singular BDM1 vertex system (degenerate triangle)")
    return np.linalg.solve(A, rhs[..., None])[..., 0]


def bdm1_reconstruct(mesh: Mesh, t: int, edge_traces) -> np.ndarray:
    """Unique ``p`` in P1(T)^2 matching linear normal traces on the three edges of ``t``.

    ``edge_traces[k]`` gives ``p . nu_E`` at the first and second stored vertex
    of local edge ``k``. Returns the vertex values of ``p``, shape (3, 2).
    """
    t = mesh.check_triangle(t)
    edge_traces = np.asarray(edge_traces, dtype=float)
    if edge_traces.shape != (3, 2):
        raise ValueError("edge_traces must have shape (3, 2)")
    nrm = mesh.normals[mesh.tri_edges[t]]
    starts = mesh.edges[mesh.tri_edges[t], 0]
    tri = mesh.triangles[t]
    nodal = np.empty((3, 2))
    for i in range(3):
        rows, rhs = [], []
        for k in ((i + 1) % 3, (i + 2) % 3):
            rows.append(nrm[k])
            rhs.append(edge_traces[k, 0] if starts[k] == tri[i] else edge_traces[k, 1])
        nodal[i] = np.linalg.solve(np.array(rows), np.array(rhs))
    return nodal


# ---------------------------------------------------------------------------
# operators and matrices


def gradient_matrix(mesh: Mesh) -> sps.csr_matrix:
    """Edge moments of ``grad v`` for P1 ``v``: ``v(end) - v(start)``, shape (E, V)."""
    E = mesh.n_edges
    rows = np.repeat(np.arange(E), 2)
    cols = mesh.edges.ravel()
    vals = np.tile([-1.0, 1.0], E)
    return sps.csr_matrix((vals, (rows, cols)), shape=(E, mesh.n_vertices))


def reduction_matrix(mesh: Mesh) -> sps.csr_matrix:
    """Matrix of ``R_h`` from interleaved P1 vector values to edge moments, (E, 2V).

    The tangential moment of a linear field is exact with the midpoint rule.
    Boundary-edge moments are zero.
    """
    E = mesh.n_edges
    w = 0.5 * mesh.edge_lengths * (~mesh.boundary_edges)
    rows = np.repeat(np.arange(E), 4)
    cols = np.stack(
        [2 * mesh.edges[:, 0], 2 * mesh.edges[:, 0] + 1, 2 * mesh.edges[:, 1], 2 * mesh.edges[:, 1] + 1],
        axis=1,
    ).ravel()
    vals = (w[:, None, None] * mesh.tangents[:, None, :]).repeat(2, axis=1).reshape(E, 4).ravel()
    m = sps.csr_matrix((vals, (rows, cols)), shape=(E, 2 * mesh.n_vertices))
    m.eliminate_zeros()
    return m


def reduction_operator(phi: P1VectorField) -> NedelecField:
    """Nedelec interpolant ``R_h phi``."""
    return NedelecField(phi.mesh, reduction_matrix(phi.mesh) @ phi.values.ravel())


def _scatter(mesh: Mesh, local: np.ndarray, dofs: np.ndarray, size: int) -> sps.csr_matrix:
    r = np.broadcast_to(dofs[:, :, None], local.shape).ravel()
    c = np.broadcast_to(dofs[:, None, :], local.shape).ravel()
    return sps.csr_matrix((local.ravel(), (r, c)), shape=(size, size))


def nedelec_mass_matrix(mesh: Mesh) -> sps.csr_matrix:
    """L2 Gram matrix of the Whitney basis, (E, E)."""
    bary, w = quadrature_rule(2)
    W = _whitney(mesh, bary)
    local = np.einsum("k,fkad,fkbd->fab", w, W, W) * (2.0 * mesh.areas)[:, None, None]
    local = 0.5 * (local + np.swapaxes(local, 1, 2))
    return _scatter(mesh, local, mesh.tri_edges, mesh.n_edges)


def p1_stiffness_matrix(mesh: Mesh) -> sps.csr_matrix:
    """Scalar P1 Laplacian ``int grad u . grad v`` on all vertices, (V, V)."""
    G = mesh.barycentric_gradients
    local = np.einsum("fad,fbd->fab", G, G) * mesh.areas[:, None, None]
    return _scatter(mesh, local, mesh.triangles, mesh.n_vertices)


def p1_mass_matrix(mesh: Mesh) -> sps.csr_matrix:
    local = mesh.areas[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter(mesh, local, mesh.triangles, mesh.n_vertices)


def _strain_operator(mesh: Mesh) -> np.ndarray:
    """Voigt strain ``(e11, e22, 2 e12)`` from interleaved local rotations, (F, 3, 6)."""
    G = mesh.barycentric_gradients
    S = np.zeros((mesh.n_triangles, 3, 6))
    S[:, 0, 0::2] = G[:, :, 0]
    S[:, 1, 1::2] = G[:, :, 1]
    S[:, 2, 0::2] = G[:, :, 1]
    S[:, 2, 1::2] = G[:, :, 0]
    return S


def bending_matrix(params: ModelParams, mesh: Mesh) -> sps.csr_matrix:
    """Matrix of ``a(phi, psi) = int C eps(phi) : eps(psi)``, interleaved (2V, 2V)."""
    mu, lt = params.mu, params.lam_tilde
    D = np.array([[2 * mu + lt, lt, 0.0], [lt, 2 * mu + lt, 0.0], [0.0, 0.0, mu]])
    S = _strain_operator(mesh)
    local = np.einsum("fia,ij,fjb->fab", S, D, S) * mesh.areas[:, None, None]
    local = 0.5 * (local + np.swapaxes(local, 1, 2))
    dofs = (2 * mesh.triangles[:, :, None] + np.arange(2)).reshape(-1, 6)
    return _scatter(mesh, local, dofs, 2 * mesh.n_vertices)


def bending_form(params: ModelParams, phi: P1VectorField, psi: P1VectorField) -> float:
    sig = params.stress(phi.strains())
    return float(np.einsum("fij,fij,f->", sig, psi.strains(), phi.mesh.areas))


def _load_callable(load: Load) -> Callable:
    if callable(load):
        return load
    c = float(load)
    return lambda x, y: np.full(np.shape(x), c)


def load_vector(mesh: Mesh, load: Load, degree: int = 6, refine: int = 0) -> np.ndarray:
    """``(g, theta_i)`` for every P1 hat function, (V,)."""
    bary, w = quadrature_rule(degree, refine)
    pts = physical_points(mesh, bary)
    g = np.asarray(_load_callable(load)(pts[..., 0], pts[..., 1]), dtype=float)
    local = np.einsum("k,fk,ka->fa", w, g, bary) * (2.0 * mesh.areas)[:, None]
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


# ---------------------------------------------------------------------------
# discrete problem


@dataclass(frozen=True, eq=False)
class SparseSystem:
    """Reduced system over the free (interior) unknowns."""

    mesh: Mesh
    params: ModelParams
    matrix: sps.csr_matrix
    rhs: np.ndarray
    free: np.ndarray  # indices into the full [w, phi] vector
    quad_degree: int = 6
    quad_refine: int = 0

    @property
    def n_full(self) -> int:
        return 3 * self.mesh.n_vertices

    @property
    def n_dofs(self) -> int:
        return self.free.size


def free_dofs(mesh: Mesh) -> np.ndarray:
    inner = mesh.interior_vertices
    V = mesh.n_vertices
    phi = V + (2 * inner[:, None] + np.arange(2)).ravel()
    return np.concatenate([inner, phi])


def assemble(
    params: ModelParams, mesh: Mesh, load: Load, quad_degree: int = 6, quad_refine: int = 0
) -> SparseSystem:
    """Assemble the discrete plate problem with Nedelec-reduced shear.

    The bilinear form is
    ``a(phi, psi) + lam t^-2 (grad w - R_h phi, grad v - R_h psi)``; since the
    gradient of a P1 function is itself a Nedelec field, the shear part is
    ``[G, -R]^T M [G, -R]`` with ``M`` the Nedelec mass matrix.
    """
    quadrature_rule(quad_degree, quad_refine)  # validate early
    V = mesh.n_vertices
    shear = sps.hstack([gradient_matrix(mesh), -reduction_matrix(mesh)]).tocsr()
    M = nedelec_mass_matrix(mesh)
    K = params.shear_factor * (shear.T @ M @ shear)
    K = K + sps.block_diag([sps.csr_matrix((V, V)), bending_matrix(params, mesh)])
    K = K.tocsr()
    K = 0.5 * (K + K.T)
    f = np.zeros(3 * V)
    f[:V] = load_vector(mesh, load, quad_degree, quad_refine)
    free = free_dofs(mesh)
    if free.size == 0:
        raise ValueError("mesh has no interior vertices")
    A = K[free][:, free].tocsr()
    A.sort_indices()
    return SparseSystem(mesh, params, A, f[free], free, quad_degree, quad_refine)


def residual(matrix, x: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """``rhs - A x`` accumulated in extended precision.

    The shear block scales like ``lam / t**2``, so a float64 residual bottoms
    out near the 1e-10 relative level on fine meshes.
    """
    A = sps.csr_matrix(matrix)
    prod = A.data.astype(np.longdouble) * np.asarray(x, dtype=np.longdouble)[A.indices]
    row = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    Ax = np.zeros(A.shape[0], dtype=np.longdouble)
    np.add.at(Ax, row, prod)
    return np.asarray(rhs, dtype=np.longdouble) - Ax


def solve_linear(matrix, rhs: np.ndarray, rtol: float = 1e-10, refine: int = 3) -> np.ndarray:
    """Sparse LU solve with iterative refinement and a relative residual check."""
    rhs = np.asarray(rhs, dtype=float)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(rhs)
    A = sps.csc_matrix(matrix)
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    x = lu.solve(rhs)
    for step in range(refine + 1):
        r = residual(A, x, rhs).astype(float)
        res = np.linalg.norm(r) / bnorm
        if not np.isfinite(res):
            break
        if res <= rtol:
            return x
        if step < refine:
            x = x + lu.solve(r)
    raise SolverError(f"relative residual {res:.3e} exceeds {rtol:.1e}")


def solve(system: SparseSystem) -> Tuple[P1ScalarField, P1VectorField]:
    """Solve the reduced system and return ``(w_h, phi_h)``."""
    x = solve_linear(system.matrix, system.rhs)
    full = np.zeros(system.n_full)
    full[system.free] = x
    V = system.mesh.n_vertices
    return (
        P1ScalarField(system.mesh, full[:V]),
        P1VectorField(system.mesh, full[V:].reshape(V, 2)),
    )


def shear_recovery(params: ModelParams, w_h: P1ScalarField, phi_h: P1VectorField) -> NedelecField:
    """``gamma_h = lam t^-2 (grad w_h - R_h phi_h)`` as a Nedelec field."""
    mesh = w_h.mesh
    if phi_h.mesh is not mesh:
        raise ValueError("w_h and phi_h live on different meshes")
    s = gradient_matrix(mesh) @ w_h.values - reduction_matrix(mesh) @ phi_h.values.ravel()
    return NedelecField(mesh, params.shear_factor * s)


def spd_check(matrix) -> bool:
    """Dense Cholesky attempt; intended for small systems only."""
    A = matrix.toarray() if sps.issparse(matrix) else np.asarray(matrix)
    if A.shape[0] > 6000:
        warnings.warn("dense SPD check on a large matrix", RuntimeWarning, stacklevel=2)
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return False
    return True
