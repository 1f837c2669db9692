"""Explicit H(div) flux reconstructions from the discrete solution.

``y*`` (vector) takes on each edge the constant trace obtained by averaging
``gamma_h . nu_E`` at the edge midpoint over the neighbouring triangles.
``x*`` (tensor) takes on each edge the linear interpolant of the tractions
``{{C eps(phi_h)}}(x) nu_E`` at the two endpoints, where ``{{.}}(x)`` is the
arithmetic mean over the triangles sharing vertex ``x``; each tensor row is
reconstructed as its own BDM1 field, so symmetry is not enforced.

Neither construction solves local problems, so ``div y* = -Pi_h g`` and
``div x* = -gamma_h`` only hold approximately; :func:`diagnostics` measures
the defects.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .fem import (
    Bdm1TensorField,
    Bdm1VectorField,
    Load,
    ModelParams,
    NedelecField,
    P1VectorField,
    _load_callable,
    integrate,
    physical_points,
)
from .mesh import Mesh
from .quadrature import quadrature_rule

# barycentric midpoints of local edges 0, 1, 2
EDGE_MIDPOINTS = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])


def project_load(mesh: Mesh, load: Load, degree: int = 6, refine: int = 0) -> np.ndarray:
    """Elementwise mean ``(1/|T|) int_T g``, shape (F,)."""
    bary, w = quadrature_rule(degree, refine)
    pts = physical_points(mesh, bary)
    g = np.asarray(_load_callable(load)(pts[..., 0], pts[..., 1]), dtype=float)
    return integrate(mesh, g, w) / mesh.areas


def _edge_average(mesh: Mesh, local: np.ndarray) -> np.ndarray:
    """Average per-(triangle, local edge) values onto global edges."""
    te = mesh.tri_edges.ravel()
    flat = local.reshape(te.size, -1)
    counts = np.bincount(te, minlength=mesh.n_edges).astype(float)
    out = np.stack(
        [np.bincount(te, weights=flat[:, j], minlength=mesh.n_edges) for j in range(flat.shape[1])],
        axis=1,
    )
    return out / counts[:, None]


def build_y_star(mesh: Mesh, gamma_h: NedelecField) -> Bdm1VectorField:
    """BDM1 field with edge trace ``{{gamma_h . nu_E}}`` at the edge midpoint."""
    if gamma_h.mesh is not mesh:
        raise ValueError("gamma_h lives on a different mesh")
    mids = gamma_h.at(EDGE_MIDPOINTS)  # (F, 3, 2), point k on local edge k
    normal = np.einsum("fkd,fkd->fk", mids, mesh.normals[mesh.tri_edges])
    g_e = _edge_average(mesh, normal)[:, 0]
    return Bdm1VectorField(mesh, np.stack([g_e, g_e], axis=1))


def nodal_stress_average(params: ModelParams, phi_h: P1VectorField) -> np.ndarray:
    """Mean of the piecewise-constant ``C eps(phi_h)`` over the triangles at each vertex, (V, 2, 2)."""
    mesh = phi_h.mesh
    sig = params.stress(phi_h.strains())
    tri = mesh.triangles.ravel()
    counts = np.bincount(tri, minlength=mesh.n_vertices).astype(float)
    flat = np.repeat(sig.reshape(-1, 4), 3, axis=0)
    acc = np.stack([np.bincount(tri, weights=flat[:, j], minlength=mesh.n_vertices) for j in range(4)], axis=1)
    return (acc / counts[:, None]).reshape(-1, 2, 2)


def build_x_star(mesh: Mesh, phi_h: P1VectorField, params: ModelParams) -> Bdm1TensorField:
    """Row-wise BDM1 tensor with linear tractions interpolated from averaged nodal stresses."""
    if phi_h.mesh is not mesh:
        raise ValueError("phi_h lives on a different mesh")
    avg = nodal_stress_average(params, phi_h)
    nu = mesh.normals
    # traction (row i) . nu_E at each endpoint: (E, endpoint, row)
    trac = np.einsum("epij,ej->epi", avg[mesh.edges], nu)
    rows = tuple(Bdm1VectorField(mesh, trac[:, :, i]) for i in range(2))
    return Bdm1TensorField(rows)


@dataclass(frozen=True)
class FluxDiagnostics:
    """Conformity and equilibrium audit of a reconstructed flux."""

    max_jump: float
    divergence_defect: np.ndarray  # (F,) L2 norm per triangle
    symmetry_defect: Optional[float] = None

    @property
    def total_divergence_defect(self) -> float:
        return float(np.sqrt(np.sum(self.divergence_defect**2)))


def _normal_jump(field: Bdm1VectorField) -> float:
    """Largest normal-trace mismatch across interior edges at edge endpoints."""
    mesh = field.mesh
    F = mesh.n_triangles
    te = mesh.tri_edges
    nu = mesh.normals[te]
    start = mesh.edges[te, 0]
    vals = np.empty((F, 3, 2))  # trace at (global start, global end) of local edge k
    for k in range(3):
        a, b = (k + 1) % 3, (k + 2) % 3
        ta = np.einsum("fd,fd->f", field.nodal[:, a], nu[:, k])
        tb = np.einsum("fd,fd->f", field.nodal[:, b], nu[:, k])
        fwd = start[:, k] == mesh.triangles[:, a]
        vals[:, k, 0] = np.where(fwd, ta, tb)
        vals[:, k, 1] = np.where(fwd, tb, ta)
    side = np.where(mesh.tri_edge_signs > 0, 0, 1)
    per_edge = np.full((mesh.n_edges, 2, 2), np.nan)
    per_edge[te.ravel(), side.ravel()] = vals.reshape(-1, 2)
    interior = ~mesh.boundary_edges
    if not np.any(interior):
        return 0.0
    return float(np.max(np.abs(per_edge[interior, 0] - per_edge[interior, 1])))


def diagnostics(
    field: Union[Bdm1VectorField, Bdm1TensorField],
    source: Union[None, np.ndarray, NedelecField] = None,
) -> FluxDiagnostics:
    """Audit a flux against the equilibrium it is meant to satisfy.

    For a vector field pass ``source = Pi_h g`` (elementwise constants) and the
    defect is ``||div y* + Pi_h g||_T``. For a tensor field pass ``gamma_h`` and
    the defect is ``||div x* + gamma_h||_T``. All integrands are polynomials of
    degree at most two and are integrated exactly.
    """
    mesh = field.mesh
    bary, w = quadrature_rule(2)
    if isinstance(field, Bdm1VectorField):
        div = field.divergence()
        if source is not None:
            div = div + np.asarray(source, dtype=float)
        defect = np.abs(div) * np.sqrt(mesh.areas)
        return FluxDiagnostics(_normal_jump(field), defect)

    div = field.divergence()  # (F, 2)
    vals = np.broadcast_to(div[:, None, :], (mesh.n_triangles, bary.shape[0], 2))
    if source is not None:
        vals = vals + source.at(bary)
    defect = np.sqrt(integrate(mesh, (vals**2).sum(-1), w))
    x = field.at(bary)
    skew = x[..., 0, 1] - x[..., 1, 0]
    sym = float(np.sqrt(integrate(mesh, skew**2, w).sum()))
    jump = max(_normal_jump(r) for r in field.rows)
    return FluxDiagnostics(jump, defect, sym)


def boundary_flux(field: Bdm1VectorField) -> np.ndarray:
    """``(1/|T|) * oint_{dT} p . n_T`` per triangle from the stored edge traces."""
    mesh = field.mesh
    te = mesh.tri_edges
    mean_trace = field.traces[te].mean(axis=-1)
    flux = (mesh.tri_edge_signs * mesh.edge_lengths[te] * mean_trace).sum(axis=1)
    return flux / mesh.areas
