"""Guaranteed-constant error estimator, discrete error and effectivity index."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .fem import (
    C_F_UNIT_SQUARE,
    Bdm1TensorField,
    Bdm1VectorField,
    Load,
    ModelParams,
    NedelecField,
    P1ScalarField,
    P1VectorField,
    _load_callable,
    integrate,
    p1_stiffness_matrix,
    physical_points,
    reduction_operator,
    solve_linear,
)
from .mesh import Mesh
from .quadrature import quadrature_rule

SQRT3 = math.sqrt(3.0)
EPS_OPT = 2.0 - SQRT3  # minimiser of the Young-inequality parameter
A4_BRANCH = 7.0 + 4.0 * SQRT3

DEFAULT_C_R = 2.0 * math.sqrt(1.0 / (2.0 - math.sqrt(2.0)))
DEFAULT_KAPPA2 = 1.0 + 12.0 / (math.sqrt(2.0) * math.pi)
DEFAULT_N = 8


def young_coefficient(eps: float) -> float:
    """``(2/eps - 1) / (1 - 2 eps)``; equals ``7 + 4 sqrt(3)`` at ``eps = 2 - sqrt(3)``."""
    return (2.0 / eps - 1.0) / (1.0 - 2.0 * eps)


@dataclass(frozen=True)
class ConstantsLedger:
    zeta: float
    c_f: float
    c_r: float
    big_n: float
    kappa2: float
    B: float
    K1: float
    K2: float
    K3: float
    thickness_bound: float
    thickness_warning: bool

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def constants(
    params: ModelParams,
    c_f: Optional[float] = None,
    c_r: Optional[float] = None,
    big_n: Optional[float] = None,
    kappa2: Optional[float] = None,
) -> ConstantsLedger:
    """Assemble the explicit estimator constants, defaulting to the unit-square / criss-cross values."""
    vals = {
        "c_f": C_F_UNIT_SQUARE if c_f is None else c_f,
        "c_r": DEFAULT_C_R if c_r is None else c_r,
        "big_n": DEFAULT_N if big_n is None else big_n,
        "kappa2": DEFAULT_KAPPA2 if kappa2 is None else kappa2,
    }
    for k, v in vals.items():
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"constant {k} must be positive, got {v!r}")
    mu, lam, lt = params.mu, params.lam, params.lam_tilde
    cf, cr, N, k2 = vals["c_f"], vals["c_r"], vals["big_n"], vals["kappa2"]
    zeta = max(1.0 / mu, 1.0 / (2.0 * lam))
    B = 3.0 / mu + (cf**2 / mu) * (3.0 + 2.0 * SQRT3) + 4.0 * (mu + lt)
    K1 = 4.0 * zeta * N * k2**2 * B
    K2 = 4.0 * (zeta * B + 1.0) * (mu + lt)
    K3 = max(A4_BRANCH, 2.0 + 2.0 * B * (mu + lt) * cr**2)
    bound = params.thickness_bound(cf)
    return ConstantsLedger(zeta, cf, cr, N, k2, B, K1, K2, K3, bound, params.t > bound)


@dataclass
class EstimatorReport:
    """Estimator terms; ``indicators`` has one column per term, per triangle."""

    term1: float
    term2: float
    term3: float
    eta: float
    indicators: np.ndarray = field(repr=False)  # (F, 3) unweighted
    local_eta2: np.ndarray = field(repr=False)  # (F,) weighted
    constants: ConstantsLedger
    skew_norm2: float = 0.0
    oscillation: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "term1": self.term1,
            "term2": self.term2,
            "term3": self.term3,
            "eta": self.eta,
            "skew_norm2": self.skew_norm2,
            "oscillation": self.oscillation,
            "constants": self.constants.to_dict(),
        }


def _same_mesh(mesh: Mesh, *fields) -> None:
    for f in fields:
        if f.mesh is not mesh:
            raise ValueError(f"{type(f).__name__} is defined on a different mesh")


def compliance_norm2(params: ModelParams, sigma: np.ndarray) -> np.ndarray:
    """Pointwise ``|C^{-1/2} sigma|^2`` for symmetric 2x2 ``sigma`` in the last axes.

    ``C`` has eigenvalue ``2 mu`` on deviators and ``2 mu + 2 lam_tilde`` on the identity.
    """
    tr = sigma[..., 0, 0] + sigma[..., 1, 1]
    dev = sigma - 0.5 * tr[..., None, None] * np.eye(2)
    return (dev**2).sum((-1, -2)) / (2.0 * params.mu) + tr**2 / (2.0 * (2.0 * params.mu + 2.0 * params.lam_tilde))


def oscillation(mesh: Mesh, params: ModelParams, load: Load, degree: int = 6, refine: int = 0) -> float:
    """``sum_T h_T^2 (t^2 + h_T^2) ||g - Pi_h g||_T^2`` (diagnostic, not part of eta)."""
    bary, w = quadrature_rule(degree, refine)
    pts = physical_points(mesh, bary)
    g = np.asarray(_load_callable(load)(pts[..., 0], pts[..., 1]), dtype=float)
    mean = integrate(mesh, g, w) / mesh.areas
    dev2 = integrate(mesh, (g - mean[:, None]) ** 2, w)
    h2 = mesh.diameters**2
    return float(np.sum(h2 * (params.t**2 + h2) * dev2))


def estimator(
    params: ModelParams,
    ledger: ConstantsLedger,
    mesh: Mesh,
    w_h: P1ScalarField,
    phi_h: P1VectorField,
    gamma_h: NedelecField,
    y_star: Bdm1VectorField,
    x_star: Bdm1TensorField,
    load: Optional[Load] = None,
    quad_degree: int = 6,
    quad_refine: int = 0,
) -> EstimatorReport:
    """Evaluate ``eta_h^2 = K1 * term1 + K2 * term2 + K3 * term3``.

    term1 = sum_T (t^2 + h_T^2) ||gamma_h - y*||_T^2
    term2 = ||C^{-1/2}(sym x* - C eps(phi_h))||^2
    term3 = ||phi_h - R_h phi_h||^2_{H(rot)}

    Every integrand is a polynomial of degree <= 2 per triangle, so the
    degree-2 rule is exact. When ``load`` is given the data oscillation is
    reported alongside (it is not added to eta).
    """
    _same_mesh(mesh, w_h, phi_h, gamma_h, y_star, x_star)
    bary, w = quadrature_rule(2)
    h2 = mesh.diameters**2

    d = gamma_h.at(bary) - y_star.at(bary)
    t1 = (params.t**2 + h2) * integrate(mesh, (d**2).sum(-1), w)

    x = x_star.at(bary)
    sym = 0.5 * (x + np.swapaxes(x, -1, -2))
    sigma = sym - params.stress(phi_h.strains())[:, None]
    t2 = integrate(mesh, compliance_norm2(params, sigma), w)
    skew = 0.5 * (x[..., 0, 1] - x[..., 1, 0])
    skew2 = float(2.0 * integrate(mesh, skew**2, w).sum())

    r_phi = reduction_operator(phi_h)
    diff = phi_h.at(bary) - r_phi.at(bary)
    rot = phi_h.rot() - r_phi.rot()
    t3 = integrate(mesh, (diff**2).sum(-1), w) + mesh.areas * rot**2

    ind = np.stack([t1, t2, t3], axis=1)
    local = ledger.K1 * t1 + ledger.K2 * t2 + ledger.K3 * t3
    term1, term2, term3 = (float(v) for v in ind.sum(axis=0))
    eta2 = ledger.K1 * term1 + ledger.K2 * term2 + ledger.K3 * term3
    osc = None if load is None else oscillation(mesh, params, load, quad_degree, quad_refine)
    return EstimatorReport(term1, term2, term3, math.sqrt(eta2), ind, local, ledger, skew2, osc)


def discrete_dual_norm2(mesh: Mesh, moments: np.ndarray) -> float:
    """``sup_v |l(v)|^2 / |v|_1^2`` over interior P1 (vector) functions.

    ``moments`` holds ``l(theta_i)`` for every vertex hat function, shape (V,)
    or (V, m) for m components. The supremum of the rank-one Rayleigh
    quotient is ``b^T K^{-1} b`` with ``K`` the Dirichlet Laplacian.
    """
    b = np.asarray(moments, dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    inner = mesh.interior_vertices
    K = p1_stiffness_matrix(mesh)[inner][:, inner]
    total = 0.0
    for j in range(b.shape[1]):
        bj = b[inner, j]
        if np.any(bj):
            total += float(bj @ solve_linear(K, bj, rtol=1e-12))
    return total


def interpolate_elementwise(mesh: Mesh, fn: Callable, bary: np.ndarray) -> np.ndarray:
    """Evaluate the per-triangle vertex interpolant of a vector field at barycentric points, (F, k, 2)."""
    p = mesh.vertices[mesh.triangles]
    vals = np.asarray(fn(p[..., 0], p[..., 1]), dtype=float)  # (F, 3, 2)
    return np.einsum("kj,fjd->fkd", bary, vals)


def dual_norm(mesh: Mesh, gamma_h: NedelecField, gamma_exact: Callable) -> float:
    """``||P_h gamma - gamma_h||_{-1,h}^2`` with ``P_h`` the elementwise vertex interpolant."""
    _same_mesh(mesh, gamma_h)
    bary, w = quadrature_rule(2)
    diff = interpolate_elementwise(mesh, gamma_exact, bary) - gamma_h.at(bary)  # (F, k, 2)
    local = np.einsum("k,fkd,ka->fad", w, diff, bary) * (2.0 * mesh.areas)[:, None, None]
    V = mesh.n_vertices
    tri = mesh.triangles.ravel()
    b = np.stack(
        [np.bincount(tri, weights=local[..., d].ravel(), minlength=V) for d in range(2)], axis=1
    )
    return discrete_dual_norm2(mesh, b)


@dataclass
class ErrorReport:
    """Squared contributions to the discrete error; ``e_total`` is the root of their sum."""

    err_w_h1: float
    err_phi_h1: float
    err_shear_l2w: float
    err_rot_w: float
    err_dual: float

    @property
    def e_total(self) -> float:
        return math.sqrt(self.err_w_h1 + self.err_phi_h1 + self.err_shear_l2w + self.err_rot_w + self.err_dual)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["e_total"] = self.e_total
        return d


def error_report(
    params: ModelParams,
    mesh: Mesh,
    w_h: P1ScalarField,
    phi_h: P1VectorField,
    gamma_h: NedelecField,
    exact,
    quad_degree: int = 6,
    quad_refine: int = 0,
) -> ErrorReport:
    """Discrete error against an exact solution exposing ``grad_omega``, ``grad_phi`` and ``gamma``.

    ``rot gamma`` of the exact solution is taken as zero, so the rot term is
    ``lam^-2 t^4 ||rot gamma_h||^2``.
    """
    _same_mesh(mesh, w_h, phi_h, gamma_h)
    bary, w = quadrature_rule(quad_degree, quad_refine)
    pts = physical_points(mesh, bary)
    x, y = pts[..., 0], pts[..., 1]
    ew = exact.grad_omega(x, y) - w_h.gradients()[:, None, :]
    ep = exact.grad_phi(x, y) - phi_h.gradients()[:, None, :, :]
    eg = exact.gamma(x, y) - gamma_h.at(bary)
    lam, t = params.lam, params.t
    return ErrorReport(
        err_w_h1=float(integrate(mesh, (ew**2).sum(-1), w).sum()),
        err_phi_h1=float(integrate(mesh, (ep**2).sum((-1, -2)), w).sum()),
        err_shear_l2w=float(t**2 / lam * integrate(mesh, (eg**2).sum(-1), w).sum()),
        err_rot_w=float(t**4 / lam**2 * np.sum(mesh.areas * gamma_h.rot() ** 2)),
        err_dual=dual_norm(mesh, gamma_h, exact.gamma),
    )


def effectivity(est: EstimatorReport, err: ErrorReport) -> float:
    """``eta / e_total``; ``inf`` when only the error vanishes, ``nan`` when both do."""
    e = err.e_total
    if e == 0.0:
        return math.inf if est.eta > 0 else math.nan
    return est.eta / e
