"""Self-contained invariant suite run by ``rmplate check``.

Every check is deterministic (fixed seeds) and small enough to finish in a
few seconds. Each returns a :class:`CheckResult`; ``passed`` compares the
measured ``value`` against ``tol``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List

import numpy as np
import scipy.linalg as sla

from .equilibration import build_x_star, build_y_star
from .fem import (
    ModelParams,
    NedelecField,
    P1ScalarField,
    P1VectorField,
    assemble,
    bdm1_reconstruct,
    bending_form,
    bending_matrix,
    gradient_matrix,
    integrate,
    load_vector,
    nedelec_mass_matrix,
    p1_stiffness_matrix,
    physical_points,
    reduction_matrix,
    reduction_operator,
    shear_recovery,
    solve,
    spd_check,
)
from .manufactured import ExactSolution
from .mesh import Mesh, build_mesh
from .metrics import (
    EPS_OPT,
    constants,
    discrete_dual_norm2,
    estimator,
    young_coefficient,
)
from .quadrature import quadrature_rule

SEED = 20240611
BENCH = ModelParams(t=1.0 / 1024.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.value:.3e} (tol {self.tol:.1e})"


def rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale


def random_rotation(mesh: Mesh, rng, constrained: bool = True) -> P1VectorField:
    v = rng.standard_normal((mesh.n_vertices, 2))
    if constrained:
        v[mesh.boundary_vertices] = 0.0
    return P1VectorField(mesh, v, constrained=constrained)


def random_deflection(mesh: Mesh, rng) -> P1ScalarField:
    v = rng.standard_normal(mesh.n_vertices)
    v[mesh.boundary_vertices] = 0.0
    return P1ScalarField(mesh, v)


def linear_rotation(mesh: Mesh, A: np.ndarray, b: np.ndarray) -> P1VectorField:
    """Unconstrained P1 interpolant of ``x -> A x + b``."""
    return P1VectorField(mesh, mesh.vertices @ np.asarray(A).T + b, constrained=False)


def constant_nedelec(mesh: Mesh, c) -> NedelecField:
    """Nedelec field equal to the constant vector ``c`` everywhere (boundary moments kept)."""
    return NedelecField(mesh, mesh.edge_lengths * (mesh.tangents @ np.asarray(c, dtype=float)))


# ---------------------------------------------------------------------------
# individual checks


def check_spd() -> CheckResult:
    ex = ExactSolution(BENCH)
    bad = sum(not spd_check(assemble(BENCH, build_mesh(n), ex).matrix) for n in (1, 2, 4))
    return CheckResult("SPD assembly (n=1,2,4)", float(bad), 0.0)


def check_symmetry() -> CheckResult:
    A = assemble(BENCH, build_mesh(2), 1.0).matrix
    return CheckResult("matrix symmetry (n=2)", float(abs(A - A.T).max()), 1e-12 * abs(A).max())


def korn_gap(mesh: Mesh, params: ModelParams, samples: int = 100, seed: int = SEED) -> float:
    """Largest ``(mu |grad phi|^2 - a(phi, phi)) / a(phi, phi)`` over random fields."""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(samples):
        phi = random_rotation(mesh, rng)
        a = bending_form(params, phi, phi)
        grad2 = float(np.einsum("fij,fij,f->", phi.gradients(), phi.gradients(), mesh.areas))
        worst = max(worst, (params.mu * grad2 - a) / a)
    return worst


def check_korn() -> CheckResult:
    return CheckResult("discrete Korn bound", max(korn_gap(build_mesh(4), BENCH), 0.0), 1e-10)


def galerkin_residuals(params: ModelParams, mesh: Mesh, load, quad_degree: int = 6):
    """Scaled residuals of both discrete equations over every interior basis function."""
    w_h, phi_h = solve(assemble(params, mesh, load, quad_degree))
    gamma = shear_recovery(params, w_h, phi_h)
    M = nedelec_mass_matrix(mesh)
    Mg = M @ gamma.coeffs
    inner = mesh.interior_vertices
    f = load_vector(mesh, load, quad_degree)
    r1 = (f - gradient_matrix(mesh).T @ Mg)[inner]
    bend = bending_matrix(params, mesh) @ phi_h.values.ravel()
    r2 = (bend - reduction_matrix(mesh).T @ Mg).reshape(-1, 2)[inner]
    s1 = max(np.abs(f[inner]).max(), 1e-300)
    s2 = max(np.abs(bend.reshape(-1, 2)[inner]).max(), s1)
    return float(np.abs(r1).max() / s1), float(np.abs(r2).max() / s2)


def check_galerkin() -> CheckResult:
    r1, r2 = galerkin_residuals(BENCH, build_mesh(4), ExactSolution(BENCH))
    return CheckResult("Galerkin orthogonality (n=4)", max(r1, r2), 1e-9)


def commuting_defect(mesh: Mesh, samples: int = 20, seed: int = SEED) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        psi = random_rotation(mesh, rng)
        worst = max(worst, rel(reduction_operator(psi).rot(), psi.rot()))
    return worst


def check_commuting() -> CheckResult:
    return CheckResult("Nedelec commuting diagram", commuting_defect(build_mesh(4)), 1e-12)


def bdm1_reproduction_defect(mesh: Mesh, samples: int = 20, seed: int = SEED) -> float:
    """Reconstruct random local P1 vector fields from their own edge traces."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        t = int(rng.integers(mesh.n_triangles))
        q = rng.standard_normal((3, 2))  # vertex values of q on t
        tri = mesh.triangles[t]
        traces = np.empty((3, 2))
        for k, e in enumerate(mesh.tri_edges[t]):
            for p, v in enumerate(mesh.edges[e]):
                traces[k, p] = q[list(tri).index(v)] @ mesh.normals[e]
        worst = max(worst, rel(bdm1_reconstruct(mesh, t, traces), q))
    return worst


def check_bdm1() -> CheckResult:
    return CheckResult("BDM1 self-reproduction", bdm1_reproduction_defect(build_mesh(2)), 1e-12)


def check_constant_fluxes() -> CheckResult:
    mesh = build_mesh(3)
    bary, _ = quadrature_rule(2)
    c = np.array([0.7, -1.3])
    y = build_y_star(mesh, constant_nedelec(mesh, c))
    e1 = rel(y.at(bary), np.broadcast_to(c, (mesh.n_triangles, bary.shape[0], 2)))
    A = np.array([[0.4, -0.9], [1.1, 0.25]])
    x = build_x_star(mesh, linear_rotation(mesh, A, np.array([0.3, 0.1])), BENCH)
    sig = BENCH.stress(0.5 * (A + A.T))
    e2 = rel(x.at(bary), np.broadcast_to(sig, (mesh.n_triangles, bary.shape[0], 2, 2)))
    return CheckResult("constant-field exactness of y*, x*", max(e1, e2), 1e-12)


def check_term2_constant_strain() -> CheckResult:
    mesh = build_mesh(3)
    A = np.array([[0.4, -0.9], [1.1, 0.25]])
    phi = linear_rotation(mesh, A, np.zeros(2))
    w = P1ScalarField(mesh, np.zeros(mesh.n_vertices))
    g = constant_nedelec(mesh, [0.0, 0.0])
    rep = estimator(BENCH, constants(BENCH), mesh, w, phi, g, build_y_star(mesh, g), build_x_star(mesh, phi, BENCH))
    scale = float(np.sum(mesh.areas)) * float(np.sum(BENCH.stress(0.5 * (A + A.T)) ** 2))
    return CheckResult("term2 = 0 for constant strain", rep.term2 / scale, 1e-24)


def check_eps_algebra() -> CheckResult:
    return CheckResult("Young coefficient at eps = 2 - sqrt(3)", abs(young_coefficient(EPS_OPT) - (7 + 4 * math.sqrt(3))), 1e-12)


def check_constants() -> CheckResult:
    led = constants(BENCH)
    expected = [1.0, 1.0 / (math.sqrt(2.0) * math.pi), 8.0, 1.0 + 12.0 / (math.sqrt(2.0) * math.pi), 2.0 * math.sqrt(1.0 / (2.0 - math.sqrt(2.0)))]
    got = [led.zeta, led.c_f, led.big_n, led.kappa2, led.c_r]
    err = max(abs(a - b) / b for a, b in zip(got, expected))
    err = max(err, float(led.thickness_warning))
    return CheckResult("constants ledger defaults and thickness hypothesis", err, 1e-15)


def dense_dual_oracle(mesh: Mesh, b: np.ndarray) -> float:
    """Largest eigenvalue of ``(b b^T) v = theta K v`` per component, summed."""
    inner = mesh.interior_vertices
    K = p1_stiffness_matrix(mesh)[inner][:, inner].toarray()
    b = b.reshape(mesh.n_vertices, -1)
    total = 0.0
    for j in range(b.shape[1]):
        bj = b[inner, j]
        total += float(sla.eigh(np.outer(bj, bj), K, eigvals_only=True)[-1])
    return total


def check_dual_oracle() -> CheckResult:
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for n in (1, 2):
        mesh = build_mesh(n)
        b = rng.standard_normal((mesh.n_vertices, 2))
        worst = max(worst, abs(discrete_dual_norm2(mesh, b) / dense_dual_oracle(mesh, b) - 1.0))
    return CheckResult("dual norm vs dense eigenvalue oracle", worst, 1e-8)


def interior_points(rng, count: int = 100, lo: float = 0.15, hi: float = 0.85):
    p = rng.uniform(lo, hi, size=(count, 2))
    return p[:, 0], p[:, 1]


def gamma_identity_defect(params: ModelParams, seed: int = SEED) -> float:
    ex = ExactSolution(params)
    x, y = interior_points(np.random.default_rng(seed))
    direct = params.shear_factor * (ex.grad_omega(x, y) - ex.phi(x, y))
    closed = ex.gamma(x, y)
    return float(np.max(np.linalg.norm(direct - closed, axis=-1) / np.linalg.norm(closed, axis=-1)))


def rot_gamma_fd(params: ModelParams, step: float = 1e-6, seed: int = SEED) -> float:
    ex = ExactSolution(params)
    x, y = interior_points(np.random.default_rng(seed))
    d2_dx = (ex.gamma(x + step, y)[:, 1] - ex.gamma(x - step, y)[:, 1]) / (2 * step)
    d1_dy = (ex.gamma(x, y + step)[:, 0] - ex.gamma(x, y - step)[:, 0]) / (2 * step)
    return float(np.max(np.abs(d2_dx - d1_dy) / np.linalg.norm(ex.gamma(x, y), axis=-1)))


def weak_consistency(params: ModelParams, n: int = 32, degree: int = 10) -> float:
    """``|int g v - int gamma . grad v| / int |g v|`` for a polynomial bubble ``v``."""
    ex = ExactSolution(params)
    mesh = build_mesh(n)
    bary, w = quadrature_rule(degree)
    p = physical_points(mesh, bary)
    x, y = p[..., 0], p[..., 1]
    bx, by = (x * (1 - x)) ** 2, (y * (1 - y)) ** 2
    v = bx * by * (1 + x + 2 * y)
    dbx, dby = 2 * x * (1 - x) * (1 - 2 * x), 2 * y * (1 - y) * (1 - 2 * y)
    vx = dbx * by * (1 + x + 2 * y) + bx * by
    vy = bx * dby * (1 + x + 2 * y) + 2 * bx * by
    g = ex.load(x, y)
    gam = ex.gamma(x, y)
    lhs = integrate(mesh, g * v, w).sum()
    rhs = integrate(mesh, gam[..., 0] * vx + gam[..., 1] * vy, w).sum()
    return float(abs(lhs - rhs) / integrate(mesh, np.abs(g * v), w).sum())


def check_manufactured() -> List[CheckResult]:
    p = ModelParams(t=0.1)
    return [
        CheckResult("gamma closed form vs lam t^-2 (grad w - phi)", gamma_identity_defect(p), 1e-9),
        CheckResult("rot gamma = 0 (finite differences)", rot_gamma_fd(BENCH), 1e-6),
        CheckResult("weak consistency int g v = int gamma . grad v", weak_consistency(BENCH), 1e-6),
    ]


CHECKS: List[Callable[[], object]] = [
    check_spd,
    check_symmetry,
    check_korn,
    check_galerkin,
    check_commuting,
    check_bdm1,
    check_constant_fluxes,
    check_term2_constant_strain,
    check_eps_algebra,
    check_constants,
    check_dual_oracle,
    check_manufactured,
]


def run_checks() -> List[CheckResult]:
    out: List[CheckResult] = []
    for fn in CHECKS:
        res = fn()
        out.extend(res if isinstance(res, list) else [res])
    return out

