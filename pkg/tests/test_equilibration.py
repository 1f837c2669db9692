import numpy as np
import pytest

from rmplate.checks import constant_nedelec, linear_rotation, random_deflection, random_rotation
from rmplate.equilibration import (
    EDGE_MIDPOINTS,
    boundary_flux,
    build_x_star,
    build_y_star,
    diagnostics,
    nodal_stress_average,
    project_load,
)
from rmplate.fem import P1VectorField, shear_recovery
from rmplate.mesh import build_mesh
from rmplate.quadrature import quadrature_rule
from rmplate.study import StudyConfig, run_solve

BARY, _ = quadrature_rule(2)


def test_project_constant(mesh4):
    np.testing.assert_allclose(project_load(mesh4, 5.0), 5.0, rtol=1e-15)


def test_project_linear_is_centroid_value(mesh4):
    g = lambda x, y: 2.0 * x - 3.0 * y + 1.0  # noqa: E731
    c = mesh4.centroids()
    np.testing.assert_allclose(project_load(mesh4, g), g(c[:, 0], c[:, 1]), rtol=1e-13, atol=1e-14)


def composite_mean(mesh, fn, levels=3):
    """Elementwise mean via the degree-10 rule on 4**levels congruent sub-triangles."""
    from rmplate.fem import physical_points

    bary, w = quadrature_rule(10)
    tris = [np.eye(3)]
    for _ in range(levels):
        nxt = []
        for v in tris:
            m01, m12, m20 = (v[0] + v[1]) / 2, (v[1] + v[2]) / 2, (v[2] + v[0]) / 2
            nxt += [np.array(x) for x in ([v[0], m01, m20], [m01, v[1], m12], [m20, m12, v[2]], [m01, m12, m20])]
        tris = nxt
    pts = np.concatenate([bary @ v for v in tris])
    wts = np.concatenate([w / len(tris)] * len(tris))
    p = physical_points(mesh, pts)
    return 2.0 * (fn(p[..., 0], p[..., 1]) * wts).sum(axis=1)


def test_project_benchmark_against_composite_oracle(mesh4, exact):
    ref = composite_mean(mesh4, exact, levels=4)
    got = project_load(mesh4, exact, degree=10, refine=3)
    assert np.max(np.abs(got - ref)) <= 1e-8 * np.abs(ref).max()


def test_project_benchmark_default_rule_accuracy(mesh4, exact):
    # the single degree-6 rule resolves the steep load only to about 2% on the coarsest level
    ref = composite_mean(mesh4, exact, levels=4)
    err = np.max(np.abs(project_load(mesh4, exact) - ref)) / np.abs(ref).max()
    assert 1e-3 < err < 5e-2
    fine = build_mesh(16)
    err16 = np.max(np.abs(project_load(fine, exact) - composite_mean(fine, exact))) / np.abs(composite_mean(fine, exact)).max()
    assert err16 < 1e-5


# y*


def test_y_star_reproduces_constant(mesh4):
    c = np.array([0.7, -1.3])
    y = build_y_star(mesh4, constant_nedelec(mesh4, c))
    np.testing.assert_allclose(y.at(BARY), np.broadcast_to(c, (mesh4.n_triangles, len(BARY), 2)), atol=1e-13)
    d = diagnostics(y, np.zeros(mesh4.n_triangles))
    assert d.max_jump <= 1e-12 and d.total_divergence_defect <= 1e-12


def test_y_star_translation_equivariance(mesh4, rng):
    from rmplate.fem import NedelecField

    g = NedelecField(mesh4, rng.standard_normal(mesh4.n_edges))
    c = np.array([2.0, -0.5])
    shifted = NedelecField(mesh4, g.coeffs + constant_nedelec(mesh4, c).coeffs)
    diff = build_y_star(mesh4, shifted).at(BARY) - build_y_star(mesh4, g).at(BARY)
    np.testing.assert_allclose(diff, np.broadcast_to(c, diff.shape), atol=1e-12)


def test_y_star_traces_are_midpoint_averages(mesh2, bench, rng):
    g = shear_recovery(bench, random_deflection(mesh2, rng), random_rotation(mesh2, rng))
    y = build_y_star(mesh2, g)
    mids = g.at(EDGE_MIDPOINTS)
    for e in range(mesh2.n_edges):
        vals = []
        for t in mesh2.edge_tris[e]:
            if t < 0:
                continue
            k = list(mesh2.tri_edges[t]).index(e)
            vals.append(mids[t, k] @ mesh2.normals[e])
        assert np.allclose(y.traces[e], np.mean(vals), rtol=1e-13, atol=1e-9)


def test_y_star_on_linear_field_converges():
    """For the Nedelec interpolant of a linear field, y* approaches the field at first order."""
    from rmplate.fem import NedelecField, integrate

    q = np.array([[2.0, 1.0], [1.0, -4.0]])
    errs = []
    for n in (4, 8, 16):
        m = build_mesh(n)
        mid = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
        g = NedelecField(m, m.edge_lengths * np.einsum("ed,ed->e", mid @ q.T, m.tangents))
        ys = build_y_star(m, g)
        assert diagnostics(ys).max_jump <= 1e-12
        bary, w = quadrature_rule(2)
        exact = np.einsum("kj,fjd->fkd", bary, m.vertices[m.triangles] @ q.T)
        errs.append(np.sqrt(integrate(m, ((ys.at(bary) - exact) ** 2).sum(-1), w).sum()))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 0.9)


# x*


def test_x_star_zero(mesh2, bench):
    x = build_x_star(mesh2, P1VectorField(mesh2, np.zeros((mesh2.n_vertices, 2))), bench)
    assert not x.at(BARY).any()


def test_x_star_reproduces_constant_strain(mesh4, bench):
    A = np.array([[0.4, -0.9], [1.1, 0.25]])
    x = build_x_star(mesh4, linear_rotation(mesh4, A, np.array([0.3, 0.1])), bench)
    sig = bench.stress(0.5 * (A + A.T))
    np.testing.assert_allclose(x.at(BARY), np.broadcast_to(sig, (mesh4.n_triangles, len(BARY), 2, 2)), atol=1e-13)
    d = diagnostics(x)
    assert d.max_jump <= 1e-12 and d.symmetry_defect <= 1e-13


def test_nodal_average_definition(mesh2, bench, rng):
    phi = random_rotation(mesh2, rng)
    avg = nodal_stress_average(bench, phi)
    sig = bench.stress(phi.strains())
    for v in (0, 7, 12):
        tris = np.flatnonzero((mesh2.triangles == v).any(axis=1))
        np.testing.assert_allclose(avg[v], sig[tris].mean(axis=0), atol=1e-13)


def test_x_star_traces_interpolate_endpoint_tractions(mesh2, bench, rng):
    phi = random_rotation(mesh2, rng)
    x = build_x_star(mesh2, phi, bench)
    avg = nodal_stress_average(bench, phi)
    for e in (0, 5, 20):
        for i in range(2):
            for p in range(2):
                assert abs(x.rows[i].traces[e, p] - avg[mesh2.edges[e, p], i] @ mesh2.normals[e]) < 1e-13


def test_x_star_divergence_theorem(mesh4, bench, rng):
    x = build_x_star(mesh4, random_rotation(mesh4, rng), bench)
    for r in x.rows:
        np.testing.assert_allclose(r.divergence(), boundary_flux(r), atol=1e-12 * max(1, np.abs(r.divergence()).max()))


# benchmark diagnostics


def test_benchmark_conformity(level4):
    assert diagnostics(level4.y_star).max_jump <= 1e-12
    d = diagnostics(level4.x_star, level4.gamma_h)
    assert d.max_jump <= 1e-12
    assert np.isfinite(d.symmetry_defect)


def test_benchmark_defects_reported(level4, exact):
    d = diagnostics(level4.y_star, project_load(level4.mesh, exact))
    assert d.divergence_defect.shape == (level4.mesh.n_triangles,)
    assert np.all(np.isfinite(d.divergence_defect))


@pytest.mark.xfail(strict=True, reason="measured 0.428, 0.379, 0.413: the averaged y* recipe is not monotone from 8 to 16")
def test_weighted_y_defect_decreases_over_levels():
    cfg = StudyConfig(levels=(4, 8, 16))
    vals = [run_solve(cfg, n).row.div_defect_y for n in cfg.levels]
    assert vals[0] > vals[1] > vals[2]


def test_diagnostics_mesh_argument_errors(mesh1, mesh2, bench):
    g = constant_nedelec(mesh1, [1.0, 0.0])
    with pytest.raises(ValueError):
        build_y_star(mesh2, g)
    with pytest.raises(ValueError):
        build_x_star(mesh2, P1VectorField(mesh1, np.zeros((9, 2))), bench)
