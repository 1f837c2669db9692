import io
import math

import numpy as np
import pytest
import scipy.sparse as sps
import scipy.sparse.csgraph as csgraph
from hypothesis import given, settings
from hypothesis import strategies as st

from rmplate.mesh import (
    Mesh,
    build_mesh,
    dumps,
    edge_midpoint_normal,
    max_vertex_valence,
    patch_of,
    read_mesh,
    write_mesh,
)


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_level_counts_and_geometry(n):
    m = build_mesh(n)
    assert m.n_triangles == 8 * n * n
    assert m.n_vertices == (2 * n + 1) ** 2
    np.testing.assert_allclose(m.diameters, math.sqrt(2) / (2 * n), rtol=0, atol=1e-15)
    np.testing.assert_allclose(m.areas, 1.0 / (8 * n * n), rtol=0, atol=1e-12)
    assert abs(m.areas.sum() - 1.0) < 1e-12
    # Euler characteristic of a disk
    assert m.n_vertices - m.n_edges + m.n_triangles == 1


def test_n4_counts_and_mesh_size():
    m = build_mesh(4)
    assert m.n_triangles == 128
    assert np.allclose(m.diameters, math.sqrt(2) / 8)


def test_n8_vertex_count():
    m = build_mesh(8)
    assert (m.n_triangles, m.n_vertices) == (512, 289)


def test_right_isosceles():
    m = build_mesh(3)
    L = np.sort(m.edge_lengths[m.tri_edges], axis=1)
    np.testing.assert_allclose(L[:, 0], L[:, 1], atol=1e-15)
    np.testing.assert_allclose(L[:, 2], math.sqrt(2) * L[:, 0], atol=1e-15)


def test_counterclockwise_orientation():
    m = build_mesh(3)
    p = m.vertices[m.triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    assert np.all(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] > 0)


def test_edge_incidence():
    m = build_mesh(4)
    count = (m.edge_tris >= 0).sum(axis=1)
    assert np.all(count[m.boundary_edges] == 1)
    assert np.all(count[~m.boundary_edges] == 2)
    # two incidence signs of an interior edge are opposite
    inner = np.flatnonzero(~m.boundary_edges)
    for e in inner:
        signs = [m.tri_edge_signs[t][list(m.tri_edges[t]).index(e)] for t in m.edge_tris[e]]
        assert sorted(signs) == [-1, 1]


def test_sign_is_outward_normal():
    m = build_mesh(3)
    cent = m.centroids()
    for k in range(3):
        e = m.tri_edges[:, k]
        mid = 0.5 * (m.vertices[m.edges[e, 0]] + m.vertices[m.edges[e, 1]])
        outward = np.einsum("fd,fd->f", mid - cent, m.normals[e]) * m.tri_edge_signs[:, k]
        assert np.all(outward > 0)


def test_local_edge_opposite_vertex():
    m = build_mesh(2)
    for k in range(3):
        e = m.tri_edges[:, k]
        assert not np.any(m.edges[e] == m.triangles[:, [k]])


def test_boundary_flags():
    m = build_mesh(3)
    on_bnd = np.isclose(m.vertices, 0).any(1) | np.isclose(m.vertices, 1).any(1)
    np.testing.assert_array_equal(on_bnd, m.boundary_vertices)


def test_union_jack_diagonals_meet_at_macro_centres():
    m = build_mesh(2)
    diag = np.flatnonzero(np.isclose(m.edge_lengths, math.sqrt(2) / 4))
    ends = m.vertices[m.edges[diag]]
    centres = {(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)}
    for a, b in ends:
        assert (round(a[0], 12), round(a[1], 12)) in centres or (round(b[0], 12), round(b[1], 12)) in centres


def test_connectivity_closure():
    m = build_mesh(4)
    F = m.n_triangles
    inner = ~m.boundary_edges
    a, b = m.edge_tris[inner, 0], m.edge_tris[inner, 1]
    adj = sps.coo_matrix((np.ones(a.size), (a, b)), shape=(F, F))
    ncomp, _ = csgraph.connected_components(adj, directed=False)
    assert ncomp == 1


@pytest.mark.parametrize("n", [1, 2, 4])
def test_refinement_nesting(n):
    coarse = {tuple(v) for v in np.round(build_mesh(n).vertices * 4 * n).astype(int)}
    fine = {tuple(v) for v in np.round(build_mesh(2 * n).vertices * 4 * n).astype(int)}
    assert coarse <= fine


def test_numbering_is_lexicographic():
    m = build_mesh(3)
    v = m.vertices
    assert np.all(np.lexsort((v[:, 0], v[:, 1])) == np.arange(m.n_vertices))
    mid = 0.5 * (v[m.edges[:, 0]] + v[m.edges[:, 1]])
    assert np.all(np.lexsort((mid[:, 0], mid[:, 1])) == np.arange(m.n_edges))
    c = m.centroids()
    assert np.all(np.lexsort((c[:, 0], c[:, 1])) == np.arange(m.n_triangles))
    assert np.all(m.edges[:, 0] < m.edges[:, 1])


def test_build_mesh_rejects_bad_levels():
    for bad in (0, -1, 1.5, True):
        with pytest.raises(ValueError):
            build_mesh(bad)


def test_build_mesh_deterministic():
    assert dumps(build_mesh(3)) == dumps(build_mesh(3))


def test_mesh_is_immutable():
    m = build_mesh(1)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 1.0


# patches


def test_patch_reflexive_on_n2():
    m = build_mesh(2)
    for t in range(m.n_triangles):
        assert t in patch_of(m, t)


def test_corner_patch_on_n1():
    m = build_mesh(1)
    corner = int(np.argmin(m.centroids().sum(axis=1)))
    assert set(patch_of(m, corner).members) <= set(range(8))


def test_patch_is_vertex_sharing():
    m = build_mesh(4)
    for t in (0, 17, 63, 100):
        expected = {s for s in range(m.n_triangles) if set(m.triangles[s]) & set(m.triangles[t])}
        assert set(patch_of(m, t).members) == expected


def test_vertex_valence_matches_ledger_constant():
    # the constant N=8 bounds the number of triangles at a vertex of this mesh
    assert max_vertex_valence(build_mesh(4)) == 8


def test_patch_cardinality_range():
    # vertex-sharing patches hold between 8 and 15 triangles here (see decisions ledger)
    m = build_mesh(4)
    sizes = [len(patch_of(m, t)) for t in range(m.n_triangles)]
    assert min(sizes) >= 8 and max(sizes) <= 15


def test_patch_invalid_id():
    m = build_mesh(1)
    with pytest.raises(IndexError):
        patch_of(m, 8)
    with pytest.raises(IndexError):
        patch_of(m, -1)


# edge midpoint / normal


def test_edge_midpoint_normal_horizontal_n1():
    m = build_mesh(1)
    hits = [e for e in range(m.n_edges) if np.allclose(edge_midpoint_normal(m, e)[0], [0.25, 0.0])]
    assert len(hits) == 1
    mid, nu = edge_midpoint_normal(m, hits[0])
    assert np.allclose(np.abs(nu), [0.0, 1.0])
    np.testing.assert_allclose(nu, m.normals[hits[0]])


def test_normals_unit_and_orthogonal():
    m = build_mesh(4)
    for e in range(m.n_edges):
        _, nu = edge_midpoint_normal(m, e)
        assert abs(np.linalg.norm(nu) - 1) < 1e-14
        d = m.vertices[m.edges[e, 1]] - m.vertices[m.edges[e, 0]]
        assert abs(nu @ d) < 1e-14


def test_edge_invalid_id():
    m = build_mesh(1)
    with pytest.raises(IndexError):
        edge_midpoint_normal(m, m.n_edges)


# dump format


def test_dump_roundtrip(tmp_path):
    m = build_mesh(2)
    path = tmp_path / "m.txt"
    write_mesh(m, path)
    text = path.read_text()
    assert text.splitlines()[0] == "rmplate-mesh v1 n=2"
    back = read_mesh(path)
    np.testing.assert_array_equal(back.vertices, m.vertices)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_array_equal(back.edges, m.edges)
    assert back.n == 2


def test_dump_record_counts():
    m = build_mesh(1)
    kinds = [line.split()[0] for line in dumps(m).splitlines()[1:]]
    assert kinds.count("v") == 9 and kinds.count("t") == 8 and kinds.count("e") == 16


def test_read_rejects_garbage():
    with pytest.raises(ValueError):
        read_mesh(io.StringIO("hello\n"))
    bad = dumps(build_mesh(1)).replace("e 0 1", "e 0 2")
    with pytest.raises(ValueError):
        read_mesh(io.StringIO(bad))


def test_from_arrays_reorients_clockwise():
    v = [[0, 0], [1, 0], [0, 1]]
    m = Mesh.from_arrays(v, [[0, 2, 1]])
    assert m.areas[0] == 0.5
    p = m.vertices[m.triangles[0]]
    d1, d2 = p[1] - p[0], p[2] - p[0]
    assert d1[0] * d2[1] - d1[1] * d2[0] > 0


def test_from_arrays_rejects_degenerate():
    with pytest.raises(ValueError):
        Mesh.from_arrays([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=1, max_value=6))
def test_property_invariants(n):
    m = build_mesh(n)
    assert m.n_triangles == 8 * n * n
    assert abs(m.areas.sum() - 1) < 1e-12
    np.testing.assert_allclose(np.linalg.norm(m.normals, axis=1), 1, atol=1e-14)
    assert m.boundary_edges.sum() == 8 * n
