"""Criss-cross ("union jack") triangulations of the unit square.

Every macro square of side ``1/n`` is cut by its two mid-lines into four
sub-squares, and each sub-square is cut along the diagonal that passes
through the macro-square centre, giving 8 right-isosceles triangles per
macro square.

Conventions used throughout the package:

* triangles are stored counterclockwise;
* local edge ``k`` of a triangle is the edge opposite local vertex ``k``,
  i.e. it joins local vertices ``k+1`` and ``k+2`` (mod 3);
* a global edge ``(i, j)`` is stored with ``i < j``; its unit tangent points
  from ``i`` to ``j`` and its unit normal is the tangent rotated clockwise,
  ``nu = (tau_y, -tau_x)``;
* ``tri_edge_signs[T, k]`` is ``+1`` when ``nu`` of that edge is the outward
  normal of ``T`` and ``-1`` otherwise.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, TextIO, Union

import numpy as np
import scipy.sparse as sps

__all__ = [
    "Mesh",
    "Patch",
    "build_mesh",
    "patch_of",
    "edge_midpoint_normal",
    "max_vertex_valence",
    "write_mesh",
    "read_mesh",
]

MESH_HEADER = "rmplate-mesh v1"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangle mesh with the connectivity needed by the solvers.

    Build instances with :func:`build_mesh` or :meth:`Mesh.from_arrays`;
    the remaining fields are derived.
    """

    vertices: np.ndarray  # (V, 2)
    triangles: np.ndarray  # (F, 3), counterclockwise
    edges: np.ndarray  # (E, 2), first index < second index
    tri_edges: np.ndarray  # (F, 3), local edge k is opposite local vertex k
    tri_edge_signs: np.ndarray  # (F, 3), +1 / -1
    edge_tris: np.ndarray  # (E, 2), [triangle with sign +1, sign -1], -1 if absent
    boundary_vertices: np.ndarray  # (V,) bool
    boundary_edges: np.ndarray  # (E,) bool
    tangents: np.ndarray  # (E, 2)
    normals: np.ndarray  # (E, 2)
    edge_lengths: np.ndarray  # (E,)
    areas: np.ndarray  # (F,)
    diameters: np.ndarray  # (F,) h_T
    n: Optional[int] = None

    @classmethod
    def from_arrays(cls, vertices, triangles, n: Optional[int] = None) -> "Mesh":
        """Build a mesh from coordinates and vertex triples.

        Triangles given clockwise are reoriented. Edges are numbered
        lexicographically by the (y, x) coordinates of their midpoints.
        """
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.array(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must have shape (V, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise ValueError("triangles must have shape (F, 3)")

        p = vertices[triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(signed == 0.0):
            raise ValueError("degenerate triangle in mesh")
        cw = signed < 0
        triangles[cw] = triangles[cw][:, [0, 2, 1]]
        areas = np.abs(signed)

        # local edge k joins local vertices k+1 and k+2
        a = triangles[:, [1, 2, 0]]
        b = triangles[:, [2, 0, 1]]
        lo = np.minimum(a, b).ravel()
        hi = np.maximum(a, b).ravel()
        pairs, inverse = np.unique(np.stack([lo, hi], axis=1), axis=0, return_inverse=True)
        inverse = inverse.ravel()
        mid = 0.5 * (vertices[pairs[:, 0]] + vertices[pairs[:, 1]])
        order = np.lexsort((mid[:, 0], mid[:, 1]))
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        edges = pairs[order]
        tri_edges = rank[inverse].reshape(-1, 3)
        tri_edge_signs = np.where(a == edges[tri_edges, 0], 1, -1).astype(np.int64)

        n_edges = edges.shape[0]
        edge_tris = np.full((n_edges, 2), -1, dtype=np.int64)
        tri_ids = np.repeat(np.arange(triangles.shape[0]), 3)
        slot = np.where(tri_edge_signs.ravel() > 0, 0, 1)
        flat_edges = tri_edges.ravel()
        counts = np.zeros((n_edges, 2), dtype=np.int64)
        np.add.at(counts, (flat_edges, slot), 1)
        if np.any(counts > 1):
            raise ValueError("non-manifold or inconsistently oriented mesh")
        edge_tris[flat_edges, slot] = tri_ids

        boundary_edges = (edge_tris < 0).any(axis=1)
        boundary_vertices = np.zeros(vertices.shape[0], dtype=bool)
        boundary_vertices[edges[boundary_edges].ravel()] = True

        vec = vertices[edges[:, 1]] - vertices[edges[:, 0]]
        lengths = np.hypot(vec[:, 0], vec[:, 1])
        tangents = vec / lengths[:, None]
        normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1)
        diameters = lengths[tri_edges].max(axis=1)

        return cls(
            vertices=_readonly(vertices.copy()),
            triangles=_readonly(triangles),
            edges=_readonly(edges),
            tri_edges=_readonly(tri_edges),
            tri_edge_signs=_readonly(tri_edge_signs),
            edge_tris=_readonly(edge_tris),
            boundary_vertices=_readonly(boundary_vertices),
            boundary_edges=_readonly(boundary_edges),
            tangents=_readonly(tangents),
            normals=_readonly(normals),
            edge_lengths=_readonly(lengths),
            areas=_readonly(areas),
            diameters=_readonly(diameters),
            n=n,
        )

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def interior_vertices(self) -> np.ndarray:
        """Indices of the vertices not on the boundary."""
        return np.flatnonzero(~self.boundary_vertices)

    @cached_property
    def barycentric_gradients(self) -> np.ndarray:
        """Constant gradients of the three barycentric coordinates, shape (F, 3, 2)."""
        p = self.vertices[self.triangles]
        # grad(lambda_k) = rot90(p_{k+2} - p_{k+1}) / (2|T|), points towards vertex k
        e = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]
        g = np.stack([-e[..., 1], e[..., 0]], axis=-1)
        return g / (2.0 * self.areas[:, None, None])

    @cached_property
    def vertex_triangle_incidence(self) -> sps.csr_matrix:
        """Sparse (F, V) 0/1 matrix, 1 where the triangle owns the vertex."""
        F = self.n_triangles
        rows = np.repeat(np.arange(F), 3)
        return sps.csr_matrix(
            (np.ones(3 * F), (rows, self.triangles.ravel())),
            shape=(F, self.n_vertices),
        )

    @cached_property
    def _patches(self) -> sps.csr_matrix:
        inc = self.vertex_triangle_incidence
        return (inc @ inc.T).tocsr()

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def check_triangle(self, t: int) -> int:
        t = int(t)
        if not 0 <= t < self.n_triangles:
            raise IndexError(f"triangle id {t} out of range [0, {self.n_triangles})")
        return t

    def check_edge(self, e: int) -> int:
        e = int(e)
        if not 0 <= e < self.n_edges:
            raise IndexError(f"edge id {e} out of range [0, {self.n_edges})")
        return e

    def __repr__(self) -> str:
        return (
            f"Mesh(n={self.n}, vertices={self.n_vertices}, "
            f"edges={self.n_edges}, triangles={self.n_triangles})"
        )


@dataclass(frozen=True)
class Patch:
    """Triangles touching a centre triangle (sharing at least one vertex)."""

    center: int
    members: tuple

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, t) -> bool:
        return t in self.members


def build_mesh(n: int) -> Mesh:
    """Criss-cross mesh of the unit square with ``n x n`` macro squares.

    Vertices lie on the ``(2n+1) x (2n+1)`` grid of step ``1/(2n)``. Vertices
    and triangles are numbered lexicographically by (y, x) of the vertex and
    centroid respectively.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"mesh level n must be a positive integer, got {n!r}")
    n = int(n)
    m = 2 * n
    idx = np.arange(m + 1)
    jj, ii = np.meshgrid(idx, idx, indexing="ij")
    # row-major over (j, i): already (y, x) lexicographic
    vertices = np.stack([ii.ravel() / m, jj.ravel() / m], axis=1)

    def vid(i, j):
        return j * (m + 1) + i

    tris = []
    keys = []
    for j in range(m):
        for i in range(m):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                # "/" diagonal v00-v11
                pair = ((v00, v10, v11), (v00, v11, v01))
                cents = ((3 * i + 2, 3 * j + 1), (3 * i + 1, 3 * j + 2))
            else:
                # "\" diagonal v10-v01
                pair = ((v00, v10, v01), (v10, v11, v01))
                cents = ((3 * i + 1, 3 * j + 1), (3 * i + 2, 3 * j + 2))
            tris.extend(pair)
            keys.extend(cents)
    keys = np.array(keys)  # centroid coordinates in units of 1/(6n)
    order = np.lexsort((keys[:, 0], keys[:, 1]))
    triangles = np.array(tris, dtype=np.int64)[order]
    return Mesh.from_arrays(vertices, triangles, n=n)


def patch_of(mesh: Mesh, t: int) -> Patch:
    """Return every triangle sharing at least one vertex with triangle ``t``."""
    t = mesh.check_triangle(t)
    row = mesh._patches.getrow(t)
    return Patch(center=t, members=tuple(int(k) for k in np.sort(row.indices)))


def max_vertex_valence(mesh: Mesh) -> int:
    """Largest number of triangles meeting at one vertex."""
    return int(np.bincount(mesh.triangles.ravel(), minlength=mesh.n_vertices).max())


def edge_midpoint_normal(mesh: Mesh, e: int):
    """Midpoint and global unit normal of edge ``e``."""
    e = mesh.check_edge(e)
    i, j = mesh.edges[e]
    mid = 0.5 * (mesh.vertices[i] + mesh.vertices[j])
    return mid, mesh.normals[e].copy()


def write_mesh(mesh: Mesh, dest: Union[str, os.PathLike, TextIO]) -> None:
    """Dump a mesh as ``v``/``t``/``e`` records under a one-line header."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w") as fh:
            write_mesh(mesh, fh)
        return
    n = "" if mesh.n is None else mesh.n
    dest.write(f"{MESH_HEADER} n={n}\n")
    for x, y in mesh.vertices:
        dest.write(f"v {x:.17g} {y:.17g}\n")
    for i, j, k in mesh.triangles:
        dest.write(f"t {i} {j} {k}\n")
    for i, j in mesh.edges:
        dest.write(f"e {i} {j}\n")


def read_mesh(src: Union[str, os.PathLike, TextIO]) -> Mesh:
    """Inverse of :func:`write_mesh`. Edge records are cross-checked, not trusted."""
    if isinstance(src, (str, os.PathLike)):
        with open(src) as fh:
            return read_mesh(fh)
    header = src.readline().split()
    if header[:2] != MESH_HEADER.split() or len(header) != 3 or not header[2].startswith("n="):
        raise ValueError(f"not an rmplate mesh file: {' '.join(header)!r}")
    level = header[2][2:]
    verts, tris, edges = [], [], []
    for lineno, line in enumerate(src, start=2):
        rec = line.split()
        if not rec:
            continue
        kind = rec[0]
        if kind == "v" and len(rec) == 3:
            verts.append((float(rec[1]), float(rec[2])))
        elif kind == "t" and len(rec) == 4:
            tris.append(tuple(int(r) for r in rec[1:]))
        elif kind == "e" and len(rec) == 3:
            edges.append((int(rec[1]), int(rec[2])))
        else:
            raise ValueError(f"line {lineno}: malformed record {line.strip()!r}")
    mesh = Mesh.from_arrays(np.array(verts), np.array(tris), n=int(level) if level else None)
    if edges and not np.array_equal(np.array(edges), mesh.edges):
        raise ValueError("edge records do not match the triangle connectivity")
    return mesh


def dumps(mesh: Mesh) -> str:
    buf = io.StringIO()
    write_mesh(mesh, buf)
    return buf.getvalue()
