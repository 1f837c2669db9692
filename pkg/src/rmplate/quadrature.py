"""Quadrature on the reference triangle ``{x >= 0, y >= 0, x + y <= 1}``.

Rules are conical (Duffy) products of a Gauss-Jacobi rule with weight
``(1 - u)`` and a Gauss-Legendre rule, so every weight is positive and every
point is strictly inside the triangle. A composite variant repeats a rule on
the ``4**refine`` congruent sub-triangles of a uniform red refinement, which
helps with the steep data near the boundary of the benchmark.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 10
MAX_REFINE = 6


@lru_cache(maxsize=None)
def _rule(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    m = (degree + 2) // 2  # m-point Gauss rules integrate degree 2m-1 exactly
    # Jacobi (alpha, beta) = (1, 0) on [-1, 1] has weight (1 - s)
    s, ws = roots_jacobi(m, 1.0, 0.0)
    u = 0.5 * (s + 1.0)
    wu = ws / 4.0  # du = ds/2 and (1 - u) = (1 - s)/2
    r, wr = np.polynomial.legendre.leggauss(m)
    v = 0.5 * (r + 1.0)
    wv = wr / 2.0
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = uu.ravel()
    y = (vv * (1.0 - uu)).ravel()
    w = np.outer(wu, wv).ravel()
    bary = np.stack([1.0 - x - y, x, y], axis=1)
    bary.flags.writeable = False
    w.flags.writeable = False
    return bary, w


def _subtriangles(refine: int) -> np.ndarray:
    """Barycentric vertex coordinates of the red-refinement children, (4**refine, 3, 3)."""
    tris = np.eye(3)[None]
    for _ in range(refine):
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
        tris = np.concatenate(
            [np.stack(v, axis=1) for v in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))]
        )
    return tris


@lru_cache(maxsize=None)
def _composite(degree: int, refine: int) -> Tuple[np.ndarray, np.ndarray]:
    bary, w = _rule(degree)
    if refine == 0:
        return bary, w
    sub = _subtriangles(refine)
    pts = np.einsum("kj,sjd->skd", bary, sub).reshape(-1, 3)
    wts = np.tile(w / sub.shape[0], sub.shape[0])
    pts.flags.writeable = False
    wts.flags.writeable = False
    return pts, wts


def _is_int(v) -> bool:
    return not isinstance(v, bool) and isinstance(v, (int, np.integer))


def quadrature_rule(degree: int, refine: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Points and weights exact for polynomials of total degree ``degree``.

    With ``refine > 0`` the rule is applied on each of the ``4**refine``
    sub-triangles of a uniform refinement (still exact to ``degree``).

    Returns
    -------
    bary : ndarray, shape (k, 3)
        Barycentric coordinates of the points.
    weights : ndarray, shape (k,)
        Weights on the reference triangle; they sum to 1/2.
    """
    if not _is_int(degree) or not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"quadrature degree must be an integer in [1, {MAX_DEGREE}], got {degree!r}")
    if not _is_int(refine) or not 0 <= refine <= MAX_REFINE:
        raise ValueError(f"quadrature refinement must be an integer in [0, {MAX_REFINE}], got {refine!r}")
    return _composite(int(degree), int(refine))


def reference_points(bary: np.ndarray) -> np.ndarray:
    """Cartesian reference coordinates ``(x, y)`` of barycentric points."""
    return np.asarray(bary)[:, 1:]
