"""Icosahedron quadrature on the unit sphere.

Each face of an icosahedron is split into ``(order-1)**2`` equal triangles,
the nodes are pushed radially onto the sphere, and every node is given the
spherical area of its dual cell (the polygon through the centroids of the
triangles touching it).  Weights are normalized to sum to 4*pi.

Text format: one ordinate per line, ``x y z w`` separated by whitespace.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "QuadratureSet",
    "QuadratureError",
    "build_icosahedron_quadrature",
    "load_quadrature",
    "export_quadrature",
    "n_ordinates",
    "spherical_polygon_area",
]

FOUR_PI = 4.0 * np.pi
_MERGE_TOL = 1e-9


class QuadratureError(ValueError):
    """Invalid quadrature input (bad order, malformed file, broken invariant)."""


@dataclass(frozen=True)
class QuadratureSet:
    """Ordinates and weights on the unit sphere.

    Attributes
    ----------
    order : int
        Subdivision order (edges are cut into ``order - 1`` segments).
        ``0`` marks a hand-made set that did not come from the icosahedron.
    points : ndarray, shape (nq, 3)
        Unit direction vectors.
    weights : ndarray, shape (nq,)
        Positive solid-angle weights in steradians.
    """

    order: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def nq(self) -> int:
        return len(self.weights)

    @property
    def mu_x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def mu_y(self) -> np.ndarray:
        return self.points[:, 1]

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Sum ``w_q * values[q]`` over the leading axis."""
        return np.tensordot(self.weights, values, axes=(0, 0))

    def validate(self, norm_tol: float = 1e-12, sum_tol: float = 1e-12) -> None:
        pts, w = self.points, self.weights
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] != w.shape[0]:
            raise QuadratureError("points must be (nq, 3) and match weights")
        if len(w) == 0:
            raise QuadratureError("empty quadrature")
        norms = np.linalg.norm(pts, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > norm_tol)
        if bad.size:
            raise QuadratureError(f"ordinate {bad[0]} has norm {norms[bad[0]]!r}")
        if np.any(w <= 0.0):
            raise QuadratureError(f"non-positive weight at ordinate {int(np.argmin(w))}")
        if abs(w.sum() - FOUR_PI) > sum_tol * FOUR_PI:
            raise QuadratureError(f"weights sum to {w.sum()!r}, expected 4*pi")


def n_ordinates(order: int) -> int:
    """Number of nodes of the order-``order`` icosahedron quadrature."""
    return 10 * (order - 1) ** 2 + 2


def _icosahedron():
    """Vertices and faces, one vertex on the +z pole and one edge in the x-z plane."""
    h = 1.0 / np.sqrt(5.0)
    r = 2.0 / np.sqrt(5.0)
    upper = [(r * np.cos(2 * np.pi * k / 5), r * np.sin(2 * np.pi * k / 5), h) for k in range(5)]
    lower = [
        (r * np.cos(2 * np.pi * (k + 0.5) / 5), r * np.sin(2 * np.pi * (k + 0.5) / 5), -h)
        for k in range(5)
    ]
    verts = np.array([(0.0, 0.0, 1.0), *upper, *lower, (0.0, 0.0, -1.0)])
    north, south = 0, 11
    faces = []
    for k in range(5):
        u0, u1 = 1 + k, 1 + (k + 1) % 5
        l0, l1 = 6 + k, 6 + (k + 1) % 5
        faces.append((north, u0, u1))
        faces.append((u0, l0, u1))
        faces.append((u1, l0, l1))
        faces.append((south, l1, l0))
    return verts, faces


def _subdivide(order: int):
    """Planar nodes (with duplicates merged) and small triangles of all faces.

    Returns the planar node coordinates, the triangle index array and the
    planar centroid of every triangle.
    """
    verts, faces = _icosahedron()
    n = order - 1
    raw = []
    tri_local = []
    offset = 0
    for a, b, c in faces:
        A, B, C = verts[a], verts[b], verts[c]
        local = {}
        for i in range(n + 1):
            for j in range(n + 1 - i):
                k = n - i - j
                local[(i, j)] = offset + len(local)
                raw.append((k * A + i * B + j * C) / n)
        for i in range(n):
            for j in range(n - i):
                tri_local.append((local[(i, j)], local[(i + 1, j)], local[(i, j + 1)]))
                if i + j < n - 1:
                    tri_local.append((local[(i + 1, j)], local[(i + 1, j + 1)], local[(i, j + 1)]))
        offset += len(local)

    raw = np.asarray(raw)
    # vertex and edge nodes are generated once per adjacent face
    tree = cKDTree(raw)
    ident = np.full(len(raw), -1)
    unique = []
    for idx in range(len(raw)):
        if ident[idx] >= 0:
            continue
        for other in tree.query_ball_point(raw[idx], _MERGE_TOL):
            ident[other] = len(unique)
        unique.append(idx)
    nodes = raw[unique]
    tris = ident[np.asarray(tri_local)]
    centroids = raw[np.asarray(tri_local)].mean(axis=1)
    return nodes, tris, centroids


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def spherical_polygon_area(vertices: np.ndarray) -> float:
    """Area of a convex spherical polygon from its interior angles.

    ``vertices`` are unit vectors in counter-clockwise order seen from outside.
    """
    m = len(vertices)
    total = 0.0
    for i in range(m):
        p = vertices[i]
        prev = vertices[i - 1]
        nxt = vertices[(i + 1) % m]
        # tangent directions of the great-circle arcs leaving p
        t1 = prev - np.dot(prev, p) * p
        t2 = nxt - np.dot(nxt, p) * p
        cosang = np.dot(t1, t2) / (np.linalg.norm(t1) * np.linalg.norm(t2))
        total += np.arccos(np.clip(cosang, -1.0, 1.0))
    return total - (m - 2) * np.pi


def build_icosahedron_quadrature(order: int) -> QuadratureSet:
    """Build the icosahedron quadrature of the given order.

    Parameters
    ----------
    order : int
        Subdivision order, at least 2.  Yields ``10*(order-1)**2 + 2`` nodes.

    Returns
    -------
    QuadratureSet
    """
    if int(order) != order or order < 2:
        raise QuadratureError(f"order must be an integer >= 2, got {order!r}")
    order = int(order)
    nodes, tris, centroids = _subdivide(order)
    points = _unit(nodes)
    cpoints = _unit(centroids)

    incident = [[] for _ in range(len(points))]
    for t, tri in enumerate(tris):
        for v in tri:
            incident[v].append(t)

    weights = np.empty(len(points))
    for v, tlist in enumerate(incident):
        p = points[v]
        ring = cpoints[tlist]
        # local tangent frame for ordering the dual-cell corners
        e1 = ring[0] - np.dot(ring[0], p) * p
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(p, e1)
        ang = np.arctan2(ring @ e2, ring @ e1)
        weights[v] = spherical_polygon_area(ring[np.argsort(ang)])

    weights *= FOUR_PI / weights.sum()
    quad = QuadratureSet(order=order, points=points, weights=weights)
    quad.validate()
    return quad


def export_quadrature(quad: QuadratureSet, path) -> None:
    """Write ``x y z w`` lines with round-trip precision."""
    data = np.column_stack([quad.points, quad.weights])
    with open(path, "w") as fh:
        for row in data:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_quadrature(path, tol: float = 1e-9) -> QuadratureSet:
    """Read a quadrature text file and re-check its invariants.

    Raises
    ------
    QuadratureError
        On malformed lines (the line number is reported), points that are not
        unit vectors, non-positive weights or a weight sum away from 4*pi.
    """
    rows = []
    lines = Path(path).read_text().splitlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise QuadratureError(f"{path}:{lineno}: expected 4 entries, found {len(parts)}")
        try:
            row = [float(p) for p in parts]
        except ValueError as exc:
            raise QuadratureError(f"{path}:{lineno}: {exc}") from None
        if abs(np.linalg.norm(row[:3]) - 1.0) > tol:
            raise QuadratureError(f"{path}:{lineno}: point is not on the unit sphere")
        if not row[3] > 0.0:
            raise QuadratureError(f"{path}:{lineno}: weight must be positive")
        rows.append(row)
    if not rows:
        raise QuadratureError(f"{path}: no quadrature entries")
    data = np.array(rows)
    total = data[:, 3].sum()
    if abs(total - FOUR_PI) > tol * FOUR_PI:
        raise QuadratureError(f"{path}:{len(lines)}: weights sum to {total!r}, expected 4*pi")
    nq = len(data)
    p = round(np.sqrt((nq - 2) / 10.0)) + 1
    order = p if n_ordinates(p) == nq else 0
    return QuadratureSet(order=order, points=data[:, :3], weights=data[:, 3])
