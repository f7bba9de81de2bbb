"""Regular n-gon parameter domains with generalized barycentric coordinates.

The domain of an n-sided patch is the regular polygon inscribed in the unit
circle, corners at angles 2*pi*i/n in counter-clockwise order.  Coordinates
are mean value coordinates: positive inside convex polygons, linear along
edges, and the indicator at corners.  ``triangulate_ngon`` builds the
concentric-ring triangulation used for all base meshes: ring k is the
polygon scaled by k/r and carries k points per side, every interior vertex
except the center has valence 6.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(Exception):
    pass


INSIDE_EPS = 1e-10


@dataclass(frozen=True)
class NGonDomain:
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise DomainError("domain needs at least 3 sides")

    @property
    def corners(self) -> np.ndarray:
        i = np.arange(self.n)
        ang = 2.0 * np.pi * i / self.n
        return np.column_stack([np.cos(ang), np.sin(ang)])


def mean_value_weights(polygon: np.ndarray, p, eps: float = INSIDE_EPS) -> np.ndarray:
    """Mean value weights of ``p`` with respect to a convex CCW polygon.

    Points on an edge reduce exactly to linear interpolation of the edge
    endpoints; a point at a vertex gets the indicator.  Raises DomainError
    for points outside the polygon beyond ``eps``.
    """
    poly = np.asarray(polygon, dtype=float)
    p = np.asarray(p, dtype=float)
    n = len(poly)
    d = poly - p
    r = np.linalg.norm(d, axis=1)

    on_vertex = np.nonzero(r <= eps)[0]
    if on_vertex.size:
        w = np.zeros(n)
        w[on_vertex[0]] = 1.0
        return w

    nxt = np.roll(np.arange(n), -1)
    cross = d[:, 0] * d[nxt, 1] - d[:, 1] * d[nxt, 0]
    dot = np.einsum("ij,ij->i", d, d[nxt])
    edge_len = np.linalg.norm(poly[nxt] - poly, axis=1)
    # perpendicular distance to each edge line; negative means outside (CCW)
    height = cross / edge_len
    if np.any(height < -eps):
        raise DomainError("point lies outside the domain polygon")

    on_edge = np.nonzero((np.abs(height) <= eps) & (dot < 0))[0]
    if on_edge.size:
        i = int(on_edge[0])
        j = nxt[i]
        w = np.zeros(n)
        t = r[i] / (r[i] + r[j])
        w[i] = 1.0 - t
        w[j] = t
        return w

    # tan(alpha_i / 2) via the half-angle identity, alpha in (0, pi)
    tan_half = cross / (r * r[nxt] + dot)
    w = (np.roll(tan_half, 1) + tan_half) / r
    return w / np.sum(w)


def mean_value_weights_many(polygon: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Vectorized mean value weights for strictly interior points.

    Returns shape (M, N) for M query points against an N-vertex polygon.
    Callers must keep the points away from the boundary; no edge or vertex
    special cases are applied here.
    """
    poly = np.asarray(polygon, dtype=float)
    pts = np.asarray(pts, dtype=float)
    d = poly[None, :, :] - pts[:, None, :]          # (M, N, 2)
    r = np.linalg.norm(d, axis=2)                   # (M, N)
    if np.any(r < 100 * INSIDE_EPS):
        raise DomainError("batch mean value weights need interior points")
    dn = np.roll(d, -1, axis=1)
    rn = np.roll(r, -1, axis=1)
    cross = d[:, :, 0] * dn[:, :, 1] - d[:, :, 1] * dn[:, :, 0]
    dot = np.einsum("mnk,mnk->mn", d, dn)
    tan_half = cross / (r * rn + dot)
    w = (np.roll(tan_half, 1, axis=1) + tan_half) / r
    return w / np.sum(w, axis=1, keepdims=True)


def mean_value_coords(domain: NGonDomain, p) -> np.ndarray:
    """Mean value coordinates of a point in a regular n-gon domain."""
    return mean_value_weights(domain.corners, p)


@dataclass(frozen=True)
class DomainMesh:
    """Triangulated regular n-gon.

    ``boundary_side[v]`` is the side index for outer-ring vertices and -1
    for interior vertices; ``boundary_num[v] / resolution`` is the position
    of a boundary vertex along its side (0 at side's first corner).
    """

    n: int
    resolution: int
    uv: np.ndarray          # (V, 2)
    bary: np.ndarray        # (V, n)
    triangles: np.ndarray   # (T, 3)
    boundary_side: np.ndarray  # (V,) int, -1 interior
    boundary_num: np.ndarray   # (V,) int

    @property
    def vertex_count(self) -> int:
        return len(self.uv)

    def corner_vertex(self, i: int) -> int:
        """Mesh index of domain corner i."""
        r = self.resolution
        base = 1 + self.n * (r - 1) * r // 2
        return base + i * r

    def is_corner(self) -> np.ndarray:
        return (self.boundary_side >= 0) & (self.boundary_num == 0)


def _ring_index(n: int, ring: int, k: int) -> int:
    """Flat vertex index of point k (mod n*ring) on a given ring (ring >= 1)."""
    base = 1 + n * (ring - 1) * ring // 2
    return base + (k % (n * ring))


def triangulate_ngon(n: int, resolution: int) -> DomainMesh:
    """Concentric-ring triangulation of the regular n-gon.

    Vertex count is 1 + n*r*(r+1)/2 and triangle count n*r^2 for
    resolution r.  Ring m sits at scale m/r with points at parameters
    j/m along each side, so refining r -> 2r reproduces shared vertex
    positions bit-for-bit.
    """
    if n < 3:
        raise DomainError("n must be at least 3")
    if resolution < 1:
        raise DomainError("resolution must be at least 1")
    r = resolution
    corners = NGonDomain(n).corners

    uv = [np.zeros(2)]
    side_idx = [-1]
    num_idx = [0]
    for ring in range(1, r + 1):
        scale = ring / r
        for i in range(n):
            ci, cj = corners[i], corners[(i + 1) % n]
            for j in range(ring):
                t = j / ring
                uv.append(scale * ((1.0 - t) * ci + t * cj))
                if ring == r:
                    side_idx.append(i)
                    num_idx.append(j)
                else:
                    side_idx.append(-1)
                    num_idx.append(0)
    uv = np.array(uv)

    tris = []
    # innermost fan: ring 1 against the center
    for k in range(n):
        tris.append([_ring_index(n, 1, k), _ring_index(n, 1, k + 1), 0])
    # ladders between ring m (inner, m points/side) and ring m+1 (outer)
    for m in range(1, r):
        for i in range(n):
            outer = [_ring_index(n, m + 1, i * (m + 1) + j) for j in range(m + 2)]
            inner = [_ring_index(n, m, i * m + j) for j in range(m + 1)]
            for j in range(m + 1):
                tris.append([outer[j], outer[j + 1], inner[j]])
            for j in range(m):
                tris.append([inner[j], outer[j + 1], inner[j + 1]])
    triangles = np.array(tris, dtype=np.int64)

    boundary_side = np.array(side_idx, dtype=np.int64)
    boundary_num = np.array(num_idx, dtype=np.int64)

    bary = np.zeros((len(uv), n))
    interior = boundary_side < 0
    # strictly interior vertices vectorize; the center is exact by symmetry
    inner_rows = np.nonzero(interior)[0]
    if len(inner_rows):
        bary[inner_rows] = mean_value_weights_many(corners, uv[inner_rows])
    bary[0] = np.full(n, 1.0 / n)
    # boundary vertices carry exact linear fractions along their side
    for v in np.nonzero(~interior)[0]:
        i = boundary_side[v]
        m = boundary_num[v]
        row = np.zeros(n)
        row[i] = (r - m) / r
        row[(i + 1) % n] = m / r
        bary[v] = row

    return DomainMesh(n, r, uv, bary, triangles, boundary_side, boundary_num)
