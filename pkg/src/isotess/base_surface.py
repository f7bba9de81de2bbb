"""Base meshes spanning a patch boundary, built over a DomainMesh.

Two constructions share the domain triangulation:

* corners: every domain vertex maps to the mean-value combination of the
  patch corner points, so outer-ring vertices land on the straight chords
  between corners and stay inside the corresponding cell-face planes.
* transfinite: the traced boundary polylines are mapped onto the domain
  polygon sides by chord-length parameterization and interior vertices
  receive the mean-value interpolation of that dense boundary polygon, a
  C0 interpolant of the full boundary curves.

Boundary positions are evaluated between lexicographically ordered corner
pairs with integer-fraction weights, so neighbouring patches that share a
side produce bit-identical boundary vertices (given equal resolutions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DomainMesh, mean_value_weights_many
from .mesh import TriangleMesh
from .patch import PatchBoundary


class BaseSurfaceError(Exception):
    pass


@dataclass
class BaseMesh:
    mesh: TriangleMesh
    bary: np.ndarray            # (V, n)
    boundary_side: np.ndarray   # (V,) int, -1 interior
    boundary_num: np.ndarray    # (V,)
    provenance: str             # "corners-only" | "transfinite"
    domain: DomainMesh
    boundary: PatchBoundary

    @property
    def n(self) -> int:
        return self.boundary.n

    def corner_vertex(self, i: int) -> int:
        return self.domain.corner_vertex(i)

    def is_boundary(self) -> np.ndarray:
        return self.boundary_side >= 0

    def is_corner(self) -> np.ndarray:
        return self.domain.is_corner()


def _chord_weights(num: int, den: int):
    """Exact fraction pair ((den-num)/den, num/den) as floats."""
    return (den - num) / den, num / den


def _chord_point(ca: np.ndarray, cb: np.ndarray, num: int, den: int) -> np.ndarray:
    """Point at fraction num/den from ca to cb, evaluated canonically.

    The two corners are reordered lexicographically before combining so the
    same physical point is produced bit-for-bit regardless of traversal
    direction.
    """
    if tuple(ca) <= tuple(cb):
        wa, wb = _chord_weights(num, den)
        return wa * ca + wb * cb
    wb, wa = _chord_weights(den - num, den)
    return wb * cb + wa * ca


def base_mesh_corners(boundary: PatchBoundary, dm: DomainMesh) -> BaseMesh:
    """Map each domain vertex to the barycentric combination of the corners."""
    if dm.n != boundary.n:
        raise BaseSurfaceError(
            f"domain has {dm.n} sides but the boundary has {boundary.n}")
    corners = boundary.corners
    positions = dm.bary @ corners
    r = dm.resolution
    for v in np.nonzero(dm.boundary_side >= 0)[0]:
        i = int(dm.boundary_side[v])
        m = int(dm.boundary_num[v])
        if m == 0:
            positions[v] = corners[i]
        else:
            positions[v] = _chord_point(corners[i], corners[(i + 1) % dm.n], m, r)
    mesh = TriangleMesh(positions, dm.triangles.copy())
    return BaseMesh(mesh, dm.bary, dm.boundary_side.copy(), dm.boundary_num.copy(),
                    "corners-only", dm, boundary)


def _canonical_polyline(ca, cb, polyline):
    """Polyline oriented from the lexicographically smaller corner."""
    if tuple(ca) <= tuple(cb):
        return polyline, False
    return polyline[::-1], True


def _arc_point(polyline: np.ndarray, cumlen: np.ndarray, frac: float) -> np.ndarray:
    """Point at a chord-length fraction along a polyline."""
    target = frac * cumlen[-1]
    k = int(np.searchsorted(cumlen, target, side="right")) - 1
    k = min(max(k, 0), len(polyline) - 2)
    seg = cumlen[k + 1] - cumlen[k]
    if seg == 0.0:
        return polyline[k]
    t = (target - cumlen[k]) / seg
    return polyline[k] + t * (polyline[k + 1] - polyline[k])


def base_mesh_transfinite(boundary: PatchBoundary, dm: DomainMesh) -> BaseMesh:
    """Interpolate the traced boundary polylines over the domain.

    Boundary domain vertices take the chord-length point of their own side;
    interior vertices take the mean-value combination of the dense boundary
    polygon (polyline points mapped to the domain sides at their chord-length
    parameters).
    """
    if dm.n != boundary.n:
        raise BaseSurfaceError(
            f"domain has {dm.n} sides but the boundary has {boundary.n}")
    n = dm.n
    r = dm.resolution
    corners_uv = dm.uv[[dm.corner_vertex(i) for i in range(n)]]

    sides = []
    for i, side in enumerate(boundary.sides):
        if side.polyline is None or len(side.polyline) < 2:
            raise BaseSurfaceError(f"side {i} has no traced polyline")
        ca = boundary.corners[i]
        cb = boundary.corners[(i + 1) % n]
        canon, flipped = _canonical_polyline(ca, cb, side.polyline)
        seglen = np.linalg.norm(np.diff(canon, axis=0), axis=1)
        cumlen = np.concatenate([[0.0], np.cumsum(seglen)])
        if cumlen[-1] == 0.0:
            raise BaseSurfaceError(f"side {i} polyline has zero length")
        sides.append((canon, cumlen, flipped))

    positions = np.zeros((dm.vertex_count, 3))

    # dense domain polygon: polyline points mapped onto the domain sides
    dense_uv = []
    dense_xyz = []
    for i, (canon, cumlen, flipped) in enumerate(sides):
        ua = corners_uv[i]
        ub = corners_uv[(i + 1) % n]
        ts = cumlen / cumlen[-1]
        if flipped:
            pts = canon[::-1]
            ts = 1.0 - ts[::-1]
        else:
            pts = canon
        # skip duplicate seams and the final corner (owned by the next side)
        keep = np.concatenate([[True], np.diff(ts) > 1e-15])
        keep[-1] = False
        for t, p in zip(ts[keep], pts[keep]):
            dense_uv.append((1.0 - t) * ua + t * ub)
            dense_xyz.append(p)
    dense_uv = np.array(dense_uv)
    dense_xyz = np.array(dense_xyz)

    interior = np.nonzero(dm.boundary_side < 0)[0]
    if len(interior):
        w = mean_value_weights_many(dense_uv, dm.uv[interior])
        positions[interior] = w @ dense_xyz

    for v in np.nonzero(dm.boundary_side >= 0)[0]:
        i = int(dm.boundary_side[v])
        m = int(dm.boundary_num[v])
        canon, cumlen, flipped = sides[i]
        if m == 0:
            positions[v] = boundary.corners[i]
        else:
            frac = (r - m) / r if flipped else m / r
            positions[v] = _arc_point(canon, cumlen, frac)

    mesh = TriangleMesh(positions, dm.triangles.copy())
    return BaseMesh(mesh, dm.bary, dm.boundary_side.copy(), dm.boundary_num.copy(),
                    "transfinite", dm, boundary)
