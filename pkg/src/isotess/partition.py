"""Convex plane-bounded cells and the octree that isolates surface sheets.

A cell is an intersection of half-spaces ``n . p <= d`` with unit outward
normals.  ``cell_from_planes`` recovers the full vertex/edge/face incidence
by enumerating plane triples; ``sheet_test`` classifies how the zero set of
a field meets a cell, and ``build_octree`` subdivides boxes until every
surface-carrying leaf holds a single well-formed sheet.

Sign conventions: a point is classified *negative* (inside the surface)
when F < tie, where tie = 1e-12 * field scale nudges exact zeros off the
surface.  A cell is "single-sheet" when the negative and positive sample
sets are each connected, every face meets the surface in at most one open
arc, every cell edge carries at most one crossing, and at least 3 edges
cross (so the patch boundary can close into a loop).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field
from enum import Enum

import numpy as np
from scipy import ndimage


class CellError(Exception):
    pass


TIE_FACTOR = 1e-12


@dataclass(frozen=True)
class Plane:
    """Oriented plane n . p = d with |n| = 1; n . p > d is the positive side."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise CellError("plane normal must be unit length")

    @staticmethod
    def from_coeffs(coeffs) -> "Plane":
        """Build from [nx, ny, nz, d], normalizing the normal and offset."""
        c = np.asarray(coeffs, dtype=float)
        norm = np.linalg.norm(c[:3])
        if norm == 0:
            raise CellError("plane normal must be nonzero")
        return Plane(c[:3] / norm, c[3] / norm)

    def signed_distance(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.normal - self.offset

    def basis(self):
        """Two in-plane unit vectors forming a right-handed frame with n."""
        n = self.normal
        axis = np.argmin(np.abs(n))
        e1 = np.zeros(3)
        e1[axis] = 1.0
        e1 = e1 - (e1 @ n) * n
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
        return e1, e2


@dataclass(frozen=True)
class Face:
    plane_index: int
    loop: tuple  # vertex indices, CCW seen from outside


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    faces: tuple  # the two incident face indices


@dataclass(frozen=True)
class ConvexCell:
    planes: tuple
    vertices: np.ndarray  # (V, 3)
    edges: tuple          # of Edge
    faces: tuple          # of Face

    @property
    def diameter(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def contains(self, pts, eps: float = 0.0) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        ok = np.ones(pts.shape[:-1], dtype=bool)
        for pl in self.planes:
            ok &= pl.signed_distance(pts) <= eps
        return ok

    def edge_points(self, edge: Edge):
        """Endpoints in a lexicographically canonical order.

        Neighbouring cells sharing this edge see the exact same segment, so
        roots found on it agree bit for bit.
        """
        pa, pb = self.vertices[edge.a], self.vertices[edge.b]
        if tuple(pa) <= tuple(pb):
            return pa, pb
        return pb, pa


def cell_from_planes(planes, eps_rel: float = 1e-9) -> ConvexCell:
    """Intersect half-spaces into a bounded convex cell.

    Vertices come from all feasible plane triples; coincident triples are
    merged within eps.  Planes with fewer than three incident vertices are
    redundant and dropped.  Raises CellError when the intersection is empty,
    unbounded, or degenerate.
    """
    planes = [pl if isinstance(pl, Plane) else Plane.from_coeffs(pl) for pl in planes]
    if len(planes) < 4:
        raise CellError("a bounded cell needs at least 4 planes")
    normals = np.array([pl.normal for pl in planes])
    offsets = np.array([pl.offset for pl in planes])

    scale = 1.0 + float(np.max(np.abs(offsets)))
    rough_eps = 1e-7 * scale
    candidates = []
    for i, j, k in itertools.combinations(range(len(planes)), 3):
        A = normals[[i, j, k]]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        p = np.linalg.solve(A, offsets[[i, j, k]])
        if np.all(normals @ p - offsets <= rough_eps):
            candidates.append(p)
    if not candidates:
        raise CellError("plane intersection is empty or unbounded")

    candidates = np.array(candidates)
    lo, hi = candidates.min(axis=0), candidates.max(axis=0)
    diameter = float(np.linalg.norm(hi - lo))
    if diameter == 0.0:
        raise CellError("degenerate cell (single point)")
    eps = eps_rel * diameter

    # merge coincident triple intersections (more than 3 planes per point)
    vertices: list[np.ndarray] = []
    groups: list[list[np.ndarray]] = []
    for p in candidates:
        for vi, v in enumerate(vertices):
            if np.linalg.norm(v - p) <= eps:
                groups[vi].append(p)
                vertices[vi] = np.mean(groups[vi], axis=0)
                break
        else:
            vertices.append(p)
            groups.append([p])
    verts = np.array(vertices)
    # refilter with the final epsilon
    keep = np.all(normals @ verts.T - offsets[:, None] <= eps, axis=0)
    verts = verts[keep]
    if len(verts) < 4:
        raise CellError("plane intersection is empty or unbounded")

    faces = []
    kept_planes = []
    for pi, pl in enumerate(planes):
        on = np.nonzero(np.abs(pl.signed_distance(verts)) <= eps)[0]
        if len(on) < 3:
            continue  # redundant plane
        e1, e2 = pl.basis()
        rel = verts[on] - verts[on].mean(axis=0)
        ang = np.arctan2(rel @ e2, rel @ e1)
        loop = tuple(on[np.argsort(ang)])
        faces.append(Face(len(kept_planes), loop))
        kept_planes.append(pl)

    edge_faces: dict[tuple, list[int]] = {}
    for fi, face in enumerate(faces):
        loop = face.loop
        for a, b in zip(loop, loop[1:] + loop[:1]):
            key = (min(a, b), max(a, b))
            edge_faces.setdefault(key, []).append(fi)
    edges = []
    for (a, b), incident in sorted(edge_faces.items()):
        if len(incident) != 2:
            raise CellError("unbounded or degenerate cell (open edge)")
        edges.append(Edge(a, b, tuple(incident)))

    if len(verts) - len(edges) + len(faces) != 2:
        raise CellError("cell incidence fails Euler's formula")
    return ConvexCell(tuple(kept_planes), verts, tuple(edges), tuple(faces))


def box_cell(box_min, box_max) -> ConvexCell:
    """Axis-aligned box as a ConvexCell."""
    lo = np.asarray(box_min, dtype=float)
    hi = np.asarray(box_max, dtype=float)
    if not np.all(lo < hi):
        raise CellError("degenerate box (min must be < max componentwise)")
    planes = []
    for axis in range(3):
        n = np.zeros(3)
        n[axis] = -1.0
        planes.append(Plane(n.copy(), -lo[axis]))
        n = np.zeros(3)
        n[axis] = 1.0
        planes.append(Plane(n, hi[axis]))
    return cell_from_planes(planes)


# ---------------------------------------------------------------------------
# sheet classification

class SheetClass(Enum):
    NO_SURFACE = "no-surface"
    SINGLE_SHEET = "single-sheet"
    AMBIGUOUS = "multi-sheet-or-ambiguous"


def field_scale_in(field, cell: ConvexCell) -> float:
    """Magnitude scale of F over the cell, from its vertices (at least 1)."""
    vals = field.values(cell.vertices)
    finite = vals[np.isfinite(vals)]
    if not len(finite):
        return 1.0
    return max(1.0, float(np.max(np.abs(finite))))


def _face_grid(cell: ConvexCell, face: Face, samples: int):
    """In-plane sample grid over a face polygon: points and inside-mask."""
    pl = cell.planes[face.plane_index]
    e1, e2 = pl.basis()
    poly = cell.vertices[list(face.loop)]
    origin = poly.mean(axis=0)
    uv = np.column_stack([(poly - origin) @ e1, (poly - origin) @ e2])
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    us = np.linspace(lo[0], hi[0], samples)
    vs = np.linspace(lo[1], hi[1], samples)
    U, V = np.meshgrid(us, vs, indexing="ij")
    grid_uv = np.column_stack([U.ravel(), V.ravel()])
    # convex polygon inside-test in 2D (loop is CCW in this basis)
    inside = np.ones(len(grid_uv), dtype=bool)
    margin = 1e-12 * (1.0 + float(np.max(np.abs(uv))))
    for i in range(len(uv)):
        a, b = uv[i], uv[(i + 1) % len(uv)]
        e = b - a
        rel = grid_uv - a
        inside &= (e[0] * rel[:, 1] - e[1] * rel[:, 0]) >= -margin
    pts = origin + grid_uv[:, 0:1] * e1 + grid_uv[:, 1:2] * e2
    return pts, inside.reshape(samples, samples), (samples, samples)


def _count_components(mask: np.ndarray, full: bool = False) -> int:
    """Connected components; ``full`` switches face/corner adjacency on.

    Box cells use 6-connectivity (4 in 2D) on their complete grids.  General
    cells sample a masked subset of their bounding-box grid, where thin
    regions near skewed corners fall apart under 6-connectivity even though
    they are connected inside the (convex) cell; full connectivity repairs
    that masking artifact.
    """
    if not mask.any():
        return 0
    structure = ndimage.generate_binary_structure(mask.ndim, mask.ndim if full else 1)
    _, count = ndimage.label(mask, structure=structure)
    return int(count)


def _is_box(cell: ConvexCell) -> bool:
    for pl in cell.planes:
        if np.count_nonzero(np.abs(pl.normal) > 1e-12) != 1:
            return False
    return True


def _edge_sign_changes(field, cell: ConvexCell, edge: Edge, samples: int,
                       tie: float) -> int:
    a, b = cell.edge_points(edge)
    t = np.linspace(0.0, 1.0, samples)[:, None]
    pts = a + t * (b - a)
    neg = field.values(pts) < tie
    return int(np.count_nonzero(neg[1:] != neg[:-1]))


def sheet_test(field, cell: ConvexCell, samples_per_axis: int = 8) -> SheetClass:
    """Classify how the zero set of ``field`` meets ``cell``.

    Heuristic, conservative: "single-sheet" asserts that patch extraction
    can succeed, "multi-sheet-or-ambiguous" requests subdivision.
    """
    if samples_per_axis < 4:
        raise CellError("samples_per_axis must be >= 4")
    s = samples_per_axis
    tie = TIE_FACTOR * field_scale_in(field, cell)
    full_conn = not _is_box(cell)

    lo, hi = cell.bounding_box()
    axes = [np.linspace(lo[i], hi[i], s) for i in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    in_cell = cell.contains(pts, eps=1e-12 * (1.0 + cell.diameter)).reshape(s, s, s)
    vals = field.values(pts).reshape(s, s, s)
    neg = (vals < tie) & in_cell
    pos = (vals >= tie) & in_cell

    face_data = []
    any_face_change = False
    for face in cell.faces:
        fpts, fmask, shape = _face_grid(cell, face, s)
        fvals = field.values(fpts).reshape(shape)
        fneg = (fvals < tie) & fmask
        fpos = (fvals >= tie) & fmask
        face_data.append((fneg, fpos))
        if fneg.any() and fpos.any():
            any_face_change = True

    edge_changes = [_edge_sign_changes(field, cell, e, s, tie) for e in cell.edges]

    interior_change = neg.any() and pos.any()
    if not interior_change and not any_face_change and not any(edge_changes):
        return SheetClass.NO_SURFACE

    # (c) at most one crossing per edge at this resolution
    if any(c > 1 for c in edge_changes):
        return SheetClass.AMBIGUOUS

    # (b) every face meets the surface in one open arc or not at all
    edge_lookup = {(e.a, e.b): ei for ei, e in enumerate(cell.edges)}
    for face, (fneg, fpos) in zip(cell.faces, face_data):
        crossings = 0
        for a, b in zip(face.loop, face.loop[1:] + face.loop[:1]):
            ei = edge_lookup[(min(a, b), max(a, b))]
            crossings += 1 if edge_changes[ei] % 2 == 1 else 0
        if crossings == 0:
            if fneg.any() and fpos.any():
                return SheetClass.AMBIGUOUS  # closed curve inside the face
        elif crossings == 2:
            if (_count_components(fneg, full_conn) > 1
                    or _count_components(fpos, full_conn) > 1):
                return SheetClass.AMBIGUOUS
        else:
            return SheetClass.AMBIGUOUS

    # (d) a boundary loop needs at least 3 corner points
    total_crossings = sum(1 for c in edge_changes if c % 2 == 1)
    if total_crossings < 3:
        return SheetClass.AMBIGUOUS

    # (a) one connected component per sign in the volume
    if (_count_components(neg, full_conn) > 1
            or _count_components(pos, full_conn) > 1):
        return SheetClass.AMBIGUOUS
    return SheetClass.SINGLE_SHEET


# ---------------------------------------------------------------------------
# octree

@dataclass
class OctreeNode:
    box_min: np.ndarray
    box_max: np.ndarray
    depth: int
    status: str = "empty"  # empty | single-sheet | subdivided | depth-limited
    children: list = dc_field(default_factory=list)

    def leaves(self):
        if not self.children:
            yield self
        else:
            for child in self.children:
                yield from child.leaves()

    def surface_leaves(self):
        return [leaf for leaf in self.leaves() if leaf.status == "single-sheet"]

    def cell(self) -> ConvexCell:
        return box_cell(self.box_min, self.box_max)


def subdivide_box(box_min, box_max):
    """The 8 child boxes, split at exact float midpoints, x-fastest order."""
    lo = np.asarray(box_min, dtype=float)
    hi = np.asarray(box_max, dtype=float)
    mid = 0.5 * (lo + hi)
    out = []
    for k in range(8):
        cmin = np.array([lo[i] if not (k >> i) & 1 else mid[i] for i in range(3)])
        cmax = np.array([mid[i] if not (k >> i) & 1 else hi[i] for i in range(3)])
        out.append((cmin, cmax))
    return out


def build_octree(field, box_min, box_max, max_depth: int = 8,
                 samples_per_axis: int = 8) -> OctreeNode:
    """Subdivide until every surface-carrying leaf is single-sheet.

    Leaves that still look ambiguous at ``max_depth`` are flagged
    "depth-limited" so downstream stages can report them as rejected.
    """
    if max_depth < 0:
        raise CellError("max_depth must be >= 0")

    def build(lo, hi, depth):
        node = OctreeNode(np.asarray(lo, float), np.asarray(hi, float), depth)
        cls = sheet_test(field, box_cell(lo, hi), samples_per_axis)
        if cls is SheetClass.NO_SURFACE:
            node.status = "empty"
        elif cls is SheetClass.SINGLE_SHEET:
            node.status = "single-sheet"
        elif depth >= max_depth:
            node.status = "depth-limited"
        else:
            node.status = "subdivided"
            node.children = [build(clo, chi, depth + 1)
                             for clo, chi in subdivide_box(lo, hi)]
        return node

    return build(box_min, box_max, 0)
