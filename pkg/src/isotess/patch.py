"""Patch boundary extraction inside a single-sheet cell.

Corner points are isosurface crossings on cell edges, found by bisection.
Faces holding two corners connect them into a closed loop; the loop is
oriented so its approximate normal points into the positive half-space,
which makes the triangulated patch face outward (toward F > 0).  Boundary
curves on faces can be traced as dense polylines with a predictor-corrector
march for the transfinite base surface.

Roots on cell edges are bracketed and bisected on the lexicographically
smaller endpoint first, so neighbouring cells that share an edge compute
bit-identical corner points.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .partition import ConvexCell, Edge, Plane, TIE_FACTOR, field_scale_in


class PatchError(Exception):
    pass


class PatchTopologyError(PatchError):
    """Corner/loop structure inconsistent; the cell should be subdivided."""


class TraceError(PatchError):
    """Boundary-curve march failed; the cell should be subdivided."""


TOL_ROOT_FACTOR = 1e-10   # |F| at accepted roots, times local field scale
TOL_X = 1e-12             # bracket width in edge-parameter units
EDGE_SCAN_SAMPLES = 64    # samples when checking edges for multiple roots


@dataclass
class Side:
    face_plane: Plane
    polyline: np.ndarray | None = None  # (K, 3) from corner i to corner i+1


@dataclass
class PatchBoundary:
    corners: np.ndarray          # (n, 3) ordered around the loop
    corner_dirs: np.ndarray      # (n, 3) unit cell-edge directions, F>0 side
    sides: list                  # n Side records; side i joins corner i, i+1
    cell: ConvexCell
    field_scale: float

    @property
    def n(self) -> int:
        return len(self.corners)

    @property
    def tol_root(self) -> float:
        return TOL_ROOT_FACTOR * self.field_scale


def _bisect_edge(field, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Root of F on segment a-b by bisection.

    Terminates when |F| < 1e-10 * edge field scale and the bracket is below
    1e-12 in parameter units.  The caller passes endpoints in canonical
    order so shared edges yield shared bits.
    """
    fa = field.value(a)
    fb = field.value(b)
    scale = max(1.0, abs(fa), abs(fb))
    tol_root = TOL_ROOT_FACTOR * scale
    tie = TIE_FACTOR * scale
    neg_a = fa < tie
    lo, hi = 0.0, 1.0
    mid = 0.5
    p = a + mid * (b - a)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        p = a + mid * (b - a)
        fm = field.value(p)
        if abs(fm) < tol_root and (hi - lo) < TOL_X:
            return p
        if (fm < tie) == neg_a:
            lo = mid
        else:
            hi = mid
    if abs(field.value(p)) < tol_root:
        return p
    raise PatchError("edge bisection failed to converge")


def find_corner_points(field, cell: ConvexCell):
    """Isosurface crossings on cell edges: list of (edge index, point).

    Edges whose endpoints share a sign yield nothing.  An edge showing more
    than one crossing at fine sampling raises PatchTopologyError (the cell
    needs subdivision).
    """
    scale = field_scale_in(field, cell)
    tie = TIE_FACTOR * scale
    out = []
    for ei, edge in enumerate(cell.edges):
        a, b = cell.edge_points(edge)
        t = np.linspace(0.0, 1.0, EDGE_SCAN_SAMPLES)[:, None]
        neg = field.values(a + t * (b - a)) < tie
        changes = int(np.count_nonzero(neg[1:] != neg[:-1]))
        if changes == 0:
            continue
        if changes > 1:
            raise PatchTopologyError(
                f"edge {ei} crosses the surface {changes} times; subdivide the cell")
        out.append((ei, _bisect_edge(field, a, b)))
    return out


def _corner_direction(field, cell: ConvexCell, edge: Edge) -> np.ndarray:
    """Unit vector along the hosting edge, toward the F > 0 endpoint."""
    a, b = cell.edge_points(edge)
    fa, fb = field.value(a), field.value(b)
    scale = max(1.0, abs(fa), abs(fb))
    tie = TIE_FACTOR * scale
    if fb >= tie and fa < tie:
        d = b - a
    elif fa >= tie and fb < tie:
        d = a - b
    else:
        raise PatchError("edge endpoints do not straddle the surface")
    return d / np.linalg.norm(d)


def build_boundary_loop(field, cell: ConvexCell, corner_points) -> PatchBoundary:
    """Order corner points into one closed loop by walking cell faces.

    Every face must hold 0 or 2 corners.  The loop is oriented so that its
    polygon normal aligns with the mean surface gradient at the corners,
    i.e. the patch faces the positive half-space.
    """
    if len(corner_points) < 3:
        raise PatchTopologyError(
            f"only {len(corner_points)} corner points; no loop can close")
    edge_of = [cell.edges[ei] for ei, _ in corner_points]
    pts = np.array([p for _, p in corner_points])

    face_corners: dict[int, list[int]] = {}
    for ci, edge in enumerate(edge_of):
        for fi in edge.faces:
            face_corners.setdefault(fi, []).append(ci)
    links: dict[int, list[tuple[int, int]]] = {ci: [] for ci in range(len(pts))}
    for fi, cs in face_corners.items():
        if len(cs) != 2:
            raise PatchTopologyError(
                f"face {fi} holds {len(cs)} corner points; subdivide the cell")
        a, b = cs
        links[a].append((b, fi))
        links[b].append((a, fi))

    for ci in links:
        if len(links[ci]) != 2:
            raise PatchTopologyError("corner points do not chain into a loop")

    order = [0]
    faces_used = []
    nxt, face = links[0][0]
    faces_used.append(face)
    while nxt != 0:
        order.append(nxt)
        options = [(c, f) for c, f in links[nxt] if f != faces_used[-1]]
        if len(options) != 1:
            raise PatchTopologyError("corner points do not chain into a loop")
        nxt, face = options[0]
        faces_used.append(face)
    if len(order) != len(pts):
        raise PatchTopologyError(
            "multiple disjoint boundary loops; subdivide the cell")

    loop_pts = pts[order]
    # Newell normal of the loop polygon
    normal = np.sum(np.cross(loop_pts, np.roll(loop_pts, -1, axis=0)), axis=0)
    grads = field.gradients(loop_pts)
    mean_grad = grads.mean(axis=0)
    if normal @ mean_grad < 0.0:
        order = order[::-1]
        # side i must join corner i and i+1: faces shift by one on reversal
        faces_used = faces_used[::-1]
        faces_used = faces_used[1:] + faces_used[:1]
        loop_pts = pts[order]

    corner_dirs = np.array([_corner_direction(field, cell, edge_of[ci])
                            for ci in order])
    sides = [Side(cell.planes[cell.faces[fi].plane_index]) for fi in faces_used]
    return PatchBoundary(loop_pts, corner_dirs, sides, cell,
                         field_scale_in(field, cell))


def tol_curve_for(field, cell: ConvexCell) -> float:
    return 1e-8 * (1.0 + field_scale_in(field, cell))


def trace_boundary_curve(field, face_plane: Plane, corner_a, corner_b,
                         step: float, tol_curve: float | None = None) -> np.ndarray:
    """March the curve F = 0 within a face plane from corner_a to corner_b.

    Predictor: step along the in-plane tangent normalize(n x grad F).
    Corrector: in-plane Newton p <- p - F(p) g_par / |g_par|^2 until
    |F| < tol_curve, re-projecting onto the plane each iteration.  The march
    snaps to corner_b once within 1.5 * step of it.
    """
    a = np.asarray(corner_a, dtype=float)
    b = np.asarray(corner_b, dtype=float)
    if tol_curve is None:
        tol_curve = 1e-8 * (1.0 + max(abs(field.value(a)), abs(field.value(b))))
    n = face_plane.normal
    chord = np.linalg.norm(b - a)
    if chord == 0.0:
        raise TraceError("degenerate side: coincident corners")
    max_length = 10.0 * chord

    def project_plane(p):
        return p - (p @ n - face_plane.offset) * n

    def correct(p):
        for _ in range(20):
            f = field.value(p)
            if abs(f) < tol_curve:
                return p
            g = field.gradient(p)
            g_par = g - (g @ n) * n
            norm2 = g_par @ g_par
            if norm2 == 0.0:
                raise TraceError("vanishing in-plane gradient during trace")
            p = project_plane(p - f * g_par / norm2)
        raise TraceError("corrector failed to reduce |F| in 20 iterations")

    points = [a]
    p = a
    prev_t = None
    travelled = 0.0
    while True:
        if np.linalg.norm(b - p) <= 1.5 * step:
            points.append(b)
            break
        g = field.gradient(p)
        t = np.cross(n, g)
        t_norm = np.linalg.norm(t)
        if t_norm == 0.0:
            raise TraceError("tangent undefined (gradient parallel to face)")
        t = t / t_norm
        if prev_t is None:
            if t @ (b - a) < 0.0:
                t = -t
        elif t @ prev_t < 0.0:
            t = -t
        prev_t = t
        p = correct(project_plane(p + step * t))
        points.append(p)
        travelled += step
        if travelled > max_length:
            raise TraceError("boundary march exceeded 10x the corner distance")
    return np.array(points)


def trace_all_sides(field, boundary: PatchBoundary,
                    step_fraction: float = 1.0 / 32.0,
                    cache: dict | None = None) -> None:
    """Fill every side of ``boundary`` with a traced polyline (in place).

    The step is ``step_fraction`` times the face polygon diameter.  Curves
    are traced between lexicographically ordered corners so that, via the
    optional cross-cell ``cache``, neighbouring patches reuse the exact same
    polyline for their shared side.
    """
    tol = tol_curve_for(field, boundary.cell)
    for i, side in enumerate(boundary.sides):
        ca = boundary.corners[i]
        cb = boundary.corners[(i + 1) % boundary.n]
        flipped = tuple(ca) > tuple(cb)
        lo, hi = (cb, ca) if flipped else (ca, cb)
        key = None
        if cache is not None:
            key = (lo.tobytes(), hi.tobytes())
            cached = cache.get(key)
            if cached is not None:
                side.polyline = cached[::-1] if flipped else cached
                continue
        pl = side.face_plane
        face_pts = [f for f in boundary.cell.faces
                    if boundary.cell.planes[f.plane_index] is pl]
        verts = boundary.cell.vertices[list(face_pts[0].loop)]
        diam = max(float(np.linalg.norm(u - v))
                   for u in verts for v in verts)
        poly = trace_boundary_curve(field, pl, lo, hi, step_fraction * diam, tol)
        if cache is not None:
            cache[key] = poly
        side.polyline = poly[::-1] if flipped else poly
