"""Projection of base-mesh vertices onto the isosurface along fixed lines.

Each vertex carries a ray direction interpolated from the patch corner
directions with its barycentric coordinates.  Marching steps along the ray
away from or toward the positive half-space depending on the sign of F at
the start, brackets the first sign flip, and bisects it down to the root
tolerance.  A patch is accepted only if every projected vertex hit the
surface and the angle between its ray line and the surface gradient at the
hit stays below the configured threshold; otherwise the whole patch is
rejected for the caller to subdivide the cell and retry.

All vertices of a patch are marched in lockstep as one array; the scalar
``project_vertex`` runs the same code on a single row, so results agree
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base_surface import BaseMesh
from .mesh import TriangleMesh
from .partition import ConvexCell
from .patch import PatchBoundary, TOL_ROOT_FACTOR


class ProjectionError(Exception):
    pass


class VertexMissError(ProjectionError):
    """The ray never crossed the surface within the march budget."""


@dataclass(frozen=True)
class ProjectionConfig:
    """March parameters; lengths are relative to the cell diameter.

    ``march_step`` of None means cell diameter / 256.  ``angle_threshold``
    is in degrees, strictly between 0 and 90.
    """

    max_march_distance: float = 2.0
    march_step: float | None = None
    angle_threshold: float = 80.0

    def __post_init__(self):
        if not (0.0 < self.angle_threshold < 90.0):
            raise ProjectionError("angle_threshold must be in (0, 90) degrees")
        if self.march_step is not None and self.march_step <= 0:
            raise ProjectionError("march_step must be positive")
        if self.max_march_distance <= 0:
            raise ProjectionError("max_march_distance must be positive")

    def resolved_step(self, cell_diameter: float) -> float:
        if self.march_step is not None:
            return self.march_step * cell_diameter
        return cell_diameter / 256.0


@dataclass
class ProjectedPatch:
    mesh: TriangleMesh
    directions: np.ndarray   # (V, 3) ray directions used
    hit_params: np.ndarray   # (V,) march distance to the hit (NaN if unmoved)
    angles: np.ndarray       # (V,) degrees between ray line and gradient
    projected: np.ndarray    # (V,) bool, vertices the projection applied to
    status: str              # "accepted" | "rejected"
    reason: str | None = None
    base: BaseMesh | None = None

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"


def corner_directions(field, cell: ConvexCell, boundary: PatchBoundary,
                      eps_rel: float = 1e-9) -> np.ndarray:
    """Per-corner unit direction along the hosting cell edge, toward F > 0.

    Each corner is matched back to a cell edge within eps; this recomputes
    what ``build_boundary_loop`` stored and must agree with it.
    """
    eps = eps_rel * cell.diameter
    out = np.zeros((boundary.n, 3))
    for i, corner in enumerate(boundary.corners):
        host = None
        for edge in cell.edges:
            a, b = cell.edge_points(edge)
            ab = b - a
            t = np.clip((corner - a) @ ab / (ab @ ab), 0.0, 1.0)
            if np.linalg.norm(a + t * ab - corner) <= eps:
                host = (a, b)
                break
        if host is None:
            raise ProjectionError(f"corner {i} lies on no cell edge")
        a, b = host
        d = b - a
        if field.value(b) < field.value(a):
            d = -d
        out[i] = d / np.linalg.norm(d)
    return out


def interpolate_directions(corner_dirs: np.ndarray, base: BaseMesh) -> np.ndarray:
    """Barycentric interpolation of corner directions, normalized per vertex.

    Raises ProjectionError if any interpolated direction nearly vanishes
    (patch must be rejected).
    """
    raw = base.bary @ np.asarray(corner_dirs, dtype=float)
    norms = np.linalg.norm(raw, axis=1)
    bad = np.nonzero(norms < 1e-9)[0]
    if len(bad):
        raise ProjectionError(
            f"interpolated direction vanishes at vertex {int(bad[0])}")
    return raw / norms[:, None]


def _march_batch(field, starts: np.ndarray, dirs: np.ndarray, step: float,
                 max_dist: float):
    """Lockstep ray march + bisection for a batch of vertices.

    Returns (points, t_hit, converged, f0).  Rows with F(start) == 0 are
    returned unchanged with t_hit = 0.  Rows that never bracket a sign flip
    or fail to reach tolerance come back with converged = False.
    """
    starts = np.asarray(starts, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    m = len(starts)
    f0 = field.values(starts)
    if np.any(~np.isfinite(f0)):
        raise ProjectionError("field not evaluable at a projection start")
    tol_root = TOL_ROOT_FACTOR * np.maximum(1.0, np.abs(f0))

    signed_dirs = np.where(f0[:, None] > 0.0, -dirs, dirs)
    points = starts.copy()
    t_hit = np.zeros(m)
    converged = f0 == 0.0
    active = ~converged

    lo = np.zeros(m)
    hi = np.zeros(m)
    f_prev = f0.copy()
    bracketed = np.zeros(m, dtype=bool)
    n_steps = int(np.ceil(max_dist / step))
    for i in range(1, n_steps + 1):
        if not active.any():
            break
        t = i * step
        probe = starts[active] + t * signed_dirs[active]
        fv = field.values(probe)
        rows = np.nonzero(active)[0]
        flip = (fv == 0.0) | (np.sign(fv) != np.sign(f_prev[rows]))
        flip &= np.isfinite(fv)
        hit_rows = rows[flip]
        lo[hit_rows] = (i - 1) * step
        hi[hit_rows] = t
        bracketed[hit_rows] = True
        active[hit_rows] = False
        keep = rows[~flip]
        f_prev[keep] = fv[~flip]
        active[rows[~np.isfinite(fv)]] = False

    # bisect every bracketed row
    rows = np.nonzero(bracketed)[0]
    sign0 = np.sign(f0[rows])
    blo, bhi = lo[rows].copy(), hi[rows].copy()
    done = np.zeros(len(rows), dtype=bool)
    mid = 0.5 * (blo + bhi)
    for _ in range(200):
        todo = ~done
        if not todo.any():
            break
        mid[todo] = 0.5 * (blo[todo] + bhi[todo])
        probe = starts[rows[todo]] + mid[todo][:, None] * signed_dirs[rows[todo]]
        fm = field.values(probe)
        ok = np.abs(fm) < tol_root[rows[todo]]
        same = np.sign(fm) == sign0[todo]
        idx = np.nonzero(todo)[0]
        blo[idx[same]] = mid[idx[same]]
        bhi[idx[~same]] = mid[idx[~same]]
        done[idx[ok]] = True
        stuck = (bhi[idx] - blo[idx]) == 0.0
        if stuck.any():
            # bracket exhausted double precision without meeting tolerance
            for j in idx[stuck & ~ok]:
                done[j] = True
                bracketed[rows[j]] = False

    ok_rows = rows[bracketed[rows]]
    local = {r: k for k, r in enumerate(rows)}
    for r in ok_rows:
        t = mid[local[r]]
        t_hit[r] = t
        points[r] = starts[r] + t * signed_dirs[r]
        converged[r] = True
    return points, t_hit, converged, f0


def _line_gradient_angles(field, points: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Acute angle in degrees between each ray line and grad F at its point."""
    grads = field.gradients(points)
    gn = np.linalg.norm(grads, axis=1)
    cosine = np.zeros(len(points))
    nz = gn > 0
    cosine[nz] = np.abs(np.einsum("ij,ij->i", dirs[nz], grads[nz])) / gn[nz]
    return np.degrees(np.arccos(np.clip(cosine, 0.0, 1.0)))


def project_vertex(field, p, d, cfg: ProjectionConfig,
                   cell_diameter: float = 1.0):
    """Project one point along +-d onto the surface.

    Returns (hit point, angle in degrees between the ray line and the
    gradient at the hit).  A start already on the surface (F exactly 0) is
    returned unchanged with the angle evaluated there.  Raises
    VertexMissError when no sign flip occurs within the march budget.
    """
    p = np.asarray(p, dtype=float)
    d = np.asarray(d, dtype=float)
    step = cfg.resolved_step(cell_diameter)
    max_dist = cfg.max_march_distance * cell_diameter
    pts, _, converged, _ = _march_batch(field, p[None, :], d[None, :], step, max_dist)
    if not converged[0]:
        raise VertexMissError("no isosurface hit within the march distance")
    angle = _line_gradient_angles(field, pts, d[None, :])[0]
    return pts[0], float(angle)


def project_patch(field, base: BaseMesh, corner_dirs: np.ndarray,
                  cfg: ProjectionConfig) -> ProjectedPatch:
    """Project a base mesh onto the surface, keeping its boundary contract.

    Corner vertices never move.  For a transfinite base the remaining
    boundary vertices stay in place as well (their curves were already
    traced); for a corners-only base they are projected and remain inside
    their face planes because their rays lie in those planes.
    """
    cell = base.boundary.cell
    diameter = cell.diameter
    step = cfg.resolved_step(diameter)
    max_dist = cfg.max_march_distance * diameter

    try:
        dirs = interpolate_directions(corner_dirs, base)
    except ProjectionError as exc:
        v = base.mesh.vertex_count
        return ProjectedPatch(base.mesh, np.zeros((v, 3)), np.full(v, np.nan),
                              np.full(v, np.nan), np.zeros(v, dtype=bool),
                              "rejected", f"degenerate direction: {exc}", base)

    fixed = base.is_corner().copy()
    if base.provenance == "transfinite":
        fixed |= base.is_boundary()
    moving = np.nonzero(~fixed)[0]

    positions = base.mesh.positions.copy()
    t_hit = np.full(base.mesh.vertex_count, np.nan)
    angles = np.full(base.mesh.vertex_count, np.nan)
    status, reason = "accepted", None

    if len(moving):
        pts, t, converged, _ = _march_batch(
            field, positions[moving], dirs[moving], step, max_dist)
        positions[moving] = pts
        t_hit[moving] = t
        angles[moving] = _line_gradient_angles(field, pts, dirs[moving])
        if not converged.all():
            worst = int(moving[np.nonzero(~converged)[0][0]])
            status = "rejected"
            reason = (f"vertex {worst} missed the surface within "
                      f"{cfg.max_march_distance} cell diameters")
        else:
            worst_local = int(np.argmax(angles[moving]))
            worst_angle = float(angles[moving][worst_local])
            if worst_angle >= cfg.angle_threshold:
                status = "rejected"
                reason = (f"gradient angle {worst_angle:.2f} deg at vertex "
                          f"{int(moving[worst_local])} exceeds the "
                          f"{cfg.angle_threshold:.2f} deg angle threshold")

    mesh = TriangleMesh(positions, base.mesh.triangles.copy())
    return ProjectedPatch(mesh, dirs, t_hit, angles, ~fixed, status, reason, base)
