"""Matched-detail benchmark: Marching Cubes versus patch projection.

"Same level of detail" is operationalized as a common target on the
maximum chordal error, the distance from triangle-edge midpoints to the
surface measured along the field gradient.  For each level the projection
pipeline raises its domain resolution and Marching Cubes refines its grid
spacing until both meet the target; vertex counts and the median wall time
of the final tessellation call over repeated runs are reported.

The space partition is shared input for all levels and both methods: its
construction is not part of the timed region, which covers patch
extraction, base meshing, projection and welding for the projection rows,
and grid sampling plus polygonization for the Marching Cubes rows.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .mc import GridSpec, marching_cubes
from .mesh import TriangleMesh
from .pipeline import (OctreeSpec, TessellationOptions, TessellationResult,
                       build_octree, tessellate)


class BenchError(Exception):
    pass


@dataclass(frozen=True)
class BenchRow:
    method: str
    level: int
    error_target: float
    vertices: int
    triangles: int
    time_ms: float
    chordal_error: float
    mean_abs_f: float
    detail: str  # resolution / spacing actually used
    status: str = "ok"  # "ok" | "rejected"


CSV_HEADER = ("method,level,error_target,vertices,triangles,time_ms,"
              "chordal_error,mean_abs_f,detail,status")


def edge_midpoints(mesh: TriangleMesh) -> np.ndarray:
    t = mesh.triangles
    e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    e = np.unique(e, axis=0)
    return 0.5 * (mesh.positions[e[:, 0]] + mesh.positions[e[:, 1]])


def distance_to_surface(field, pts: np.ndarray, max_steps: int = 60) -> np.ndarray:
    """Distance from each point to the zero set along the local gradient.

    Marches along -sign(F) * normalize(grad F) with expanding brackets, then
    bisects.  Points already on the surface report 0.
    """
    pts = np.asarray(pts, dtype=float)
    f0 = field.values(pts)
    grads = field.gradients(pts)
    gn = np.linalg.norm(grads, axis=1)
    gn[gn == 0] = 1.0
    dirs = -np.sign(f0)[:, None] * grads / gn[:, None]

    # first-order guess sets the bracket scale
    guess = np.abs(f0) / gn
    lo = np.zeros(len(pts))
    hi = guess.copy()
    hi[hi == 0] = 1e-300
    active = np.abs(f0) > 0
    sign0 = np.sign(f0)
    for _ in range(max_steps):
        if not active.any():
            break
        rows = np.nonzero(active)[0]
        probe = pts[rows] + hi[rows, None] * dirs[rows]
        fh = field.values(probe)
        flipped = np.sign(fh) != sign0[rows]
        active[rows[flipped]] = False
        lo[rows[~flipped]] = hi[rows[~flipped]]
        hi[rows[~flipped]] *= 2.0
    if active.any():
        raise BenchError("chordal-error probe found no surface along gradient")

    for _ in range(80):
        mid = 0.5 * (lo + hi)
        probe = pts + mid[:, None] * dirs
        fm = field.values(probe)
        same = np.sign(fm) == sign0
        lo = np.where(same & (np.abs(f0) > 0), mid, lo)
        hi = np.where(same | (np.abs(f0) == 0), hi, mid)
    return 0.5 * (lo + hi)


def max_chordal_error(field, mesh: TriangleMesh) -> float:
    mids = edge_midpoints(mesh)
    if not len(mids):
        return 0.0
    return float(np.max(distance_to_surface(field, mids)))


def mean_abs_residual(field, mesh: TriangleMesh) -> float:
    if not mesh.vertex_count:
        return 0.0
    return float(np.mean(np.abs(field.values(mesh.positions))))


def _median_time(fn, repetitions: int):
    times = []
    result = None
    for _ in range(repetitions):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return result, 1e3 * float(np.median(times))


def run_benchmark(field, root_box, levels, opts: TessellationOptions | None = None,
                  max_depth: int = 8, samples_per_axis: int = 8,
                  repetitions: int = 5, max_resolution: int = 40) -> list:
    """Benchmark projection against Marching Cubes at matched chordal error.

    ``levels`` are decreasing maximum-chordal-error targets.  Returns one
    BenchRow per (method, level).  Density strictly increases across
    levels: each search resumes above the previous level's setting.
    """
    if not levels:
        raise BenchError("need at least one error level")
    levels = list(levels)
    if any(b >= a for a, b in zip(levels, levels[1:])):
        raise BenchError("error levels must strictly decrease")
    opts = opts or TessellationOptions()

    lo, hi = (np.asarray(root_box[0], float), np.asarray(root_box[1], float))
    octree = build_octree(field, lo, hi, max_depth, samples_per_axis)

    rows = []
    resolution = 1
    spacing = float(np.max(hi - lo)) / 8.0
    for level, target in enumerate(levels):
        # projection: smallest resolution above the previous level's
        found = None
        r = resolution + 1
        while r <= max_resolution:
            run = tessellate(field, octree, replace(opts, resolution=r),
                             samples_per_axis)
            if not run.all_accepted:
                found = ("rejected", r, run)
                break
            err = max_chordal_error(field, run.mesh)
            if err <= target:
                found = ("ok", r, run)
                break
            r += 1
        if found is None:
            raise BenchError(f"no resolution <= {max_resolution} meets "
                             f"error target {target}")
        status, r, run = found
        resolution = r
        if status == "rejected":
            rows.append(BenchRow("projection", level, target, 0, 0, 0.0,
                                 np.nan, np.nan, f"r={r}", "rejected"))
        else:
            final = replace(opts, resolution=r)
            run, ms = _median_time(
                lambda: tessellate(field, octree, final, samples_per_axis),
                repetitions)
            rows.append(BenchRow("projection", level, target,
                                 run.mesh.vertex_count, run.mesh.triangle_count,
                                 ms, max_chordal_error(field, run.mesh),
                                 mean_abs_residual(field, run.mesh), f"r={r}"))

        # marching cubes: halve the spacing until the target is met
        s = spacing / 2.0
        while True:
            spec = GridSpec.from_box(lo, hi, s)
            mesh = marching_cubes(field, spec)
            if mesh.triangle_count and max_chordal_error(field, mesh) <= target:
                break
            s /= 2.0
            if s < 1e-6 * float(np.max(hi - lo)):
                raise BenchError("marching cubes spacing search diverged")
        spacing = s
        spec = GridSpec.from_box(lo, hi, s)
        mesh, ms = _median_time(lambda: marching_cubes(field, spec), repetitions)
        rows.append(BenchRow("mc", level, target, mesh.vertex_count,
                             mesh.triangle_count, ms,
                             max_chordal_error(field, mesh),
                             mean_abs_residual(field, mesh), f"h={s:.6g}"))
    return rows


def rows_to_csv(rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(f"{r.method},{r.level},{r.error_target:.6g},{r.vertices},"
                     f"{r.triangles},{r.time_ms:.3f},{r.chordal_error:.6g},"
                     f"{r.mean_abs_f:.6g},{r.detail},{r.status}")
    return "\n".join(lines) + "\n"


def rows_to_markdown(rows) -> str:
    """Two-column comparison table in the style of an efficiency report."""
    by_level: dict[int, dict] = {}
    for r in rows:
        by_level.setdefault(r.level, {})[r.method] = r
    lines = ["| Marching cubes vertices | Time | Projection vertices | Time |",
             "|---|---|---|---|"]
    for level in sorted(by_level):
        mc_row = by_level[level].get("mc")
        pr_row = by_level[level].get("projection")

        def fmt(row):
            if row is None or row.status != "ok":
                return "rejected", ""
            return str(row.vertices), f"{row.time_ms:.1f}ms"

        mv, mt = fmt(mc_row)
        pv, pt = fmt(pr_row)
        lines.append(f"| {mv} | {mt} | {pv} | {pt} |")
    return "\n".join(lines) + "\n"
