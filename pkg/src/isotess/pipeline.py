"""End-to-end tessellation: partition, patch extraction, base, projection.

Cells come either from an octree over a root box or from an explicit list
of convex cells.  Each single-sheet cell yields one projected patch;
accepted patches weld into the output mesh, rejected cells are reported
with their reason.  Octree cells that fail patch extraction or projection
are subdivided and retried down to the depth limit; explicit cells cannot
be subdivided and report their rejection directly.

With ``threads > 1`` cells are processed concurrently; every cell's work is
independent and results are welded in cell order, so the output is
bit-identical for any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .base_surface import BaseMesh, base_mesh_corners, base_mesh_transfinite
from .mesh import TriangleMesh, empty_mesh, weld
from .partition import (ConvexCell, OctreeNode, SheetClass, box_cell,
                        build_octree, sheet_test, subdivide_box)
from .patch import (PatchError, build_boundary_loop, find_corner_points,
                    trace_all_sides)
from .projection import ProjectedPatch, ProjectionConfig, project_patch


class PipelineError(Exception):
    pass


@dataclass(frozen=True)
class OctreeSpec:
    box_min: tuple
    box_max: tuple
    max_depth: int = 8
    samples_per_axis: int = 8


@dataclass
class TessellationOptions:
    base: str = "corners"              # "corners" | "transfinite"
    resolution: int = 4
    projection: ProjectionConfig = dc_field(default_factory=ProjectionConfig)
    threads: int = 1
    trace_step_fraction: float = 1.0 / 32.0
    weld_tolerance: float | None = None  # None: 1e-9 x output bbox diagonal

    def __post_init__(self):
        if self.base not in ("corners", "transfinite"):
            raise PipelineError(f"unknown base type {self.base!r}")
        if self.resolution < 1:
            raise PipelineError("resolution must be >= 1")
        if self.threads < 1:
            raise PipelineError("threads must be >= 1")


@dataclass
class CellOutcome:
    label: str
    status: str        # "accepted" | "rejected"
    reason: str | None
    sides: int | None
    patch: ProjectedPatch | None


@dataclass
class TessellationResult:
    mesh: TriangleMesh
    outcomes: list
    octree: OctreeNode | None = None

    @property
    def accepted(self):
        return [o for o in self.outcomes if o.status == "accepted"]

    @property
    def rejected(self):
        return [o for o in self.outcomes if o.status == "rejected"]

    @property
    def all_accepted(self) -> bool:
        return not self.rejected


class _DomainCache:
    """Process-wide cache of domain triangulations keyed by (n, resolution)."""

    def __init__(self):
        self._cache = {}

    def get(self, n: int, resolution: int):
        key = (n, resolution)
        mesh = self._cache.get(key)
        if mesh is None:
            from .domain import triangulate_ngon
            mesh = triangulate_ngon(n, resolution)
            self._cache[key] = mesh
        return mesh


_domains = _DomainCache()


def build_patch(field, cell: ConvexCell, opts: TessellationOptions,
                trace_cache: dict | None = None) -> ProjectedPatch:
    """Run one cell through corners, loop, base surface, and projection."""
    corners = find_corner_points(field, cell)
    boundary = build_boundary_loop(field, cell, corners)
    dm = _domains.get(boundary.n, opts.resolution)
    if opts.base == "transfinite":
        trace_all_sides(field, boundary, opts.trace_step_fraction, trace_cache)
        base = base_mesh_transfinite(boundary, dm)
    else:
        base = base_mesh_corners(boundary, dm)
    return project_patch(field, base, boundary.corner_dirs, opts.projection)


def _process_box(field, lo, hi, depth, max_depth, samples, opts,
                 label, trace_cache) -> list:
    """Patch one octree box, subdividing on failure until the depth limit."""
    cell = box_cell(lo, hi)
    cls = sheet_test(field, cell, samples)
    if cls is SheetClass.NO_SURFACE:
        return []
    failure = None
    if cls is SheetClass.SINGLE_SHEET:
        try:
            patch = build_patch(field, cell, opts, trace_cache)
        except PatchError as exc:
            failure = str(exc)
        else:
            if patch.accepted:
                return [CellOutcome(label, "accepted", None, patch.base.n, patch)]
            failure = patch.reason
            if depth >= max_depth:
                return [CellOutcome(label, "rejected", failure, patch.base.n, patch)]
    if depth >= max_depth:
        reason = failure or "ambiguous sheet structure at the depth limit"
        return [CellOutcome(label, "rejected", reason, None, None)]
    out = []
    for k, (clo, chi) in enumerate(subdivide_box(lo, hi)):
        out.extend(_process_box(field, clo, chi, depth + 1, max_depth, samples,
                                opts, f"{label}.{k}", trace_cache))
    return out


def _process_explicit(field, cell: ConvexCell, samples, opts, label,
                      trace_cache) -> list:
    cls = sheet_test(field, cell, samples)
    if cls is SheetClass.NO_SURFACE:
        return []
    if cls is SheetClass.AMBIGUOUS:
        return [CellOutcome(label, "rejected",
                            "multi-sheet or ambiguous cell (cannot subdivide "
                            "an explicit cell)", None, None)]
    try:
        patch = build_patch(field, cell, opts, trace_cache)
    except PatchError as exc:
        return [CellOutcome(label, "rejected", str(exc), None, None)]
    status = "accepted" if patch.accepted else "rejected"
    return [CellOutcome(label, status, patch.reason, patch.base.n, patch)]


def tessellate(field, partition, opts: TessellationOptions | None = None,
               samples_per_axis: int = 8) -> TessellationResult:
    """Tessellate the zero set of ``field`` over a partition.

    ``partition`` is an OctreeSpec, an already built OctreeNode, or a list
    of ConvexCell.  Returns the welded mesh of all accepted patches plus
    per-cell outcomes; per-vertex normals from the field gradient ride along
    on the output mesh.
    """
    opts = opts or TessellationOptions()
    trace_cache: dict | None = {} if opts.base == "transfinite" else None
    octree = None

    retry_depth = None
    if isinstance(partition, OctreeSpec):
        octree = build_octree(field, partition.box_min, partition.box_max,
                              partition.max_depth, partition.samples_per_axis)
        samples_per_axis = partition.samples_per_axis
        retry_depth = partition.max_depth
        partition = octree

    if isinstance(partition, OctreeNode):
        if retry_depth is None:
            retry_depth = max(leaf.depth for leaf in partition.leaves()) + 2
        max_depth = retry_depth
        tasks = []
        for i, leaf in enumerate(partition.leaves()):
            if leaf.status == "empty":
                continue
            tasks.append((f"cell{i}", leaf))

        def run_leaf(item):
            label, leaf = item
            if leaf.status == "depth-limited":
                return [CellOutcome(label, "rejected",
                                    "ambiguous sheet structure at the octree "
                                    "depth limit", None, None)]
            return _process_box(field, leaf.box_min, leaf.box_max, leaf.depth,
                                max_depth, samples_per_axis, opts, label,
                                trace_cache)

        outcome_lists = _run_tasks(run_leaf, tasks, opts.threads)
    else:
        cells = list(partition)
        tasks = [(f"cell{i}", c) for i, c in enumerate(cells)]

        def run_cell(item):
            label, cell = item
            return _process_explicit(field, cell, samples_per_axis, opts,
                                     label, trace_cache)

        outcome_lists = _run_tasks(run_cell, tasks, opts.threads)

    outcomes = [o for sub in outcome_lists for o in sub]
    accepted = [o.patch.mesh for o in outcomes if o.status == "accepted"]
    if accepted:
        tol = opts.weld_tolerance
        if tol is None:
            lo = np.min([m.positions.min(axis=0) for m in accepted], axis=0)
            hi = np.max([m.positions.max(axis=0) for m in accepted], axis=0)
            tol = 1e-9 * float(np.linalg.norm(hi - lo))
        mesh = weld(accepted, tol)
    else:
        mesh = empty_mesh()

    if field is not None and mesh.vertex_count:
        grads = field.gradients(mesh.positions)
        norms = np.linalg.norm(grads, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        mesh.normals = grads / norms

    return TessellationResult(mesh, outcomes, octree)


def _run_tasks(fn, tasks, threads: int):
    if threads == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))
