"""Marching Cubes baseline on a uniform grid, plus Laplacian fairing.

Plain table-driven Marching Cubes: each cube maps its 8 corner signs to a
256-case triangle table, crossing vertices come from linear interpolation
of the sampled values, and shared grid edges weld exactly through integer
edge keys.  Field values within 1e-12 of zero at lattice points are nudged
to the inside so no vertex ever lands exactly on a lattice point.
Triangles are wound so their normals face the positive side of the field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._mc_tables import CUBE_CORNERS, CUBE_EDGES, TRIANGLE_TABLE
from .mesh import MeshError, TriangleMesh, empty_mesh, manifold_audit


class GridError(Exception):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform sampling lattice: origin corner, spacing, samples per axis."""

    origin: tuple
    spacing: float
    dims: tuple  # (nx, ny, nz), number of lattice points per axis

    def __post_init__(self):
        if any(d < 2 for d in self.dims):
            raise GridError("grid needs at least 2 samples per axis")
        if self.spacing <= 0:
            raise GridError("grid spacing must be positive")

    @staticmethod
    def from_box(box_min, box_max, spacing: float) -> "GridSpec":
        lo = np.asarray(box_min, dtype=float)
        hi = np.asarray(box_max, dtype=float)
        if not np.all(hi > lo):
            raise GridError("degenerate grid box")
        dims = tuple(int(np.ceil((hi[i] - lo[i]) / spacing)) + 1 for i in range(3))
        return GridSpec(tuple(lo), float(spacing), dims)

    def lattice(self):
        axes = [self.origin[i] + self.spacing * np.arange(self.dims[i])
                for i in range(3)]
        return axes


@dataclass
class SampleGrid:
    spec: GridSpec
    values: np.ndarray  # (nx, ny, nz)

    def __post_init__(self):
        if self.values.shape != tuple(self.spec.dims):
            raise GridError("grid values shape mismatch")


def sample_grid(field, spec: GridSpec) -> SampleGrid:
    ax, ay, az = spec.lattice()
    X, Y, Z = np.meshgrid(ax, ay, az, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    vals = field.values(pts).reshape(spec.dims)
    if np.any(~np.isfinite(vals)):
        raise GridError("field not finite over the sampling grid")
    return SampleGrid(spec, vals)


def marching_cubes(field, grid_spec: GridSpec | SampleGrid) -> TriangleMesh:
    """Polygonize the zero set of ``field`` over a uniform grid."""
    grid = grid_spec if isinstance(grid_spec, SampleGrid) else sample_grid(field, grid_spec)
    spec = grid.spec
    values = grid.values.copy()

    scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
    tie = 1e-12 * scale
    near_zero = np.abs(values) <= tie
    if near_zero.any():
        values[near_zero] = -tie

    inside = values < 0.0
    nx, ny, nz = spec.dims
    config = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.uint16)
    for bit, (cx, cy, cz) in enumerate(CUBE_CORNERS):
        corner = inside[cx:nx - 1 + cx, cy:ny - 1 + cy, cz:nz - 1 + cz]
        config |= corner.astype(np.uint16) << bit
    crossing = np.argwhere((config != 0) & (config != 255))
    if not len(crossing):
        return empty_mesh()

    origin = np.asarray(spec.origin, dtype=float)
    h = spec.spacing
    positions: list[np.ndarray] = []
    edge_vertex: dict[tuple, int] = {}
    triangles: list[list[int]] = []

    # axis identity of each cube edge lets shared edges share one global key
    edge_axis = []
    for a, b in CUBE_EDGES:
        ca, cb = CUBE_CORNERS[a], CUBE_CORNERS[b]
        axis = next(i for i in range(3) if ca[i] != cb[i])
        low = ca if ca[axis] < cb[axis] else cb
        edge_axis.append((axis, low))

    for ix, iy, iz in crossing:
        case = TRIANGLE_TABLE[config[ix, iy, iz]]
        cube = (int(ix), int(iy), int(iz))
        vidx = {}
        for e in set(case):
            axis, low = edge_axis[e]
            base = (cube[0] + low[0], cube[1] + low[1], cube[2] + low[2])
            key = (base, axis)
            idx = edge_vertex.get(key)
            if idx is None:
                va = values[base]
                nb = list(base)
                nb[axis] += 1
                vb = values[tuple(nb)]
                t = va / (va - vb)
                p = origin + h * np.array(base, dtype=float)
                p[axis] += h * t
                idx = len(positions)
                positions.append(p)
                edge_vertex[key] = idx
            vidx[e] = idx
        for k in range(0, len(case), 3):
            # table winding faces the negative side; flip toward positive
            tri = [vidx[case[k]], vidx[case[k + 2]], vidx[case[k + 1]]]
            if tri[0] != tri[1] and tri[1] != tri[2] and tri[0] != tri[2]:
                triangles.append(tri)

    return TriangleMesh(np.array(positions),
                        np.array(triangles, dtype=np.int64).reshape(-1, 3))


def laplacian_fairing(mesh: TriangleMesh, iterations: int, step: float,
                      keep_boundary: bool = True) -> TriangleMesh:
    """Uniform-weight Laplacian smoothing v <- v + step * (centroid(N(v)) - v).

    Boundary vertices stay fixed; connectivity is untouched.  Raises on
    non-manifold input.
    """
    if not (0.0 < step < 1.0):
        raise MeshError("fairing step must be in (0, 1)")
    if iterations < 0:
        raise MeshError("iterations must be >= 0")
    report = manifold_audit(mesh)
    if report.nonmanifold_edges:
        raise MeshError("fairing requires a manifold mesh")

    edges = mesh.edges()
    t = mesh.triangles
    e_all = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e_all.sort(axis=1)
    uniq, counts = np.unique(e_all, axis=0, return_counts=True)
    boundary_vertices = np.unique(uniq[counts == 1]) if len(uniq) else []
    movable = np.ones(mesh.vertex_count, dtype=bool)
    if keep_boundary:
        movable[boundary_vertices] = False

    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    degree = np.zeros(mesh.vertex_count)
    np.add.at(degree, src, 1.0)
    degree[degree == 0] = 1.0

    pos = mesh.positions.copy()
    for _ in range(iterations):
        acc = np.zeros_like(pos)
        np.add.at(acc, src, pos[dst])
        centroid = acc / degree[:, None]
        pos[movable] += step * (centroid[movable] - pos[movable])
    return TriangleMesh(pos, mesh.triangles.copy(),
                        dict(mesh.channels),
                        None if mesh.normals is None else mesh.normals.copy())
