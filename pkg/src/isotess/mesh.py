"""Indexed triangle meshes: welding, manifold audit, OBJ/PLY export.

Positions are float64 (V, 3) arrays, triangles int64 (T, 3) index triples.
Meshes may carry named per-vertex scalar channels and optional per-vertex
normals.  Instances are treated as immutable once built.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(Exception):
    pass


@dataclass
class TriangleMesh:
    positions: np.ndarray
    triangles: np.ndarray
    channels: dict = field(default_factory=dict)
    normals: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles):
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.positions):
                raise MeshError("triangle index out of range")
            t = self.triangles
            if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
                raise MeshError("degenerate triangle (repeated vertex index)")
        for name, values in self.channels.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (len(self.positions),):
                raise MeshError(f"channel {name!r} length mismatch")
            self.channels[name] = values
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(self.normals) != len(self.positions):
                raise MeshError("normals length mismatch")

    @property
    def vertex_count(self) -> int:
        return len(self.positions)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def bounding_box(self):
        if not len(self.positions):
            return np.zeros(3), np.zeros(3)
        return self.positions.min(axis=0), self.positions.max(axis=0)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs, (E, 2)."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)


def empty_mesh() -> TriangleMesh:
    return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


# ---------------------------------------------------------------------------
# welding

def weld(meshes, tolerance: float = 0.0) -> TriangleMesh:
    """Concatenate meshes and merge vertices closer than ``tolerance``.

    Zero tolerance merges bit-identical positions only.  Scalar channels
    present on every input are averaged across merged vertices; normals are
    averaged and renormalized when all inputs carry them.  Triangles that
    collapse under merging are dropped.
    """
    meshes = [m for m in meshes]
    if tolerance < 0:
        raise MeshError("weld tolerance must be >= 0")
    if not meshes:
        return empty_mesh()

    shared_channels = set(meshes[0].channels)
    for m in meshes[1:]:
        shared_channels &= set(m.channels)
    keep_normals = all(m.normals is not None for m in meshes)

    out_positions: list[np.ndarray] = []
    cells: dict = {}

    def lookup(p: np.ndarray):
        if tolerance == 0.0:
            return cells.get(p.tobytes())
        key = tuple(np.floor(p / tolerance).astype(np.int64))
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    for idx in cells.get((key[0] + dx, key[1] + dy, key[2] + dz), ()):
                        if np.linalg.norm(out_positions[idx] - p) <= tolerance:
                            return idx
        return None

    def register(p: np.ndarray, idx: int):
        if tolerance == 0.0:
            cells[p.tobytes()] = idx
        else:
            key = tuple(np.floor(p / tolerance).astype(np.int64))
            cells.setdefault(key, []).append(idx)

    tris = []
    channel_sums = {name: [] for name in shared_channels}
    normal_sums: list[np.ndarray] = []
    counts: list[int] = []

    for m in meshes:
        remap = np.empty(m.vertex_count, dtype=np.int64)
        for vi in range(m.vertex_count):
            p = m.positions[vi]
            idx = lookup(p)
            if idx is None:
                idx = len(out_positions)
                out_positions.append(p.copy())
                register(p, idx)
                counts.append(0)
                for name in shared_channels:
                    channel_sums[name].append(0.0)
                if keep_normals:
                    normal_sums.append(np.zeros(3))
            remap[vi] = idx
            counts[idx] += 1
            for name in shared_channels:
                channel_sums[name][idx] += m.channels[name][vi]
            if keep_normals:
                normal_sums[idx] += m.normals[vi]
        if len(m.triangles):
            tris.append(remap[m.triangles])

    positions = np.array(out_positions).reshape(-1, 3)
    triangles = np.vstack(tris) if tris else np.zeros((0, 3), dtype=np.int64)
    if len(triangles):
        ok = ((triangles[:, 0] != triangles[:, 1])
              & (triangles[:, 1] != triangles[:, 2])
              & (triangles[:, 0] != triangles[:, 2]))
        triangles = triangles[ok]

    counts_arr = np.array(counts, dtype=float) if counts else np.zeros(0)
    channels = {}
    for name in shared_channels:
        channels[name] = np.array(channel_sums[name]) / counts_arr
    normals = None
    if keep_normals and len(positions):
        normals = np.array(normal_sums)
        norms = np.linalg.norm(normals, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        normals = normals / norms
    return TriangleMesh(positions, triangles, channels, normals)


# ---------------------------------------------------------------------------
# manifold audit

@dataclass(frozen=True)
class ManifoldReport:
    closed: bool
    euler: int
    boundary_loops: int
    nonmanifold_edges: int
    vertex_count: int
    edge_count: int
    triangle_count: int


def manifold_audit(mesh: TriangleMesh) -> ManifoldReport:
    """Edge-incidence audit: closedness, Euler number, boundary loops."""
    t = mesh.triangles
    if not len(t):
        return ManifoldReport(False, mesh.vertex_count, 0, 0,
                              mesh.vertex_count, 0, 0)
    e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    edges, counts = np.unique(e, axis=0, return_counts=True)
    nonmanifold = int(np.sum(counts > 2))
    closed = bool(np.all(counts == 2))
    euler = mesh.vertex_count - len(edges) + len(t)

    boundary = edges[counts == 1]
    loops = 0
    if len(boundary):
        adj: dict[int, list[int]] = {}
        for a, b in boundary:
            adj.setdefault(int(a), []).append(int(b))
            adj.setdefault(int(b), []).append(int(a))
        seen: set[int] = set()
        for start in adj:
            if start in seen:
                continue
            loops += 1
            stack = [start]
            while stack:
                v = stack.pop()
                if v in seen:
                    continue
                seen.add(v)
                stack.extend(w for w in adj[v] if w not in seen)
    return ManifoldReport(closed, euler, loops, nonmanifold,
                          mesh.vertex_count, len(edges), len(t))


# ---------------------------------------------------------------------------
# color transfer functions for PLY export

_VIRIDIS = np.array([
    [0.267004, 0.004874, 0.329415], [0.282623, 0.140926, 0.457517],
    [0.253935, 0.265254, 0.529983], [0.206756, 0.371758, 0.553117],
    [0.163625, 0.471133, 0.558148], [0.127568, 0.566949, 0.550556],
    [0.134692, 0.658636, 0.517649], [0.266941, 0.748751, 0.440573],
    [0.477504, 0.821444, 0.318195], [0.741388, 0.873449, 0.149561],
    [0.993248, 0.906157, 0.143936],
])


def apply_colormap(values: np.ndarray, name: str = "viridis") -> np.ndarray:
    """Map scalars to uint8 RGB spanning the channel's min..max."""
    values = np.asarray(values, dtype=float)
    lo, hi = float(np.min(values)), float(np.max(values))
    t = np.zeros_like(values) if hi == lo else (values - lo) / (hi - lo)
    if name == "viridis":
        idx = t * (len(_VIRIDIS) - 1)
        i0 = np.clip(idx.astype(int), 0, len(_VIRIDIS) - 2)
        frac = (idx - i0)[:, None]
        rgb = _VIRIDIS[i0] * (1 - frac) + _VIRIDIS[i0 + 1] * frac
    elif name == "redblue":
        rgb = np.column_stack([1.0 - t, np.zeros_like(t), t])
    else:
        raise MeshError(f"unknown colormap {name!r}")
    return np.clip(np.round(rgb * 255), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# OBJ

def write_obj(mesh: TriangleMesh, path) -> None:
    """ASCII OBJ with 17 significant digits; channels go to sidecar CSVs.

    A channel named ``c`` on ``mesh.obj`` is written to ``mesh.c.csv`` with
    columns (vertex index, value).
    """
    path = Path(path)
    lines = []
    for p in mesh.positions:
        lines.append(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}")
    if mesh.normals is not None:
        for nrm in mesh.normals:
            lines.append(f"vn {nrm[0]:.17g} {nrm[1]:.17g} {nrm[2]:.17g}")
        for t in mesh.triangles:
            lines.append(f"f {t[0]+1}//{t[0]+1} {t[1]+1}//{t[1]+1} {t[2]+1}//{t[2]+1}")
    else:
        for t in mesh.triangles:
            lines.append(f"f {t[0]+1} {t[1]+1} {t[2]+1}")
    path.write_text("\n".join(lines) + "\n")
    for name, values in mesh.channels.items():
        sidecar = path.with_name(f"{path.stem}.{name}.csv")
        with sidecar.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["vertex", name])
            for i, v in enumerate(values):
                writer.writerow([i, f"{v:.17g}"])


def read_obj(path) -> TriangleMesh:
    positions = []
    normals = []
    tris = []
    for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            positions.append([float(x) for x in parts[1:4]])
        elif tag == "vn":
            normals.append([float(x) for x in parts[1:4]])
        elif tag == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            if len(idx) < 3:
                raise MeshError(f"malformed face at line {ln}")
            for k in range(1, len(idx) - 1):
                tris.append([idx[0], idx[k], idx[k + 1]])
    positions = np.array(positions).reshape(-1, 3)
    nrm = None
    if normals and len(normals) == len(positions):
        nrm = np.array(normals)
    return TriangleMesh(positions, np.array(tris, dtype=np.int64).reshape(-1, 3),
                        normals=nrm)


# ---------------------------------------------------------------------------
# PLY (ascii)

def write_ply(mesh: TriangleMesh, path, color_channel: str | None = None,
              colormap: str = "viridis") -> None:
    """ASCII PLY; scalar channels become float properties, one channel may
    additionally be rendered as per-vertex RGB via a transfer function."""
    path = Path(path)
    if color_channel is None and mesh.channels:
        color_channel = next(iter(mesh.channels))
    if color_channel is not None and color_channel not in mesh.channels:
        raise MeshError(f"no channel {color_channel!r} to colorize")

    header = ["ply", "format ascii 1.0",
              f"element vertex {mesh.vertex_count}",
              "property double x", "property double y", "property double z"]
    if mesh.normals is not None:
        header += ["property double nx", "property double ny", "property double nz"]
    for name in mesh.channels:
        header.append(f"property double {name}")
    if color_channel is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header += [f"element face {mesh.triangle_count}",
               "property list uchar int vertex_indices", "end_header"]

    rgb = None
    if color_channel is not None:
        rgb = apply_colormap(mesh.channels[color_channel], colormap)

    lines = header
    for i in range(mesh.vertex_count):
        parts = [f"{c:.17g}" for c in mesh.positions[i]]
        if mesh.normals is not None:
            parts += [f"{c:.17g}" for c in mesh.normals[i]]
        for name in mesh.channels:
            parts.append(f"{mesh.channels[name][i]:.17g}")
        if rgb is not None:
            parts += [str(c) for c in rgb[i]]
        lines.append(" ".join(parts))
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    path.write_text("\n".join(lines) + "\n")


def read_ply(path) -> TriangleMesh:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "ply":
        raise MeshError("not a PLY file")
    i = 1
    vertex_props: list[str] = []
    n_vertices = n_faces = 0
    current = None
    while i < len(text):
        line = text[i].strip()
        i += 1
        if line == "end_header":
            break
        parts = line.split()
        if parts[0] == "format" and parts[1] != "ascii":
            raise MeshError("only ascii PLY supported")
        if parts[0] == "element":
            current = parts[1]
            if current == "vertex":
                n_vertices = int(parts[2])
            elif current == "face":
                n_faces = int(parts[2])
        elif parts[0] == "property" and current == "vertex" and parts[1] != "list":
            vertex_props.append(parts[2])
    else:
        raise MeshError("missing end_header")

    rows = []
    for k in range(n_vertices):
        rows.append([float(x) for x in text[i + k].split()])
    data = np.array(rows).reshape(n_vertices, -1) if n_vertices else np.zeros((0, len(vertex_props)))
    cols = {name: j for j, name in enumerate(vertex_props)}
    for axis in ("x", "y", "z"):
        if axis not in cols:
            raise MeshError("PLY lacks vertex coordinates")
    positions = data[:, [cols["x"], cols["y"], cols["z"]]]
    normals = None
    if all(a in cols for a in ("nx", "ny", "nz")):
        normals = data[:, [cols["nx"], cols["ny"], cols["nz"]]]
    skip = {"x", "y", "z", "nx", "ny", "nz", "red", "green", "blue", "alpha"}
    channels = {name: data[:, j] for name, j in cols.items() if name not in skip}

    tris = []
    for k in range(n_faces):
        parts = [int(x) for x in text[i + n_vertices + k].split()]
        count, idx = parts[0], parts[1:]
        if count != len(idx):
            raise MeshError("malformed PLY face row")
        for j in range(1, count - 1):
            tris.append([idx[0], idx[j], idx[j + 1]])
    return TriangleMesh(positions, np.array(tris, dtype=np.int64).reshape(-1, 3),
                        channels, normals)


def export_mesh(mesh: TriangleMesh, path, fmt: str | None = None, **kwargs) -> None:
    fmt = fmt or Path(path).suffix.lstrip(".").lower()
    if fmt == "obj":
        write_obj(mesh, path)
    elif fmt == "ply":
        write_ply(mesh, path, **kwargs)
    else:
        raise MeshError(f"unknown mesh format {fmt!r}")


def import_mesh(path) -> TriangleMesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return read_obj(path)
    if suffix == ".ply":
        return read_ply(path)
    raise MeshError(f"unknown mesh format {suffix!r}")
