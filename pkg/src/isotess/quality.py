"""Mesh quality metrics: discrete curvatures, isophotes, valence stats.

Mean curvature uses the cotangent Laplace-Beltrami operator with mixed
Voronoi vertex areas (barycentric third for obtuse triangles); Gaussian
curvature is the angle defect over the same areas.  Curvature magnitudes
are sign-resolved against per-vertex normals when available: positive where
the surface bends away from the normal, so a unit sphere with outward
normals reports +1.  Boundary vertices have incomplete one-rings and are
flagged unreliable; statistics exclude them.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .mesh import MeshError, TriangleMesh


def triangle_normals_areas(mesh: TriangleMesh):
    t = mesh.triangles
    p = mesh.positions
    cross = np.cross(p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]])
    area2 = np.linalg.norm(cross, axis=1)
    normals = np.zeros_like(cross)
    nz = area2 > 0
    normals[nz] = cross[nz] / area2[nz, None]
    return normals, 0.5 * area2


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted average of incident triangle normals."""
    tn, ta = triangle_normals_areas(mesh)
    out = np.zeros_like(mesh.positions)
    for k in range(3):
        np.add.at(out, mesh.triangles[:, k], tn * ta[:, None])
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return out / norms


def boundary_vertices(mesh: TriangleMesh) -> np.ndarray:
    """Boolean mask of vertices touching a boundary edge."""
    t = mesh.triangles
    mask = np.zeros(mesh.vertex_count, dtype=bool)
    if not len(t):
        return mask
    e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    mask[np.unique(uniq[counts == 1])] = True
    return mask


def _corner_angles(mesh: TriangleMesh) -> np.ndarray:
    """Interior angle at each triangle corner, (T, 3)."""
    p = mesh.positions
    t = mesh.triangles
    angles = np.zeros((len(t), 3))
    for k in range(3):
        a = p[t[:, k]]
        b = p[t[:, (k + 1) % 3]]
        c = p[t[:, (k + 2) % 3]]
        u = b - a
        v = c - a
        nu = np.linalg.norm(u, axis=1)
        nv = np.linalg.norm(v, axis=1)
        denom = nu * nv
        denom[denom == 0] = 1.0
        cosang = np.clip(np.einsum("ij,ij->i", u, v) / denom, -1.0, 1.0)
        angles[:, k] = np.arccos(cosang)
    return angles


def mixed_vertex_areas(mesh: TriangleMesh) -> np.ndarray:
    """Mixed Voronoi vertex areas (see ``_mixed_areas_flagged``)."""
    return _mixed_areas_flagged(mesh)[0]


def _mixed_areas_flagged(mesh: TriangleMesh):
    """Mixed Voronoi vertex areas plus a degeneracy mask.

    Circumcentric (Voronoi) shares accumulated per triangle corner; they are
    the exact dual of the cotangent weights, which keeps the curvature
    operator consistent even on anisotropic one-rings.  A vertex whose
    accumulated Voronoi area degenerates (possible around very obtuse
    triangles) falls back to the barycentric third of its incident area and
    comes back flagged so curvature statistics can exclude it.
    """
    p = mesh.positions
    t = mesh.triangles
    angles = _corner_angles(mesh)
    _, ta = triangle_normals_areas(mesh)
    areas = np.zeros(mesh.vertex_count)
    thirds = np.zeros(mesh.vertex_count)
    with np.errstate(divide="ignore", invalid="ignore"):
        cot = 1.0 / np.tan(angles)
    cot = np.where(np.isfinite(cot), cot, 0.0)
    # Voronoi share at corner a: (|e_ab|^2 cot C + |e_ac|^2 cot B) / 8
    for k in range(3):
        a = p[t[:, k]]
        b = p[t[:, (k + 1) % 3]]
        c = p[t[:, (k + 2) % 3]]
        lab2 = np.sum((b - a) ** 2, axis=1)
        lac2 = np.sum((c - a) ** 2, axis=1)
        share = (lab2 * cot[:, (k + 2) % 3] + lac2 * cot[:, (k + 1) % 3]) / 8.0
        np.add.at(areas, t[:, k], share)
        np.add.at(thirds, t[:, k], ta / 3.0)
    degenerate = areas <= 1e-12 * thirds
    return np.where(degenerate, thirds, areas), degenerate


def cotangent_laplacian_vectors(mesh: TriangleMesh) -> np.ndarray:
    """Sum_j (cot a_ij + cot b_ij)(p_j - p_i) per vertex, unnormalized."""
    p = mesh.positions
    t = mesh.triangles
    angles = _corner_angles(mesh)
    out = np.zeros_like(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        cot = 1.0 / np.tan(angles)
    cot = np.where(np.isfinite(cot), cot, 0.0)
    for k in range(3):
        i = t[:, (k + 1) % 3]
        j = t[:, (k + 2) % 3]
        w = cot[:, k][:, None]
        np.add.at(out, i, w * (p[j] - p[i]))
        np.add.at(out, j, w * (p[i] - p[j]))
    return out


def mean_curvature(mesh: TriangleMesh, normals: np.ndarray | None = None):
    """Per-vertex discrete mean curvature and a reliability mask.

    Returns (H, boundary_mask).  H = |laplacian| / 2 per unit mixed area,
    signed against ``normals`` when given (positive = bending away from the
    normal); unsigned magnitudes otherwise.  Boundary vertices and vertices
    with degenerate mixed areas are flagged.
    """
    areas, degenerate = _mixed_areas_flagged(mesh)
    lap = cotangent_laplacian_vectors(mesh)
    bad = degenerate | (areas <= 0)
    safe = np.where(areas <= 0, 1.0, areas)
    lap = lap / (2.0 * safe[:, None])
    h = 0.5 * np.linalg.norm(lap, axis=1)
    if normals is not None:
        agree = np.einsum("ij,ij->i", lap, np.asarray(normals, dtype=float))
        h = np.where(agree < 0, h, -h)
    boundary = boundary_vertices(mesh) | bad
    return h, boundary


def gaussian_curvature(mesh: TriangleMesh):
    """Angle-defect Gaussian curvature per vertex and a reliability mask."""
    angles = _corner_angles(mesh)
    areas, degenerate = _mixed_areas_flagged(mesh)
    angle_sum = np.zeros(mesh.vertex_count)
    for k in range(3):
        np.add.at(angle_sum, mesh.triangles[:, k], angles[:, k])
    bad = degenerate | (areas <= 0)
    safe = np.where(areas <= 0, 1.0, areas)
    k_val = (2.0 * np.pi - angle_sum) / safe
    boundary = boundary_vertices(mesh) | bad
    return k_val, boundary


@dataclass(frozen=True)
class IsophoteResult:
    banded: np.ndarray  # per-vertex band index as float
    raw: np.ndarray     # per-vertex n . view


def isophotes(mesh: TriangleMesh, view_dir, bands: int = 8,
              normals: np.ndarray | None = None) -> IsophoteResult:
    """Quantized n . view per vertex for banded shading diagnostics."""
    if bands < 1:
        raise MeshError("bands must be >= 1")
    view = np.asarray(view_dir, dtype=float)
    norm = np.linalg.norm(view)
    if norm == 0:
        raise MeshError("view direction must be nonzero")
    view = view / norm
    if normals is None:
        normals = mesh.normals if mesh.normals is not None else vertex_normals(mesh)
    lengths = np.linalg.norm(normals, axis=1)
    if np.any(lengths == 0):
        raise MeshError("zero-length normal in isophote input")
    raw = (normals / lengths[:, None]) @ view
    lo, hi = float(raw.min()), float(raw.max())
    if hi == lo:
        banded = np.zeros_like(raw)
    else:
        banded = np.minimum((raw - lo) / (hi - lo) * bands, bands - 1).astype(int)
    return IsophoteResult(np.asarray(banded, dtype=float), raw)


@dataclass(frozen=True)
class ValenceHistogram:
    interior: dict
    boundary: dict

    def support(self) -> set:
        return set(self.interior) | set(self.boundary)


def valence_histogram(mesh: TriangleMesh) -> ValenceHistogram:
    """Vertex degree counts, split into interior and boundary vertices."""
    edges = mesh.edges()
    degree = np.zeros(mesh.vertex_count, dtype=int)
    for col in (0, 1):
        np.add.at(degree, edges[:, col], 1)
    boundary = boundary_vertices(mesh)
    interior_counts: dict[int, int] = {}
    boundary_counts: dict[int, int] = {}
    for v in range(mesh.vertex_count):
        target = boundary_counts if boundary[v] else interior_counts
        target[int(degree[v])] = target.get(int(degree[v]), 0) + 1
    return ValenceHistogram(interior_counts, boundary_counts)


@dataclass(frozen=True)
class TriangleQuality:
    min_angles: np.ndarray    # degrees, per triangle
    radius_ratios: np.ndarray  # circumradius / shortest edge
    percentiles: dict

    @staticmethod
    def percentile_keys():
        return (5, 25, 50, 75, 95)


def triangle_quality(mesh: TriangleMesh) -> TriangleQuality:
    """Min interior angle and circumradius-to-shortest-edge per triangle."""
    angles = _corner_angles(mesh)
    min_angles = np.degrees(angles.min(axis=1))
    p = mesh.positions
    t = mesh.triangles
    la = np.linalg.norm(p[t[:, 1]] - p[t[:, 2]], axis=1)
    lb = np.linalg.norm(p[t[:, 0]] - p[t[:, 2]], axis=1)
    lc = np.linalg.norm(p[t[:, 0]] - p[t[:, 1]], axis=1)
    _, area = triangle_normals_areas(mesh)
    shortest = np.minimum(np.minimum(la, lb), lc)
    with np.errstate(divide="ignore", invalid="ignore"):
        circumradius = la * lb * lc / (4.0 * area)
        ratios = circumradius / shortest
    ratios = np.where(np.isfinite(ratios), ratios, np.inf)
    percentiles = {q: float(np.percentile(min_angles, q))
                   for q in TriangleQuality.percentile_keys()}
    return TriangleQuality(min_angles, ratios, percentiles)


@dataclass
class QualityReport:
    valences: ValenceHistogram
    min_angle_percentiles: dict
    mean_curvature: np.ndarray
    gaussian_curvature: np.ndarray
    isophote: IsophoteResult
    curvature_reliable: np.ndarray  # per-vertex bool (False on boundary)
    residual_max: float | None = None   # max |F| over vertices, needs a field
    residual_rms: float | None = None
    notes: list = dc_field(default_factory=list)

    def channels(self) -> dict:
        return {
            "mean_curvature": self.mean_curvature,
            "gaussian_curvature": self.gaussian_curvature,
            "isophote": self.isophote.banded,
        }

    def to_text(self) -> str:
        lines = []
        for note in self.notes:
            lines.append(f"# {note}")
        reliable = self.curvature_reliable
        if reliable.any():
            h = self.mean_curvature[reliable]
            k = self.gaussian_curvature[reliable]
            lines.append(f"mean_curvature_mean {np.mean(h):.12g}")
            lines.append(f"mean_curvature_rms {np.sqrt(np.mean(h * h)):.12g}")
            lines.append(f"gaussian_curvature_mean {np.mean(k):.12g}")
        if self.residual_max is not None:
            lines.append(f"residual_max {self.residual_max:.12g}")
            lines.append(f"residual_rms {self.residual_rms:.12g}")
        for q, v in sorted(self.min_angle_percentiles.items()):
            lines.append(f"min_angle_p{q} {v:.6g}")
        for label, hist in (("interior", self.valences.interior),
                            ("boundary", self.valences.boundary)):
            for valence in sorted(hist):
                lines.append(f"valence_{label}_{valence} {hist[valence]}")
        return "\n".join(lines) + "\n"


def quality_report(mesh: TriangleMesh, field=None, view_dir=(0.0, 0.0, 1.0),
                   bands: int = 8) -> QualityReport:
    """Assemble the full quality report for a mesh.

    With a field, normals come from the gradient and curvature is signed;
    without one the curvature is unsigned magnitude (documented behaviour
    for externally produced meshes).
    """
    notes = []
    if field is not None:
        grads = field.gradients(mesh.positions)
        norms = np.linalg.norm(grads, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        normals = grads / norms
        h, bmask = mean_curvature(mesh, normals)
    else:
        normals = mesh.normals
        h, bmask = mean_curvature(mesh, None)
        notes.append("no field given: mean curvature is unsigned magnitude")
    k, _ = gaussian_curvature(mesh)
    iso = isophotes(mesh, view_dir, bands, normals)
    tq = triangle_quality(mesh)
    report = QualityReport(valence_histogram(mesh), tq.percentiles, h, k, iso,
                           ~bmask, notes=notes)
    if field is not None:
        residuals = np.abs(field.values(mesh.positions))
        report.residual_max = float(residuals.max()) if len(residuals) else 0.0
        report.residual_rms = (float(np.sqrt(np.mean(residuals ** 2)))
                               if len(residuals) else 0.0)
    return report
