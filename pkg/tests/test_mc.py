import numpy as np
import pytest

from isotess.field import field_from_expr, sphere
from isotess.mc import (GridError, GridSpec, laplacian_fairing, marching_cubes,
                        sample_grid)
from isotess.mesh import MeshError, TriangleMesh, manifold_audit
from isotess.quality import triangle_quality, valence_histogram


SPHERE_GRID = GridSpec.from_box((-1.5, -1.5, -1.5), (1.5, 1.5, 1.5), 0.1)


class TestGridSpec:
    def test_from_box(self):
        spec = GridSpec.from_box((0, 0, 0), (1, 1, 1), 0.25)
        assert spec.dims == (5, 5, 5)

    def test_invalid(self):
        with pytest.raises(GridError):
            GridSpec((0, 0, 0), 0.1, (1, 5, 5))
        with pytest.raises(GridError):
            GridSpec((0, 0, 0), -1.0, (5, 5, 5))

    def test_sample_grid_values(self, unit_sphere):
        spec = GridSpec.from_box((-1, -1, -1), (1, 1, 1), 0.5)
        grid = sample_grid(unit_sphere, spec)
        assert grid.values.shape == (5, 5, 5)
        assert grid.values[2, 2, 2] == -1.0


class TestMarchingCubes:
    def test_no_surface_empty_mesh(self):
        f = field_from_expr("1")
        mesh = marching_cubes(f, GridSpec.from_box((0, 0, 0), (1, 1, 1), 0.5))
        assert mesh.vertex_count == 0
        assert mesh.triangle_count == 0

    def test_sphere_closed_two_manifold(self, unit_sphere):
        mesh = marching_cubes(unit_sphere, SPHERE_GRID)
        report = manifold_audit(mesh)
        assert report.closed
        assert report.euler == 2
        assert report.boundary_loops == 0
        assert report.nonmanifold_edges == 0

    def test_linear_field_exact_interpolation(self):
        f = field_from_expr("z-0.5")
        mesh = marching_cubes(f, GridSpec.from_box((0, 0, 0), (1, 1, 1), 0.25))
        assert mesh.vertex_count > 0
        assert np.abs(mesh.positions[:, 2] - 0.5).max() < 1e-12

    def test_vertices_on_grid_edges(self, unit_sphere):
        spec = GridSpec.from_box((-1.5, -1.5, -1.5), (1.5, 1.5, 1.5), 0.25)
        mesh = marching_cubes(unit_sphere, spec)
        h = spec.spacing
        rel = (mesh.positions - np.asarray(spec.origin)) / h
        # each vertex sits on a lattice edge: two coordinates integral
        frac = np.abs(rel - np.round(rel))
        integral = frac < 1e-9
        assert np.all(integral.sum(axis=1) >= 2)
        # interpolation parameter within [0, 1] on the remaining axis
        t = np.where(~integral, rel - np.floor(rel), 0.0)
        assert np.all((t >= -1e-12) & (t <= 1 + 1e-12))

    def test_lerp_consistency_machine_precision(self, unit_sphere):
        spec = GridSpec.from_box((-1.5, -1.5, -1.5), (1.5, 1.5, 1.5), 0.25)
        grid = sample_grid(unit_sphere, spec)
        mesh = marching_cubes(unit_sphere, grid)
        h = spec.spacing
        scale = np.max(np.abs(grid.values))
        for p in mesh.positions[:50]:
            rel = (p - np.asarray(spec.origin)) / h
            base = np.floor(rel + 1e-9).astype(int)
            axis = int(np.argmax(np.abs(rel - np.round(rel)) > 1e-9))
            t = rel[axis] - base[axis]
            nb = base.copy()
            nb[axis] += 1
            va = grid.values[tuple(base)]
            vb = grid.values[tuple(nb)]
            # exact up to roundoff, plus the 1e-12-scale nudge applied to
            # lattice values that sit exactly on the surface
            bound = (2e-12 + 32 * np.finfo(float).eps) * scale
            assert abs(va + t * (vb - va)) <= bound

    def test_normals_face_positive_side(self, unit_sphere):
        mesh = marching_cubes(unit_sphere, SPHERE_GRID)
        t = mesh.triangles
        p = mesh.positions
        centroid = (p[t[:, 0]] + p[t[:, 1]] + p[t[:, 2]]) / 3
        tn = np.cross(p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]])
        grads = unit_sphere.gradients(centroid)
        assert np.all(np.einsum("ij,ij->i", tn, grads) > 0)

    def test_lattice_zero_nudged_inside(self):
        # grid corners landing exactly on the surface must not produce
        # degenerate triangles; 0.6^2 + 0.8^2 = 1 puts lattice points on it
        f = sphere()
        mesh = marching_cubes(f, SPHERE_GRID)
        t = mesh.triangles
        p = mesh.positions
        area2 = np.linalg.norm(
            np.cross(p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]]), axis=1)
        assert np.all(area2 > 0)

    def test_mc_valence_support_wider_than_projection(self, unit_sphere):
        from isotess.pipeline import OctreeSpec, TessellationOptions, tessellate
        mc_mesh = marching_cubes(unit_sphere, SPHERE_GRID)
        mc_hist = valence_histogram(mc_mesh)
        proj = tessellate(unit_sphere, OctreeSpec((-2,) * 3, (2,) * 3, 2),
                          TessellationOptions(resolution=6))
        # interior valences of each projected patch: {6} plus one center of n
        interiors = set()
        for outcome in proj.accepted:
            base = outcome.patch.base
            hist = valence_histogram(outcome.patch.mesh)
            interiors |= set(hist.interior)
        assert interiors <= {3, 4, 5, 6, 7, 8}
        mc_support = set(mc_hist.interior)
        assert not mc_support <= {5, 6, 7}
        assert mc_support - interiors  # strictly wider at comparable counts


class TestFairing:
    def test_zero_iterations_identity(self, unit_sphere):
        mesh = marching_cubes(unit_sphere, SPHERE_GRID)
        out = laplacian_fairing(mesh, 0, 0.5)
        assert np.array_equal(out.positions, mesh.positions)
        assert np.array_equal(out.triangles, mesh.triangles)

    def test_planar_patch_stays_planar(self):
        xs, ys = np.meshgrid(np.linspace(0, 1, 6), np.linspace(0, 1, 6),
                             indexing="ij")
        pts = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(36)])
        tris = []
        for i in range(5):
            for j in range(5):
                a = i * 6 + j
                tris += [(a, a + 6, a + 7), (a, a + 7, a + 1)]
        mesh = TriangleMesh(pts, np.array(tris))
        out = laplacian_fairing(mesh, 10, 0.5)
        assert np.abs(out.positions[:, 2]).max() < 1e-12

    def test_improves_min_angle_distribution(self, unit_sphere):
        mesh = marching_cubes(unit_sphere, SPHERE_GRID)
        before = triangle_quality(mesh).percentiles[5]
        faired = laplacian_fairing(mesh, 20, 0.5)
        after = triangle_quality(faired).percentiles[5]
        assert after > before

    def test_preserves_counts_and_connectivity(self, unit_sphere):
        mesh = marching_cubes(unit_sphere, SPHERE_GRID)
        out = laplacian_fairing(mesh, 5, 0.3)
        assert out.vertex_count == mesh.vertex_count
        assert np.array_equal(out.triangles, mesh.triangles)

    def test_boundary_fixed(self, unit_sphere, octant_cell):
        from isotess.pipeline import TessellationOptions, build_patch
        patch = build_patch(unit_sphere, octant_cell,
                            TessellationOptions(resolution=4))
        mesh = patch.mesh
        from isotess.quality import boundary_vertices
        boundary = boundary_vertices(mesh)
        out = laplacian_fairing(mesh, 5, 0.5)
        assert np.array_equal(out.positions[boundary], mesh.positions[boundary])
        moved = np.linalg.norm(out.positions[~boundary]
                               - mesh.positions[~boundary], axis=1)
        assert moved.max() > 0

    def test_invalid_args(self, unit_sphere):
        mesh = marching_cubes(unit_sphere, SPHERE_GRID)
        with pytest.raises(MeshError):
            laplacian_fairing(mesh, 5, 1.5)
        with pytest.raises(MeshError):
            laplacian_fairing(mesh, -1, 0.5)

    def test_nonmanifold_rejected(self):
        positions = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1],
                              [0, -1, 0.0]])
        bad = TriangleMesh(positions, np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]]))
        with pytest.raises(MeshError):
            laplacian_fairing(bad, 1, 0.5)
