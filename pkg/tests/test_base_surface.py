import numpy as np
import pytest

from isotess.base_surface import (BaseSurfaceError, base_mesh_corners,
                                  base_mesh_transfinite)
from isotess.domain import triangulate_ngon
from isotess.field import field_from_expr, sphere
from isotess.partition import box_cell
from isotess.patch import (build_boundary_loop, find_corner_points,
                           trace_all_sides)


@pytest.fixture
def octant_boundary(unit_sphere, octant_cell):
    corners = find_corner_points(unit_sphere, octant_cell)
    return build_boundary_loop(unit_sphere, octant_cell, corners)


class TestCornersBase:
    def test_corner_vertices_exact(self, octant_boundary):
        dm = triangulate_ngon(3, 4)
        base = base_mesh_corners(octant_boundary, dm)
        for i in range(3):
            v = base.corner_vertex(i)
            assert np.array_equal(base.mesh.positions[v], octant_boundary.corners[i])

    def test_center_is_mean_of_corners(self, octant_boundary):
        dm = triangulate_ngon(3, 4)
        base = base_mesh_corners(octant_boundary, dm)
        expected = octant_boundary.corners.mean(axis=0)
        assert np.allclose(base.mesh.positions[0], expected, atol=1e-15)

    def test_coplanar_corners_give_planar_base(self):
        f = field_from_expr("x+y+z-1.5")
        cell = box_cell((0, 0, 0), (1, 1, 1))
        boundary = build_boundary_loop(f, cell, find_corner_points(f, cell))
        dm = triangulate_ngon(boundary.n, 5)
        base = base_mesh_corners(boundary, dm)
        n = np.array([1.0, 1.0, 1.0]) / np.sqrt(3)
        d = base.mesh.positions @ n - 1.5 / np.sqrt(3)
        assert np.abs(d).max() < 1e-12

    def test_boundary_vertices_on_chords(self, octant_boundary):
        dm = triangulate_ngon(3, 4)
        base = base_mesh_corners(octant_boundary, dm)
        for v in np.nonzero(base.boundary_side >= 0)[0]:
            i = base.boundary_side[v]
            a = octant_boundary.corners[i]
            b = octant_boundary.corners[(i + 1) % 3]
            chord = (b - a) / np.linalg.norm(b - a)
            rel = base.mesh.positions[v] - a
            off = rel - (rel @ chord) * chord
            assert np.linalg.norm(off) < 1e-14

    def test_side_plane_containment(self, octant_boundary):
        dm = triangulate_ngon(3, 6)
        base = base_mesh_corners(octant_boundary, dm)
        diam = octant_boundary.cell.diameter
        for v in np.nonzero(base.boundary_side >= 0)[0]:
            plane = octant_boundary.sides[base.boundary_side[v]].face_plane
            assert abs(plane.signed_distance(base.mesh.positions[v])) < 1e-9 * diam

    def test_triangle_buffer_identity(self, octant_boundary):
        dm = triangulate_ngon(3, 4)
        base = base_mesh_corners(octant_boundary, dm)
        assert np.array_equal(base.mesh.triangles, dm.triangles)

    def test_side_count_mismatch(self, octant_boundary):
        with pytest.raises(BaseSurfaceError):
            base_mesh_corners(octant_boundary, triangulate_ngon(4, 3))


class TestTransfiniteBase:
    def test_boundary_vertices_on_polyline(self, unit_sphere, octant_boundary):
        trace_all_sides(unit_sphere, octant_boundary)
        dm = triangulate_ngon(3, 4)
        base = base_mesh_transfinite(octant_boundary, dm)
        for v in np.nonzero(base.boundary_side >= 0)[0]:
            p = base.mesh.positions[v]
            poly = octant_boundary.sides[base.boundary_side[v]].polyline
            best = min(_point_segment_distance(p, poly[k], poly[k + 1])
                       for k in range(len(poly) - 1))
            assert best < 1e-12
        # |F| at boundary vertices inherits the polyline's chordal fidelity
        step = 0.05 * octant_boundary.cell.diameter
        boundary_pts = base.mesh.positions[base.boundary_side >= 0]
        assert np.abs(unit_sphere.values(boundary_pts)).max() < step ** 2

    def test_planar_curves_give_planar_interior(self):
        f = field_from_expr("x+y+z-1.5")
        cell = box_cell((0, 0, 0), (1, 1, 1))
        boundary = build_boundary_loop(f, cell, find_corner_points(f, cell))
        trace_all_sides(f, boundary)
        dm = triangulate_ngon(boundary.n, 4)
        base = base_mesh_transfinite(boundary, dm)
        n = np.array([1.0, 1.0, 1.0]) / np.sqrt(3)
        d = base.mesh.positions @ n - 1.5 / np.sqrt(3)
        assert np.abs(d).max() < 1e-9

    def test_chord_polylines_match_corners_base(self, octant_boundary):
        # sample each side from the straight chord
        for i, side in enumerate(octant_boundary.sides):
            a = octant_boundary.corners[i]
            b = octant_boundary.corners[(i + 1) % octant_boundary.n]
            t = np.linspace(0.0, 1.0, 9)[:, None]
            side.polyline = a + t * (b - a)
        dm = triangulate_ngon(3, 4)
        tf = base_mesh_transfinite(octant_boundary, dm)
        co = base_mesh_corners(octant_boundary, dm)
        assert np.abs(tf.mesh.positions - co.mesh.positions).max() < 1e-9

    def test_corner_reproduction(self, unit_sphere, octant_boundary):
        trace_all_sides(unit_sphere, octant_boundary)
        dm = triangulate_ngon(3, 5)
        base = base_mesh_transfinite(octant_boundary, dm)
        for i in range(3):
            v = base.corner_vertex(i)
            assert np.linalg.norm(base.mesh.positions[v]
                                  - octant_boundary.corners[i]) < 1e-12

    def test_missing_polyline_raises(self, octant_boundary):
        with pytest.raises(BaseSurfaceError):
            base_mesh_transfinite(octant_boundary, triangulate_ngon(3, 3))


def _point_segment_distance(p, a, b):
    d = b - a
    t = np.clip((p - a) @ d / (d @ d), 0.0, 1.0)
    return float(np.linalg.norm(a + t * d - p))
