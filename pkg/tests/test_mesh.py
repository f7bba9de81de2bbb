import numpy as np
import pytest

from isotess.field import sphere
from isotess.mesh import (MeshError, TriangleMesh, apply_colormap, empty_mesh,
                          export_mesh, import_mesh, manifold_audit, read_obj,
                          read_ply, weld, write_obj, write_ply)
from isotess.partition import box_cell
from isotess.pipeline import TessellationOptions, build_patch


def octant_patch(resolution=4, offset=0):
    f = sphere()
    boxes = {0: ((0, 0, 0), (2, 2, 2)), 1: ((-2, 0, 0), (0, 2, 2))}
    lo, hi = boxes[offset]
    return build_patch(f, box_cell(lo, hi), TessellationOptions(resolution=resolution))


class TestTriangleMesh:
    def test_validation(self):
        with pytest.raises(MeshError):
            TriangleMesh(np.zeros((2, 3)), np.array([[0, 1, 2]]))
        with pytest.raises(MeshError):
            TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 1]]))
        with pytest.raises(MeshError):
            TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 2]]),
                         {"c": np.zeros(2)})

    def test_empty(self):
        m = empty_mesh()
        assert m.vertex_count == 0
        assert m.triangle_count == 0


class TestWeld:
    def test_two_octants_share_one_side(self):
        r = 4
        a = octant_patch(r, 0).mesh
        b = octant_patch(r, 1).mesh
        welded = weld([a, b], tolerance=0.0)
        shared = r + 1  # one shared boundary polyline, corners included
        assert welded.vertex_count == a.vertex_count + b.vertex_count - shared
        assert welded.triangle_count == a.triangle_count + b.triangle_count

    def test_weld_single_mesh_identity(self):
        a = octant_patch(3, 0).mesh
        w = weld([a], tolerance=0.0)
        assert np.array_equal(w.positions, a.positions)
        assert np.array_equal(w.triangles, a.triangles)

    def test_exact_merge_is_edge_manifold(self):
        a = octant_patch(4, 0).mesh
        b = octant_patch(4, 1).mesh
        welded = weld([a, b], tolerance=0.0)
        report = manifold_audit(welded)
        assert report.nonmanifold_edges == 0
        assert report.boundary_loops == 1  # the two patches fuse into one disk

    def test_tolerance_merges_nearby(self):
        eps = 1e-10
        a = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]]),
                         np.array([[0, 1, 2]]))
        b = TriangleMesh(np.array([[0, 0, eps], [1, 0, 0], [0, 0, 1]]),
                         np.array([[0, 1, 2]]))
        w = weld([a, b], tolerance=1e-9)
        assert w.vertex_count == 4

    def test_channels_averaged(self):
        a = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]]),
                         np.array([[0, 1, 2]]), {"q": np.array([1.0, 2.0, 3.0])})
        b = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 0, 1]]),
                         np.array([[0, 1, 2]]), {"q": np.array([3.0, 2.0, 5.0])})
        w = weld([a, b], tolerance=0.0)
        assert w.vertex_count == 4
        assert w.channels["q"][0] == 2.0  # (1+3)/2 at the shared origin
        assert w.channels["q"][3] == 5.0

    def test_area_change_bounded(self):
        a = octant_patch(4, 0).mesh
        b = octant_patch(4, 1).mesh
        tol = 1e-9
        def area(m):
            p = m.positions
            t = m.triangles
            return 0.5 * np.linalg.norm(
                np.cross(p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]]),
                axis=1).sum()
        before = area(a) + area(b)
        after = area(weld([a, b], tolerance=tol))
        boundary_length = 4 * np.pi  # generous bound on total boundary length
        assert abs(after - before) <= tol * boundary_length


class TestManifoldAudit:
    def test_single_patch_is_a_disk(self):
        m = octant_patch(4, 0).mesh
        report = manifold_audit(m)
        assert not report.closed
        assert report.boundary_loops == 1
        assert report.euler == 1

    def test_two_triangles_share_edge(self):
        m = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.0]]),
                         np.array([[0, 1, 2], [1, 3, 2]]))
        report = manifold_audit(m)
        assert report.nonmanifold_edges == 0
        assert report.boundary_loops == 1

    def test_nonmanifold_detected(self):
        positions = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0.0]])
        m = TriangleMesh(positions, np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]]))
        assert manifold_audit(m).nonmanifold_edges == 1


class TestExportImport:
    def test_obj_round_trip(self, tmp_path):
        m = octant_patch(3, 0).mesh
        path = tmp_path / "patch.obj"
        write_obj(m, path)
        back = read_obj(path)
        assert np.all(np.abs(back.positions - m.positions) <= 1e-15)
        assert np.array_equal(back.triangles, m.triangles)

    def test_obj_exact_17_digit_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        m = TriangleMesh(rng.standard_normal((30, 3)) * np.pi,
                         np.arange(30, dtype=np.int64).reshape(10, 3))
        path = tmp_path / "rand.obj"
        write_obj(m, path)
        back = read_obj(path)
        assert np.array_equal(back.positions, m.positions)

    def test_ply_round_trip_with_channels(self, tmp_path):
        m = octant_patch(3, 0).mesh
        m.channels["mean_curvature"] = np.linspace(0.9, 1.1, m.vertex_count)
        path = tmp_path / "patch.ply"
        write_ply(m, path)
        back = read_ply(path)
        assert np.array_equal(back.positions, m.positions)
        assert np.array_equal(back.triangles, m.triangles)
        assert np.array_equal(back.channels["mean_curvature"],
                              m.channels["mean_curvature"])

    def test_ply_color_spans_channel_extrema(self, tmp_path):
        values = np.linspace(-1.0, 2.0, 5)
        rgb = apply_colormap(values, "redblue")
        assert tuple(rgb[0]) == (255, 0, 0)   # min -> red
        assert tuple(rgb[-1]) == (0, 0, 255)  # max -> blue
        vir = apply_colormap(values, "viridis")
        assert not np.array_equal(vir[0], vir[-1])
        m = TriangleMesh(np.eye(3), np.array([[0, 1, 2]]),
                         {"c": np.array([0.0, 0.5, 1.0])})
        path = tmp_path / "c.ply"
        write_ply(m, path, color_channel="c", colormap="redblue")
        text = path.read_text()
        assert "property uchar red" in text
        assert "255 0 0" in text and "0 0 255" in text

    def test_obj_channel_sidecar(self, tmp_path):
        m = TriangleMesh(np.eye(3), np.array([[0, 1, 2]]),
                         {"c": np.array([0.25, 0.5, 0.75])})
        path = tmp_path / "mesh.obj"
        write_obj(m, path)
        sidecar = tmp_path / "mesh.c.csv"
        assert sidecar.exists()
        rows = sidecar.read_text().strip().splitlines()
        assert rows[0] == "vertex,c"
        assert rows[1].startswith("0,")

    def test_empty_mesh_files(self, tmp_path):
        m = empty_mesh()
        for fmt in ("obj", "ply"):
            path = tmp_path / f"empty.{fmt}"
            export_mesh(m, path)
            back = import_mesh(path)
            assert back.vertex_count == 0
            assert back.triangle_count == 0

    def test_normals_round_trip(self, tmp_path):
        m = octant_patch(3, 0).mesh
        n = m.positions / np.linalg.norm(m.positions, axis=1, keepdims=True)
        mesh = TriangleMesh(m.positions, m.triangles, normals=n)
        for fmt in ("obj", "ply"):
            path = tmp_path / f"n.{fmt}"
            export_mesh(mesh, path)
            back = import_mesh(path)
            assert back.normals is not None
            assert np.array_equal(back.normals, n)

    def test_malformed_obj(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nf 1 2\n")
        with pytest.raises(MeshError):
            read_obj(path)

    def test_malformed_ply(self, tmp_path):
        path = tmp_path / "bad.ply"
        path.write_text("not a ply\n")
        with pytest.raises(MeshError):
            read_ply(path)
