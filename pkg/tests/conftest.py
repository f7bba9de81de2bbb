import numpy as np
import pytest

from isotess.field import field_from_expr, sphere, torus
from isotess.partition import Plane, box_cell, cell_from_planes


@pytest.fixture
def unit_sphere():
    return sphere()


@pytest.fixture
def standard_torus():
    return torus(2.0, 1.0)


@pytest.fixture
def octant_cell():
    return box_cell((0.0, 0.0, 0.0), (2.0, 2.0, 2.0))


def pentagon_prism_planes():
    """Five planes whose prism cuts a 5-sided patch out of the unit sphere."""
    v12 = np.array([0.9, 1.5])
    v23 = np.array([-0.8, -0.35])
    v31 = np.array([0.25, 0.0])
    centroid = (v12 + v23 + v31) / 3

    def side(p, q):
        e = q - p
        n = np.array([e[1], -e[0]])
        if n @ (centroid - p) > 0:
            n = -n
        n = n / np.linalg.norm(n)
        return [n[0], n[1], 0.0, float(n @ p)]

    return [[0.0, 0.0, 1.0, 0.95], [0.0, 0.0, -1.0, 0.45],
            side(v31, v12), side(v12, v23), side(v23, v31)]


def graze_prism_planes(angle_deg=85.0):
    """Sheared prism whose lateral edges meet the z axis at ``angle_deg``."""
    a = np.radians(angle_deg)
    n1 = np.array([np.cos(a), 0.0, -np.sin(a)])
    return [[0, 0, 1, 0.5], [0, 0, -1, 0.5],
            [n1[0], n1[1], n1[2], 0.4], [-n1[0], -n1[1], -n1[2], 0.4],
            [0, 1, 0, 0.5], [0, -1, 0, 0.5]]


@pytest.fixture
def pentagon_cell():
    return cell_from_planes([Plane.from_coeffs(p) for p in pentagon_prism_planes()])


@pytest.fixture
def graze_cell():
    return cell_from_planes([Plane.from_coeffs(p) for p in graze_prism_planes()])


@pytest.fixture
def tilted_plane_field():
    return field_from_expr(
        "0.2672612419124244*x+0.5345224838248488*y+0.8017837257372732*z-0.1")
