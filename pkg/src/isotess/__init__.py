"""isotess: near-isotropic tessellation of implicit surfaces.

The pipeline splits space into convex cells each holding a single surface
sheet, spans the sheet's boundary loop with a triangulated base surface,
and projects the base vertices onto the isosurface along directions
interpolated from the cell edges.  A plain Marching Cubes baseline, mesh
quality metrics, and a matched-detail benchmark support comparisons.
"""

from .base_surface import BaseMesh, base_mesh_corners, base_mesh_transfinite
from .bench import run_benchmark
from .domain import (DomainMesh, NGonDomain, mean_value_coords,
                     triangulate_ngon)
from .field import (FieldExpr, ScalarField, builtin_field, field_from_expr,
                    parse_field)
from .mc import GridSpec, SampleGrid, laplacian_fairing, marching_cubes
from .mesh import (TriangleMesh, export_mesh, import_mesh, manifold_audit,
                   weld)
from .partition import (ConvexCell, OctreeNode, Plane, SheetClass, box_cell,
                        build_octree, cell_from_planes, sheet_test)
from .patch import (PatchBoundary, build_boundary_loop, find_corner_points,
                    trace_boundary_curve)
from .pipeline import (OctreeSpec, TessellationOptions, TessellationResult,
                       tessellate)
from .projection import (ProjectedPatch, ProjectionConfig, corner_directions,
                         interpolate_directions, project_patch, project_vertex)
from .quality import (gaussian_curvature, isophotes, mean_curvature,
                      quality_report, triangle_quality, valence_histogram)

__version__ = "0.1.0"

__all__ = [
    "BaseMesh", "ConvexCell", "DomainMesh", "FieldExpr", "GridSpec",
    "NGonDomain", "OctreeNode", "OctreeSpec", "PatchBoundary", "Plane",
    "ProjectedPatch", "ProjectionConfig", "SampleGrid", "ScalarField",
    "SheetClass", "TessellationOptions", "TessellationResult", "TriangleMesh",
    "base_mesh_corners", "base_mesh_transfinite", "box_cell",
    "build_boundary_loop", "build_octree", "builtin_field",
    "cell_from_planes", "corner_directions", "export_mesh", "field_from_expr",
    "find_corner_points", "gaussian_curvature", "import_mesh",
    "interpolate_directions", "isophotes", "laplacian_fairing",
    "manifold_audit", "marching_cubes", "mean_curvature", "mean_value_coords",
    "parse_field", "project_patch", "project_vertex", "quality_report",
    "run_benchmark", "sheet_test", "tessellate", "trace_boundary_curve",
    "triangle_quality", "triangulate_ngon", "valence_histogram", "weld",
]
