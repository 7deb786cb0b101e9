"""Cameras, ray casting, attribute interpolation and silhouette coverage."""

from .camera import Camera, look_at, project, projection_jacobian, ray_for_pixel
from .bvh import (Bvh, Hits, build_bvh, cast_rays, closest_points, intersect,
                  intersect_brute_force, query_box, refit_bvh)
from .interpolate import (Interpolated, VertexNormals, bary_backward, bary_gradient, interpolate,
                          interpolate_attributes, interpolate_backward, vertex_normals)
from .silhouette import Coverage, coverage_backward, silhouette_coverage, silhouette_edges

__all__ = [
    "Camera", "look_at", "project", "projection_jacobian", "ray_for_pixel", "Bvh", "Hits",
    "build_bvh", "cast_rays", "closest_points", "intersect", "intersect_brute_force",
    "query_box", "refit_bvh", "Interpolated", "VertexNormals", "bary_backward", "bary_gradient",
    "interpolate", "interpolate_attributes", "interpolate_backward", "vertex_normals",
    "Coverage", "coverage_backward", "silhouette_coverage", "silhouette_edges",
]
