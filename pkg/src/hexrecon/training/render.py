"""Single-intersection differentiable rendering of one view.

Every pixel casts one ray; the first hit is interpolated and shaded.  The
backward pass chains the shader, the attribute interpolation (including the
motion of the hit point across the triangle) and the silhouette coverage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..geometry import (Camera, Coverage, Hits, Interpolated, bary_backward, bary_gradient,
                        build_bvh, cast_rays, coverage_backward, interpolate,
                        interpolate_backward, silhouette_coverage, vertex_normals)
from ..geometry.bvh import Bvh
from ..hexmesh import HexMesh
from ..shader import MlpParams, ShadeCache, shade_backward, shade_forward

Shader = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class Rendered:
    camera: Camera
    hits: Hits
    rows: np.ndarray            # flat pixel ids of hit pixels
    dirs: np.ndarray            # (P, 3) ray directions of hit pixels
    interp: Interpolated | None
    cache: ShadeCache | None
    rgb: np.ndarray             # (H, W, 3), black background
    normals: np.ndarray         # (H, W, 3), zero background
    coverage: Coverage | None

    @property
    def hit_mask(self) -> np.ndarray:
        return self.hits.hit.reshape(self.camera.height, self.camera.width)


def render_forward(mesh: HexMesh, params: MlpParams | Shader, camera: Camera,
                   bvh: Bvh | None = None, with_coverage: bool = True) -> Rendered:
    """Render ``mesh`` with a network (``MlpParams``) or any callable ``f(x, n, h, d) -> rgb``."""
    H, W = camera.height, camera.width
    bvh = bvh if bvh is not None else build_bvh(mesh)
    o, d = camera.pixel_rays()
    hits = cast_rays(bvh, mesh, o, d)
    rows = np.flatnonzero(hits.hit)
    rgb = np.zeros((H * W, 3))
    nrm = np.zeros((H * W, 3))
    interp = cache = None
    if len(rows):
        interp = interpolate(mesh, hits.face[rows], hits.bary[rows], vertex_normals(mesh))
        if isinstance(params, MlpParams):
            cache = shade_forward(params, interp.x, interp.n, interp.h, d[rows])
            rgb[rows] = cache.rgb
        else:
            rgb[rows] = params(interp.x, interp.n, interp.h, d[rows])
        nrm[rows] = interp.n
    cov = silhouette_coverage(mesh, camera, hits=hits) if with_coverage else None
    return Rendered(camera, hits, rows, d[rows], interp, cache, rgb.reshape(H, W, 3),
                    nrm.reshape(H, W, 3), cov)


def render_backward(mesh: HexMesh, params: MlpParams, r: Rendered, g_rgb=None, g_normal=None,
                    g_coverage=None) -> tuple[np.ndarray, np.ndarray, dict]:
    """Gradients ``(g_positions, g_features, g_params)`` from image-space gradients."""
    g_pos = np.zeros((mesh.n_vertices, 3))
    g_feat = np.zeros((mesh.n_vertices, mesh.feat_dim))
    g_par = {k: np.zeros_like(v) for k, v in params.tensors().items()}
    if len(r.rows) and (g_rgb is not None or g_normal is not None):
        n_hit = len(r.rows)
        g_x = np.zeros((n_hit, 3))
        g_n = np.zeros((n_hit, 3))
        g_h = np.zeros((n_hit, mesh.feat_dim))
        if g_rgb is not None:
            if r.cache is None:
                raise ValueError("backward through a callable shader is not supported")
            g = np.asarray(g_rgb).reshape(-1, 3)[r.rows]
            g_par, g_x, g_n, g_h, _ = shade_backward(params, r.cache, g)
        if g_normal is not None:
            g_n = g_n + np.asarray(g_normal).reshape(-1, 3)[r.rows]
        gp, gf = interpolate_backward(mesh, r.interp, g_x, g_n, g_h)
        g_b = bary_gradient(mesh, r.interp, g_x, g_n, g_h)
        g_pos += gp + bary_backward(mesh, r.interp, r.dirs, g_b)
        g_feat += gf
    if g_coverage is not None and r.coverage is not None:
        g_pos += coverage_backward(mesh, r.camera, r.coverage, g_coverage)
    return g_pos, g_feat, g_par
