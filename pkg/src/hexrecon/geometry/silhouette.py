"""Antialiased silhouette coverage with screen-space gradients.

Pixels whose ray hits the mesh have coverage 1 and misses have 0, except in a
one-pixel band along the projected outline.  There coverage is
``clip(0.5 + s * dist, 0, 1)`` where ``dist`` is the image distance from the
pixel center to the nearest projected silhouette edge and ``s`` is +1 for hit
pixels, -1 for misses.  The band consists of pixels whose hit status differs
from at least one of their 8 neighbors.

Silhouette edges are mesh edges shared by a front- and a back-facing triangle,
plus open boundary edges.  Coverage depends on vertex positions only through the
projected endpoints of the nearest edge, which gives the gradient contract used
by the mask loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from ..hexmesh import HexMesh
from .bvh import Bvh, Hits, build_bvh, cast_rays
from .camera import Camera, project, projection_jacobian


@dataclass
class Coverage:
    image: np.ndarray     # (H, W) coverage in [0, 1]
    hit: np.ndarray       # (H, W) bool ray-hit map
    pix: np.ndarray       # (P,) flat indices of band pixels
    edge: np.ndarray      # (P, 2) vertex ids of the nearest silhouette edge, -1 if none
    tau: np.ndarray       # (P,) closest-point parameter along the edge
    u: np.ndarray         # (P, 2) unit vector from the closest point to the pixel center
    dist: np.ndarray      # (P,)
    sign: np.ndarray      # (P,) +1 hit, -1 miss
    active: np.ndarray    # (P,) coverage strictly inside (0, 1), so the gradient is nonzero


def silhouette_edges(mesh: HexMesh, camera: Camera) -> np.ndarray:
    """``(S, 2)`` vertex ids of contour and boundary edges seen from ``camera``."""
    p = mesh.positions
    c = mesh.face_cross()
    facing = np.einsum("ij,ij->i", c, camera.center - p[mesh.faces[:, 0]]) > 0
    ef = mesh.edge_faces
    boundary = ef[:, 1] < 0
    contour = ~boundary & (facing[ef[:, 0]] != facing[np.maximum(ef[:, 1], 0)])
    e = mesh.edges[boundary | contour]
    _, _, depth, behind = project(camera, p[e.ravel()])
    ok = ~behind.reshape(-1, 2).any(axis=1)
    return e[ok]


def band_pixels(hit: np.ndarray) -> np.ndarray:
    """Flat indices of pixels whose hit status differs from any 8-neighbor."""
    pad = np.pad(hit, 1, mode="edge")
    h, w = hit.shape
    diff = np.zeros_like(hit)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy or dx:
                diff |= pad[1 + dy:1 + dy + h, 1 + dx:1 + dx + w] != hit
    return np.flatnonzero(diff)


@nb.njit(cache=True)
def _nearest_segments(qx, qy, ax, ay, bx, by, out_idx, out_dist, out_tau):
    for i in range(len(qx)):
        best = np.inf
        bj = -1
        btau = 0.0
        for j in range(len(ax)):
            ex = bx[j] - ax[j]
            ey = by[j] - ay[j]
            l2 = ex * ex + ey * ey
            tau = 0.0
            if l2 > 0.0:
                tau = ((qx[i] - ax[j]) * ex + (qy[i] - ay[j]) * ey) / l2
                tau = min(max(tau, 0.0), 1.0)
            dx = qx[i] - (ax[j] + tau * ex)
            dy = qy[i] - (ay[j] + tau * ey)
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
                bj = j
                btau = tau
        out_idx[i] = bj
        out_dist[i] = np.sqrt(best)
        out_tau[i] = btau


def silhouette_coverage(mesh: HexMesh, camera: Camera, bvh: Bvh | None = None,
                        hits: Hits | None = None) -> Coverage:
    """Coverage image of ``mesh`` in ``camera``; ``hits`` may be passed to reuse a ray cast."""
    H, W = camera.height, camera.width
    if hits is None:
        bvh = bvh if bvh is not None else build_bvh(mesh)
        o, d = camera.pixel_rays()
        hits = cast_rays(bvh, mesh, o, d)
    hit = hits.hit.reshape(H, W)
    image = hit.astype(np.float64)
    pix = band_pixels(hit)
    edges = silhouette_edges(mesh, camera)
    P = len(pix)
    idx = np.full(P, -1, np.int64)
    dist = np.zeros(P)
    tau = np.zeros(P)
    u = np.zeros((P, 2))
    sign = np.where(hit.ravel()[pix], 1.0, -1.0)
    if P and len(edges):
        ua, va, _, _ = project(camera, mesh.positions[edges[:, 0]])
        ub, vb, _, _ = project(camera, mesh.positions[edges[:, 1]])
        qx = (pix % W) + 0.5
        qy = (pix // W) + 0.5
        _nearest_segments(qx, qy, ua, va, ub, vb, idx, dist, tau)
        cx = ua[idx] + tau * (ub[idx] - ua[idx])
        cy = va[idx] + tau * (vb[idx] - va[idx])
        nz = dist > 0
        u[nz, 0] = (qx[nz] - cx[nz]) / dist[nz]
        u[nz, 1] = (qy[nz] - cy[nz]) / dist[nz]
        cov = np.clip(0.5 + sign * dist, 0.0, 1.0)
        image.ravel()[pix] = cov
        active = (cov > 0) & (cov < 1) & nz
        edge = edges[idx]
    else:
        active = np.zeros(P, bool)
        edge = np.full((P, 2), -1, np.int64)
    return Coverage(image, hit, pix, edge, tau, u, dist, sign, active)


def coverage_backward(mesh: HexMesh, camera: Camera, cov: Coverage, g_image) -> np.ndarray:
    """Vertex-position gradient ``(V, 3)`` of ``sum(g_image * cov.image)``."""
    g_pos = np.zeros((mesh.n_vertices, 3))
    a = cov.active
    if not a.any():
        return g_pos
    g = np.asarray(g_image, dtype=np.float64).ravel()[cov.pix[a]] * cov.sign[a]
    u, tau, e = cov.u[a], cov.tau[a], cov.edge[a]
    # d dist / d a = -(1 - tau) u, d dist / d b = -tau u (image space)
    for k, w in ((0, -(1.0 - tau)), (1, -tau)):
        J = projection_jacobian(camera, mesh.positions[e[:, k]])
        g2 = (g * w)[:, None] * u
        g3 = np.einsum("ni,nij->nj", g2, J)
        for ax in range(3):
            g_pos[:, ax] += np.bincount(e[:, k], weights=g3[:, ax], minlength=mesh.n_vertices)
    return g_pos
