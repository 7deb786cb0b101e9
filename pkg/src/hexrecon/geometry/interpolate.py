"""Barycentric interpolation of hit attributes and its reverse-mode rules.

For a hit with barycentric weights ``b`` on face ``(i0, i1, i2)``:

* ``x = sum_k b_k p_ik``
* ``n = normalize(sum_k b_k nhat_ik)`` with ``nhat`` the unit area-weighted vertex
  normals (the geometric face normal replaces it when the sum vanishes)
* ``h = sum_k b_k h_ik``

:func:`interpolate_backward` differentiates these with ``b`` held fixed.  For a
ray-cast renderer ``b`` itself moves with the vertices; :func:`bary_backward`
pushes a gradient on ``b`` through the ray/triangle solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..hexmesh import HexMesh

NORMAL_EPS = 1e-12


@dataclass
class VertexNormals:
    cross: np.ndarray   # (F, 3) unnormalized face normals
    raw: np.ndarray     # (V, 3) sum of incident face crosses
    norm: np.ndarray    # (V,)
    unit: np.ndarray    # (V, 3)


def vertex_normals(mesh: HexMesh, positions: np.ndarray | None = None) -> VertexNormals:
    p = mesh.positions if positions is None else positions
    f = mesh.faces
    c = np.cross(p[f[:, 1]] - p[f[:, 0]], p[f[:, 2]] - p[f[:, 0]])
    nv = len(p)
    raw = np.empty((nv, 3))
    for a in range(3):
        raw[:, a] = np.bincount(f.ravel(), weights=np.repeat(c[:, a], 3), minlength=nv)
    norm = np.linalg.norm(raw, axis=1)
    unit = raw / np.where(norm > 0, norm, 1.0)[:, None]
    return VertexNormals(c, raw, norm, unit)


@dataclass
class Interpolated:
    face: np.ndarray
    bary: np.ndarray
    verts: np.ndarray   # (N, 3) vertex ids
    x: np.ndarray
    n: np.ndarray
    h: np.ndarray
    m: np.ndarray       # unnormalized interpolated normal
    m_norm: np.ndarray
    fallback: np.ndarray  # rows that used the face normal
    normals: VertexNormals


def interpolate(mesh: HexMesh, face: np.ndarray, bary: np.ndarray,
                normals: VertexNormals | None = None) -> Interpolated:
    """Batched interpolation for hits ``face`` (all valid) with weights ``bary``."""
    if normals is None:
        normals = vertex_normals(mesh)
    face = np.asarray(face, dtype=np.int64)
    b = np.asarray(bary, dtype=np.float64).reshape(-1, 3)
    vid = mesh.faces[face]
    x = np.einsum("nk,nkd->nd", b, mesh.positions[vid])
    h = np.einsum("nk,nkd->nd", b, mesh.features[vid])
    m = np.einsum("nk,nkd->nd", b, normals.unit[vid])
    mn = np.linalg.norm(m, axis=1)
    fb = mn < NORMAL_EPS
    if fb.any():
        m[fb] = normals.cross[face[fb]]
        mn[fb] = np.linalg.norm(m[fb], axis=1)
    n = m / np.where(mn > 0, mn, 1.0)[:, None]
    return Interpolated(face, b, vid, x, n, h, m, mn, fb, normals)


def interpolate_attributes(mesh: HexMesh, hit) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(x_m, n_m, h_m)`` for a single hit ``(face, bary, t)`` as returned by ``intersect``."""
    face, bary = hit[0], hit[1]
    it = interpolate(mesh, np.array([face]), np.asarray(bary)[None])
    return it.x[0], it.n[0], it.h[0]


def interpolate_backward(mesh: HexMesh, it: Interpolated, g_x=None, g_n=None, g_h=None):
    """Gradients on vertex positions and features with the weights held fixed.

    Returns ``(g_pos (V, 3), g_feat (V, feat_dim))``.
    """
    nv = mesh.n_vertices
    g_pos = np.zeros((nv, 3))
    g_feat = np.zeros((nv, mesh.feat_dim))
    b = it.bary
    flat = it.verts.ravel()
    if g_x is not None:
        _scatter(g_pos, flat, (b[:, :, None] * g_x[:, None, :]).reshape(-1, 3))
    if g_h is not None:
        _scatter(g_feat, flat, (b[:, :, None] * g_h[:, None, :]).reshape(-1, mesh.feat_dim))
    if g_n is not None:
        n = it.n
        g_m = (g_n - n * np.einsum("ij,ij->i", n, g_n)[:, None]) / it.m_norm[:, None]
        ok = ~it.fallback
        g_unit = np.zeros((nv, 3))
        _scatter(g_unit, it.verts[ok].ravel(), (b[ok, :, None] * g_m[ok, None, :]).reshape(-1, 3))
        vn = it.normals
        u = vn.unit
        g_raw = (g_unit - u * np.einsum("ij,ij->i", u, g_unit)[:, None]) / np.where(
            vn.norm > 0, vn.norm, 1.0)[:, None]
        g_cross = g_raw[mesh.faces].sum(axis=1)
        if it.fallback.any():
            np.add.at(g_cross, it.face[it.fallback], g_m[it.fallback])
        _cross_backward(mesh, g_cross, g_pos)
    return g_pos, g_feat


def _cross_backward(mesh: HexMesh, g_c: np.ndarray, g_pos: np.ndarray, positions=None) -> None:
    """Accumulate the gradient of ``c = (p1 - p0) x (p2 - p0)`` per face into ``g_pos``."""
    p = mesh.positions if positions is None else positions
    f = mesh.faces
    e1 = p[f[:, 1]] - p[f[:, 0]]
    e2 = p[f[:, 2]] - p[f[:, 0]]
    g_e1 = np.cross(e2, g_c)
    g_e2 = np.cross(g_c, e1)
    _scatter(g_pos, f[:, 1], g_e1)
    _scatter(g_pos, f[:, 2], g_e2)
    _scatter(g_pos, f[:, 0], -(g_e1 + g_e2))


def _scatter(out: np.ndarray, idx: np.ndarray, vals: np.ndarray) -> None:
    for a in range(out.shape[1]):
        out[:, a] += np.bincount(idx, weights=vals[:, a], minlength=len(out))


def bary_gradient(mesh: HexMesh, it: Interpolated, g_x=None, g_n=None, g_h=None) -> np.ndarray:
    """Gradient of the same upstream quantities with respect to the weights ``(b0, b1, b2)``."""
    g_b = np.zeros_like(it.bary)
    if g_x is not None:
        g_b += np.einsum("nkd,nd->nk", mesh.positions[it.verts], g_x)
    if g_h is not None:
        g_b += np.einsum("nkd,nd->nk", mesh.features[it.verts], g_h)
    if g_n is not None:
        n = it.n
        g_m = (g_n - n * np.einsum("ij,ij->i", n, g_n)[:, None]) / it.m_norm[:, None]
        ok = ~it.fallback
        g_b[ok] += np.einsum("nkd,nd->nk", it.normals.unit[it.verts[ok]], g_m[ok])
    return g_b


def bary_backward(mesh: HexMesh, it: Interpolated, directions: np.ndarray, g_b: np.ndarray) -> np.ndarray:
    """Push ``d loss / d (b0, b1, b2)`` through the ray/triangle solve onto vertex positions.

    With ``o + t d = A + b1 (B - A) + b2 (C - A)`` and ``M = [-d, B - A, C - A]``,
    ``d(t, b1, b2) = -M^-1 (b0 dA + b1 dB + b2 dC)``.
    """
    P = mesh.positions[it.verts]
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    M = np.stack([-d, P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)
    g_q = np.stack([np.zeros(len(g_b)), g_b[:, 1] - g_b[:, 0], g_b[:, 2] - g_b[:, 0]], 1)
    w = np.linalg.solve(np.transpose(M, (0, 2, 1)), g_q[..., None])[..., 0]
    g_pos = np.zeros((mesh.n_vertices, 3))
    contrib = -it.bary[:, :, None] * w[:, None, :]
    _scatter(g_pos, it.verts.ravel(), contrib.reshape(-1, 3))
    return g_pos
