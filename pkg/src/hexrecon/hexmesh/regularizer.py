"""Hexagonal second-difference regularizer.

At a vertex ``i`` whose cyclic one-ring has even length ``d`` the energy pairs each
neighbor with the one half a turn away and penalizes ``|2 p_i - p_k - p_k'|^2``
for the ``d / 2`` opposite pairs; for valence 6 this is the ``(j, j + 3)`` rule.
Vertices with odd valence, and boundary vertices of open meshes, fall back to a
uniform Laplacian term ``d * |p_i - mean(ring)|^2`` so their stiffness stays
comparable.  Everything is applied per coordinate axis, so the energy equals
``sum_axis s^T K s`` with one ``V x V`` matrix ``K`` shared by the three axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import HexMesh


@dataclass(frozen=True)
class HexStencil:
    pair_i: np.ndarray
    pair_k: np.ndarray
    pair_kp: np.ndarray
    lap_center: np.ndarray   # one entry per ring member of a fallback vertex
    lap_nbr: np.ndarray
    lap_deg: np.ndarray      # ring length of lap_center, same length
    fallback: np.ndarray     # bool per vertex: odd valence or boundary


def neighbor_pairs(mesh: HexMesh, vertex: int) -> list[tuple[int, int]]:
    """Opposite neighbor pairs ``(ring[j], ring[j + d/2])`` around ``vertex``.

    Empty for odd valence and for boundary vertices; those use the Laplacian fallback.
    """
    adj = mesh.adjacency(allow_boundary=True)
    ring = adj.ring(vertex)
    d = len(ring)
    if d % 2 or adj.boundary[vertex]:
        return []
    h = d // 2
    return [(int(ring[j]), int(ring[j + h])) for j in range(h)]


def hex_stencil(mesh: HexMesh) -> HexStencil:
    if "stencil" in mesh._cache:
        return mesh._cache["stencil"]
    adj = mesh.adjacency(allow_boundary=True)
    deg = adj.valence
    fallback = (deg % 2 == 1) | adj.boundary
    regular = np.flatnonzero(~fallback)
    half = deg[regular] // 2
    i = np.repeat(regular, half)
    j = np.arange(half.sum()) - np.repeat(np.cumsum(half) - half, half)
    base = adj.ptr[i]
    k = adj.idx[base + j]
    kp = adj.idx[base + j + np.repeat(half, half)]
    fb = np.flatnonzero(fallback)
    lc = np.repeat(fb, deg[fb])
    ln = np.concatenate([adj.ring(v) for v in fb]) if len(fb) else np.zeros(0, np.int64)
    st = HexStencil(i, k, kp, lc, ln, deg[lc].astype(np.float64), fallback)
    mesh._cache["stencil"] = st
    return st


def _center_mask(n: int, vertices) -> np.ndarray | None:
    if vertices is None:
        return None
    v = np.asarray(vertices)
    if v.dtype == bool:
        return v
    m = np.zeros(n, dtype=bool)
    m[v] = True
    return m


def hex_energy(mesh: HexMesh, positions: np.ndarray | None = None, vertices=None) -> float:
    """Direct summation of the regularizer over vertex centers.

    Parameters
    ----------
    positions : ndarray, optional
        Overrides ``mesh.positions`` (same shape), handy for finite differences.
    vertices : array_like of int or bool, optional
        Restrict the outer sum to these center vertices.
    """
    p = mesh.positions if positions is None else positions
    st = hex_stencil(mesh)
    mask = _center_mask(mesh.n_vertices, vertices)
    r = 2.0 * p[st.pair_i] - p[st.pair_k] - p[st.pair_kp]
    sq = np.einsum("ij,ij->i", r, r)
    if mask is not None:
        sq = sq[mask[st.pair_i]]
    e = sq.sum()
    fb = np.flatnonzero(st.fallback)
    if len(fb):
        lap = _fallback_residual(p, st, mesh.n_vertices)
        deg = np.bincount(st.lap_center, minlength=mesh.n_vertices)[fb].astype(float)
        t = deg * np.einsum("ij,ij->i", lap[fb], lap[fb])
        if mask is not None:
            t = t[mask[fb]]
        e += t.sum()
    return float(e)


def _fallback_residual(p, st: HexStencil, nv: int) -> np.ndarray:
    """``p_i - mean(ring_i)`` for fallback vertices (rows of other vertices are zero)."""
    acc = np.zeros((nv, 3))
    w = 1.0 / st.lap_deg
    for a in range(3):
        acc[:, a] = np.bincount(st.lap_center, weights=p[st.lap_nbr, a] * w, minlength=nv)
    res = np.zeros((nv, 3))
    res[st.fallback] = p[st.fallback] - acc[st.fallback]
    return res


def build_K(mesh: HexMesh) -> sp.csr_matrix:
    """Sparse symmetric ``K`` with ``s^T K s`` equal to one axis of :func:`hex_energy`.

    Assembled from rank-1 outer products of each term's coefficient pattern:
    ``(+2, -1, -1)`` on ``(i, k, k')`` for a pair and ``sqrt(d) * (1, -1/d, ...)``
    on ``(i, ring)`` for a fallback vertex.  Cached on the mesh until the topology
    changes.
    """
    if "K" in mesh._cache:
        return mesh._cache["K"]
    st = hex_stencil(mesh)
    nv = mesh.n_vertices
    idx = np.stack([st.pair_i, st.pair_k, st.pair_kp], 1)
    coef = np.array([2.0, -1.0, -1.0])
    rows = [np.repeat(idx, 3, axis=1).ravel()]
    cols = [np.tile(idx, (1, 3)).ravel()]
    vals = [np.tile(np.outer(coef, coef).ravel(), len(idx))]

    fb = np.flatnonzero(st.fallback)
    if len(fb):
        d = st.lap_deg
        # (i, i): d ; (i, j) and (j, i): -1 ; (j, j'): 1/d over all ring pairs
        rows += [fb, st.lap_center, st.lap_nbr]
        cols += [fb, st.lap_nbr, st.lap_center]
        deg_fb = np.bincount(st.lap_center, minlength=nv)[fb].astype(float)
        vals += [deg_fb, -np.ones(len(d)), -np.ones(len(d))]
        # ring x ring block, grouped by center
        starts = np.concatenate([[0], np.cumsum(deg_fb.astype(int))])
        rr, cc, vv = [], [], []
        for n, v in enumerate(fb):
            ring = st.lap_nbr[starts[n]:starts[n + 1]]
            rr.append(np.repeat(ring, len(ring)))
            cc.append(np.tile(ring, len(ring)))
            vv.append(np.full(len(ring) ** 2, 1.0 / len(ring)))
        rows += rr
        cols += cc
        vals += vv
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nv, nv)).tocsr()
    K.sum_duplicates()
    # duplicate summation order differs between (i, j) and (j, i); averaging is exactly symmetric
    K = ((K + K.T) * 0.5).tocsr()
    mesh._cache["K"] = K
    return K


def hex_energy_matrix_form(mesh: HexMesh, positions: np.ndarray | None = None) -> float:
    p = mesh.positions if positions is None else positions
    K = build_K(mesh)
    return float(np.einsum("ij,ij->", p, K @ p))


def hex_energy_gradient(mesh: HexMesh, positions: np.ndarray | None = None) -> np.ndarray:
    """``(V, 3)`` gradient of :func:`hex_energy`, i.e. ``2 K S`` per axis."""
    p = mesh.positions if positions is None else positions
    return 2.0 * (build_K(mesh) @ p)


def hex_energy_gradient_summation(mesh: HexMesh, positions: np.ndarray | None = None) -> np.ndarray:
    """Same gradient accumulated term by term from the summation form."""
    p = mesh.positions if positions is None else positions
    st = hex_stencil(mesh)
    nv = mesh.n_vertices
    g = np.zeros((nv, 3))
    r = 2.0 * p[st.pair_i] - p[st.pair_k] - p[st.pair_kp]
    for a in range(3):
        g[:, a] += np.bincount(st.pair_i, 4.0 * r[:, a], minlength=nv)
        g[:, a] -= np.bincount(st.pair_k, 2.0 * r[:, a], minlength=nv)
        g[:, a] -= np.bincount(st.pair_kp, 2.0 * r[:, a], minlength=nv)
    if st.fallback.any():
        lap = _fallback_residual(p, st, nv)
        deg = np.bincount(st.lap_center, minlength=nv).astype(float)
        g += 2.0 * deg[:, None] * lap
        for a in range(3):
            g[:, a] -= np.bincount(st.lap_nbr, 2.0 * lap[st.lap_center, a], minlength=nv)
    return g
