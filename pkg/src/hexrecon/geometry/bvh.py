"""Bounding volume hierarchy over mesh faces, first-hit ray casting and closest-point queries.

The tree is built by sorting face centroids along a Morton curve and splitting
index ranges at the median, which needs one sort per build and gives a balanced
tree.  Kernels are compiled with numba; traversal is sequential per query so
results do not depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from ..hexmesh import HexMesh

LEAF_SIZE = 4
TIE_RTOL = 1e-10   # hits within this relative distance of the nearest one count as a tie
BARY_EPS = 1e-12   # inclusive edge tolerance so rays through shared edges never slip through
_MAX_TIES = 16
_STACK = 128


@dataclass
class Bvh:
    """Flat binary tree.  Node ``n`` is a leaf iff ``count[n] > 0``; its faces are
    ``order[start[n]:start[n] + count[n]]``.  Internal nodes use ``left``/``right``."""

    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.lo)

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.count > 0)


@nb.njit(cache=True)
def _expand_bits(v):
    v = (v * 0x00010001) & 0xFF0000FF
    v = (v * 0x00000101) & 0x0F00F00F
    v = (v * 0x00000011) & 0xC30C30C3
    v = (v * 0x00000005) & 0x49249249
    return v


@nb.njit(cache=True)
def _morton_codes(cent):
    n = cent.shape[0]
    lo = np.empty(3)
    hi = np.empty(3)
    for a in range(3):
        lo[a] = cent[:, a].min()
        hi[a] = cent[:, a].max()
    codes = np.empty(n, dtype=np.int64)
    for i in range(n):
        c = np.int64(0)
        for a in range(3):
            ext = hi[a] - lo[a]
            q = 0.0 if ext <= 0 else (cent[i, a] - lo[a]) / ext
            k = np.int64(min(max(q * 1023.0, 0.0), 1023.0))
            c |= _expand_bits(k) << (2 - a)
        codes[i] = c
    return codes


@nb.njit(cache=True)
def _build_topology(n, leaf_size):
    cap = 2 * n + 1
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    start = np.zeros(cap, np.int64)
    count = np.zeros(cap, np.int64)
    stack_node = np.empty(cap, np.int64)
    stack_s = np.empty(cap, np.int64)
    stack_e = np.empty(cap, np.int64)
    sp = 0
    stack_node[0], stack_s[0], stack_e[0] = 0, 0, n
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node, s, e = stack_node[sp], stack_s[sp], stack_e[sp]
        if e - s <= leaf_size:
            start[node] = s
            count[node] = e - s
            continue
        mid = (s + e) // 2
        l, r = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node], right[node] = l, r
        stack_node[sp], stack_s[sp], stack_e[sp] = r, mid, e
        sp += 1
        stack_node[sp], stack_s[sp], stack_e[sp] = l, s, mid
        sp += 1
    return left[:n_nodes], right[:n_nodes], start[:n_nodes], count[:n_nodes]


@nb.njit(cache=True)
def _fit_boxes(verts, faces, order, left, right, start, count, lo, hi):
    for node in range(len(left) - 1, -1, -1):
        if count[node] > 0:
            for a in range(3):
                lo[node, a] = np.inf
                hi[node, a] = -np.inf
            for k in range(start[node], start[node] + count[node]):
                f = order[k]
                for c in range(3):
                    v = faces[f, c]
                    for a in range(3):
                        x = verts[v, a]
                        if x < lo[node, a]:
                            lo[node, a] = x
                        if x > hi[node, a]:
                            hi[node, a] = x
        else:
            l, r = left[node], right[node]
            for a in range(3):
                lo[node, a] = min(lo[l, a], lo[r, a])
                hi[node, a] = max(hi[l, a], hi[r, a])


def build_bvh(mesh: HexMesh, leaf_size: int = LEAF_SIZE) -> Bvh:
    """Morton-ordered median-split hierarchy over ``mesh.faces``."""
    if mesh.n_faces == 0:
        raise ValueError("cannot build a BVH over an empty face list")
    cent = mesh.positions[mesh.faces].mean(axis=1)
    order = np.argsort(_morton_codes(cent), kind="stable").astype(np.int64)
    left, right, start, count = _build_topology(len(order), leaf_size)
    lo = np.empty((len(left), 3))
    hi = np.empty((len(left), 3))
    bvh = Bvh(lo, hi, left, right, start, count, order)
    refit_bvh(bvh, mesh)
    return bvh


def refit_bvh(bvh: Bvh, mesh: HexMesh) -> None:
    """Recompute boxes in place after vertices moved (topology unchanged)."""
    _fit_boxes(mesh.positions, mesh.faces, bvh.order, bvh.left, bvh.right, bvh.start, bvh.count,
               bvh.lo, bvh.hi)


def query_box(bvh: Bvh, lo, hi) -> np.ndarray:
    """Face ids whose leaf boxes overlap the query box (candidates, not exact)."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    out = []
    stack = [0]
    while stack:
        n = stack.pop()
        if np.any(bvh.hi[n] < lo) or np.any(bvh.lo[n] > hi):
            continue
        if bvh.count[n] > 0:
            out.extend(bvh.order[bvh.start[n]:bvh.start[n] + bvh.count[n]].tolist())
        else:
            stack += [bvh.right[n], bvh.left[n]]
    return np.array(sorted(out), dtype=np.int64)


# ---------------------------------------------------------------------------
# ray casting

@nb.njit(cache=True, inline="always")
def _tri_hit(o0, o1, o2, d0, d1, d2, verts, faces, f):
    """Moller-Trumbore; returns (hit, t, u, v)."""
    i0, i1, i2 = faces[f, 0], faces[f, 1], faces[f, 2]
    ax, ay, az = verts[i0, 0], verts[i0, 1], verts[i0, 2]
    e1x, e1y, e1z = verts[i1, 0] - ax, verts[i1, 1] - ay, verts[i1, 2] - az
    e2x, e2y, e2z = verts[i2, 0] - ax, verts[i2, 1] - ay, verts[i2, 2] - az
    px = d1 * e2z - d2 * e2y
    py = d2 * e2x - d0 * e2z
    pz = d0 * e2y - d1 * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return False, 0.0, 0.0, 0.0
    inv = 1.0 / det
    sx, sy, sz = o0 - ax, o1 - ay, o2 - az
    u = (sx * px + sy * py + sz * pz) * inv
    if u < -BARY_EPS or u > 1.0 + BARY_EPS:
        return False, 0.0, 0.0, 0.0
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (d0 * qx + d1 * qy + d2 * qz) * inv
    if v < -BARY_EPS or u + v > 1.0 + BARY_EPS:
        return False, 0.0, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    return True, t, u, v


@nb.njit(cache=True, error_model="numpy")
def _cast_kernel(orig, dirs, tmin, verts, faces, lo, hi, left, right, start, count, order,
                 out_f, out_t, out_u, out_v):
    stack = np.empty(_STACK, np.int64)
    tie_f = np.empty(_MAX_TIES, np.int64)
    tie_t = np.empty(_MAX_TIES)
    tie_u = np.empty(_MAX_TIES)
    tie_v = np.empty(_MAX_TIES)
    for r in range(orig.shape[0]):
        o0, o1, o2 = orig[r, 0], orig[r, 1], orig[r, 2]
        d0, d1, d2 = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        i0 = 1.0 / (d0 if d0 != 0.0 else 1e-300)
        i1 = 1.0 / (d1 if d1 != 0.0 else 1e-300)
        i2 = 1.0 / (d2 if d2 != 0.0 else 1e-300)
        best = np.inf
        nt = 0
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            n = stack[sp]
            tx1 = (lo[n, 0] - o0) * i0
            tx2 = (hi[n, 0] - o0) * i0
            ty1 = (lo[n, 1] - o1) * i1
            ty2 = (hi[n, 1] - o1) * i1
            tz1 = (lo[n, 2] - o2) * i2
            tz2 = (hi[n, 2] - o2) * i2
            tn = max(max(min(tx1, tx2), min(ty1, ty2)), min(tz1, tz2))
            tf = min(min(max(tx1, tx2), max(ty1, ty2)), max(tz1, tz2))
            lim = best + TIE_RTOL * max(1.0, abs(best)) if best < np.inf else np.inf
            if tn > tf or tf < tmin or tn > lim:
                continue
            if count[n] > 0:
                for k in range(start[n], start[n] + count[n]):
                    f = order[k]
                    ok, t, u, v = _tri_hit(o0, o1, o2, d0, d1, d2, verts, faces, f)
                    if not ok or t <= tmin:
                        continue
                    lim = best + TIE_RTOL * max(1.0, abs(best)) if best < np.inf else np.inf
                    if t > lim:
                        continue
                    if t < best:
                        best = t
                    # drop stale candidates, then append
                    lim = best + TIE_RTOL * max(1.0, abs(best))
                    m = 0
                    for j in range(nt):
                        if tie_t[j] <= lim:
                            tie_f[m], tie_t[m], tie_u[m], tie_v[m] = tie_f[j], tie_t[j], tie_u[j], tie_v[j]
                            m += 1
                    nt = m
                    if nt < _MAX_TIES:
                        tie_f[nt], tie_t[nt], tie_u[nt], tie_v[nt] = f, t, u, v
                        nt += 1
            else:
                stack[sp] = right[n]
                sp += 1
                stack[sp] = left[n]
                sp += 1
        if nt == 0:
            out_f[r] = -1
            out_t[r] = np.inf
            out_u[r] = 0.0
            out_v[r] = 0.0
        else:
            j_best = 0
            for j in range(1, nt):
                if tie_f[j] < tie_f[j_best]:
                    j_best = j
            out_f[r] = tie_f[j_best]
            out_t[r] = tie_t[j_best]
            out_u[r] = tie_u[j_best]
            out_v[r] = tie_v[j_best]


@dataclass
class Hits:
    """Batch of first hits; ``face == -1`` marks a miss.

    ``bary`` holds ``(b0, b1, b2)`` clamped to ``[0, 1]`` and renormalized;
    ``uv`` keeps the raw Moller-Trumbore ``(b1, b2)`` used by gradient code.
    """

    face: np.ndarray
    t: np.ndarray
    bary: np.ndarray
    uv: np.ndarray

    @property
    def hit(self) -> np.ndarray:
        return self.face >= 0

    def __len__(self) -> int:
        return len(self.face)


def default_tmin(mesh: HexMesh) -> float:
    return 1e-6 * max(mesh.bbox_diagonal(), 1e-12)


def cast_rays(bvh: Bvh, mesh: HexMesh, origins, directions, tmin: float | None = None) -> Hits:
    """Nearest hit with ``t > tmin`` per ray; ties broken by the smallest face index."""
    o = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, 3)
    if len(o) == 1 and len(d) > 1:
        o = np.ascontiguousarray(np.broadcast_to(o, d.shape))
    n = len(d)
    if tmin is None:
        tmin = default_tmin(mesh)
    f = np.empty(n, np.int64)
    t = np.empty(n)
    u = np.empty(n)
    v = np.empty(n)
    _cast_kernel(o, d, float(tmin), mesh.positions, mesh.faces, bvh.lo, bvh.hi, bvh.left,
                 bvh.right, bvh.start, bvh.count, bvh.order, f, t, u, v)
    return _make_hits(f, t, u, v)


def _make_hits(f, t, u, v) -> Hits:
    uv = np.stack([u, v], 1)
    b = np.stack([1.0 - u - v, u, v], 1)
    b = np.clip(b, 0.0, 1.0)
    s = b.sum(1, keepdims=True)
    b = np.where(s > 0, b / np.where(s > 0, s, 1.0), b)
    b[f < 0] = 0.0
    return Hits(f, t, b, uv)


def intersect(bvh: Bvh, mesh: HexMesh, origin, direction, tmin: float | None = None):
    """Single ray: ``(face, (b0, b1, b2), t)`` or ``None`` on a miss."""
    h = cast_rays(bvh, mesh, np.reshape(origin, (1, 3)), np.reshape(direction, (1, 3)), tmin)
    if h.face[0] < 0:
        return None
    return int(h.face[0]), h.bary[0].copy(), float(h.t[0])


def intersect_brute_force(mesh: HexMesh, origins, directions, tmin: float | None = None,
                          chunk: int = 32) -> Hits:
    """All-faces reference in plain numpy with the same hit and tie rules."""
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    if len(o) == 1 and len(d) > 1:
        o = np.broadcast_to(o, d.shape)
    if tmin is None:
        tmin = default_tmin(mesh)
    P = mesh.positions[mesh.faces]
    ax, ay, az = P[:, 0].T
    e1x, e1y, e1z = (P[:, 1] - P[:, 0]).T
    e2x, e2y, e2z = (P[:, 2] - P[:, 0]).T
    nf = len(P)
    n = len(d)
    out_f = np.full(n, -1, np.int64)
    out_t = np.full(n, np.inf)
    out_u = np.zeros(n)
    out_v = np.zeros(n)
    fidx = np.arange(nf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for s in range(0, n, chunk):
            ox, oy, oz = (c[:, None] for c in o[s:s + chunk].T)
            dx, dy, dz = (c[:, None] for c in d[s:s + chunk].T)
            px = dy * e2z - dz * e2y
            py = dz * e2x - dx * e2z
            pz = dx * e2y - dy * e2x
            det = e1x * px + e1y * py + e1z * pz
            inv = 1.0 / det
            sx, sy, sz = ox - ax, oy - ay, oz - az
            u = (sx * px + sy * py + sz * pz) * inv
            qx = sy * e1z - sz * e1y
            qy = sz * e1x - sx * e1z
            qz = sx * e1y - sy * e1x
            v = (dx * qx + dy * qy + dz * qz) * inv
            t = (e2x * qx + e2y * qy + e2z * qz) * inv
            ok = ((det != 0) & (u >= -BARY_EPS) & (u <= 1 + BARY_EPS) & (v >= -BARY_EPS)
                  & (u + v <= 1 + BARY_EPS) & (t > tmin))
            t = np.where(ok, t, np.inf)
            tbest = t.min(axis=1)
            lim = tbest + TIE_RTOL * np.maximum(1.0, np.abs(tbest))
            cand = ok & (t <= lim[:, None])
            fbest = np.where(cand, fidx, nf).min(axis=1)
            rows = np.flatnonzero(fbest < nf)
            cols = fbest[rows]
            out_f[s + rows] = cols
            out_t[s + rows] = t[rows, cols]
            out_u[s + rows] = u[rows, cols]
            out_v[s + rows] = v[rows, cols]
    return _make_hits(out_f, out_t, out_u, out_v)


# ---------------------------------------------------------------------------
# closest point on surface

@nb.njit(cache=True, inline="always")
def _closest_on_tri(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest point of triangle abc to p (Ericson); returns (x, y, z, b1, b2)."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az, 0.0, 0.0
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz, 1.0, 0.0
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        w = d1 / (d1 - d3)
        return ax + w * abx, ay + w * aby, az + w * abz, w, 0.0
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz, 0.0, 1.0
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz, 0.0, w
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz), 1.0 - w, w
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w, v, w


@nb.njit(cache=True)
def _box_dist2(px, py, pz, lo, hi, n):
    d = 0.0
    for a in range(3):
        x = px if a == 0 else (py if a == 1 else pz)
        if x < lo[n, a]:
            d += (lo[n, a] - x) ** 2
        elif x > hi[n, a]:
            d += (x - hi[n, a]) ** 2
    return d


@nb.njit(cache=True)
def _closest_kernel(pts, verts, faces, lo, hi, left, right, start, count, order,
                    out_f, out_d2, out_p, out_uv):
    stack = np.empty(_STACK, np.int64)
    for r in range(pts.shape[0]):
        px, py, pz = pts[r, 0], pts[r, 1], pts[r, 2]
        best = np.inf
        bf = -1
        bx = by = bz = bu = bv = 0.0
        sp = 0
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            n = stack[sp]
            if _box_dist2(px, py, pz, lo, hi, n) > best:
                continue
            if count[n] > 0:
                for k in range(start[n], start[n] + count[n]):
                    f = order[k]
                    a, b, c = faces[f, 0], faces[f, 1], faces[f, 2]
                    x, y, z, u, v = _closest_on_tri(
                        px, py, pz, verts[a, 0], verts[a, 1], verts[a, 2],
                        verts[b, 0], verts[b, 1], verts[b, 2], verts[c, 0], verts[c, 1], verts[c, 2])
                    d2 = (x - px) ** 2 + (y - py) ** 2 + (z - pz) ** 2
                    if d2 < best or (d2 == best and f < bf):
                        best, bf, bx, by, bz, bu, bv = d2, f, x, y, z, u, v
            else:
                l, rr = left[n], right[n]
                dl = _box_dist2(px, py, pz, lo, hi, l)
                dr = _box_dist2(px, py, pz, lo, hi, rr)
                if dl <= dr:
                    stack[sp] = rr
                    stack[sp + 1] = l
                else:
                    stack[sp] = l
                    stack[sp + 1] = rr
                sp += 2
        out_f[r] = bf
        out_d2[r] = best
        out_p[r, 0], out_p[r, 1], out_p[r, 2] = bx, by, bz
        out_uv[r, 0], out_uv[r, 1] = bu, bv


def closest_points(bvh: Bvh, mesh: HexMesh, points):
    """Exact closest surface point for each query point.

    Returns
    -------
    face : (N,) int, distance : (N,), point : (N, 3), bary : (N, 3)
    """
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    f = np.empty(n, np.int64)
    d2 = np.empty(n)
    p = np.empty((n, 3))
    uv = np.empty((n, 2))
    _closest_kernel(pts, mesh.positions, mesh.faces, bvh.lo, bvh.hi, bvh.left, bvh.right,
                    bvh.start, bvh.count, bvh.order, f, d2, p, uv)
    bary = np.stack([1.0 - uv[:, 0] - uv[:, 1], uv[:, 0], uv[:, 1]], 1)
    return f, np.sqrt(d2), p, bary
