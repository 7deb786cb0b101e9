"""Isotropic remeshing and edge-collapse decimation.

The loop follows the usual recipe: split edges longer than 4/3 of the target,
collapse edges shorter than 4/5 of it, flip edges to pull valences toward 6, then
relax vertices tangentially and project them back onto the input surface.  Local
edits run on :class:`EditableMesh`, a face list with vertex-to-face incidence
sets; relaxation runs vectorized on a compacted :class:`HexMesh`.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from ..errors import DataError
from .mesh import HexMesh

SPLIT_RATIO = 4.0 / 3.0
COLLAPSE_RATIO = 4.0 / 5.0
RELAX_STEP = 0.5
REMESH_RELAX_STEP = 0.2    # gentler inside the remeshing loop, where relaxation repeats every pass


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _mid(a, b):
    return tuple(0.5 * (x + y) for x, y in zip(a, b))


class EditableMesh:
    """Mutable closed triangle mesh supporting split, collapse and flip.

    Positions and features are kept as Python tuples; the per-edit arithmetic is
    tiny and numpy call overhead would dominate.
    """

    def __init__(self, mesh: HexMesh):
        self.pos = [tuple(p) for p in mesh.positions.tolist()]
        self.feat = [tuple(h) for h in mesh.features.tolist()]
        self.faces: list[list[int] | None] = mesh.faces.tolist()
        self.vf: list[set[int]] = [set() for _ in range(mesh.n_vertices)]
        for i, f in enumerate(self.faces):
            for v in f:
                self.vf[v].add(i)
        self.alive = [True] * mesh.n_vertices
        self.feat_dim = mesh.feat_dim
        self.n_alive = mesh.n_vertices

    # -- queries -----------------------------------------------------------
    def neighbors(self, v: int) -> set[int]:
        out = set()
        for f in self.vf[v]:
            out.update(self.faces[f])
        out.discard(v)
        return out

    def valence(self, v: int) -> int:
        return len(self.vf[v])  # closed manifold: faces == neighbors

    def edge_faces(self, a: int, b: int) -> list[int]:
        return [f for f in self.vf[a] if b in self.faces[f]]

    def edges(self) -> list[tuple[int, int]]:
        es = set()
        for f in self.faces:
            if f is not None:
                for k in range(3):
                    a, b = f[k], f[(k + 1) % 3]
                    es.add((a, b) if a < b else (b, a))
        return sorted(es)

    def length(self, a: int, b: int) -> float:
        d = _sub(self.pos[a], self.pos[b])
        return math.sqrt(_dot(d, d))

    def _normal(self, f, override: dict | None = None):
        if override:
            p0, p1, p2 = (override.get(v, self.pos[v]) for v in f)
        else:
            p0, p1, p2 = (self.pos[v] for v in f)
        return _cross(_sub(p1, p0), _sub(p2, p0))

    # -- edits -------------------------------------------------------------
    def _add_vertex(self, p, h) -> int:
        self.pos.append(p)
        self.feat.append(h)
        self.vf.append(set())
        self.alive.append(True)
        self.n_alive += 1
        return len(self.pos) - 1

    def split(self, a: int, b: int) -> int:
        """Insert the midpoint of edge ``(a, b)``; returns the new vertex id."""
        fs = self.edge_faces(a, b)
        m = self._add_vertex(_mid(self.pos[a], self.pos[b]), _mid(self.feat[a], self.feat[b]))
        for f in fs:
            tri = self.faces[f]
            k = tri.index(a)
            if tri[(k + 1) % 3] == b:
                u, w = a, b
            else:
                u, w = b, a
            c = next(v for v in tri if v != a and v != b)
            # tri is (u, w, c) cyclically: becomes (u, m, c) and (m, w, c)
            self.faces[f] = [u, m, c]
            g = len(self.faces)
            self.faces.append([m, w, c])
            self.vf[w].discard(f)
            self.vf[w].add(g)
            self.vf[c].add(g)
            self.vf[m].update((f, g))
        return m

    def can_collapse(self, a: int, b: int, p, max_len: float | None = None,
                     min_cos: float = 0.0) -> bool:
        fs = self.edge_faces(a, b)
        if len(fs) != 2:
            return False
        na, nb = self.neighbors(a), self.neighbors(b)
        common = na & nb
        if len(common) != 2:
            return False
        if any(self.valence(c) <= 3 for c in common):
            return False
        if len(na) + len(nb) - 4 < 3:
            return False
        if self.n_alive <= 4:
            return False
        if max_len is not None:
            for n in (na | nb) - {a, b}:
                d = _sub(p, self.pos[n])
                if _dot(d, d) > max_len * max_len:
                    return False
        over = {a: p, b: p}
        for f in (self.vf[a] | self.vf[b]) - set(fs):
            tri = self.faces[f]
            n0 = self._normal(tri)
            n1 = self._normal(tri, over)
            l0, l1 = math.sqrt(_dot(n0, n0)), math.sqrt(_dot(n1, n1))
            if l1 <= 1e-14 * max(l0, 1e-300) or _dot(n0, n1) <= min_cos * l0 * l1:
                return False
        return True

    def collapse(self, a: int, b: int, p) -> None:
        """Merge ``b`` into ``a`` at position ``p`` (checks are the caller's job)."""
        fs = self.edge_faces(a, b)
        for f in fs:
            for v in self.faces[f]:
                self.vf[v].discard(f)
            self.faces[f] = None
        for f in self.vf[b]:
            tri = self.faces[f]
            tri[tri.index(b)] = a
            self.vf[a].add(f)
        self.vf[b] = set()
        self.alive[b] = False
        self.n_alive -= 1
        self.pos[a] = tuple(p)
        self.feat[a] = _mid(self.feat[a], self.feat[b])

    def flip_gain(self, a: int, b: int) -> tuple[int, int, int] | None:
        """Valence-deviation reduction of flipping ``(a, b)``, with its opposite vertices."""
        fs = self.edge_faces(a, b)
        if len(fs) != 2:
            return None
        c = next(v for v in self.faces[fs[0]] if v != a and v != b)
        d = next(v for v in self.faces[fs[1]] if v != a and v != b)
        if c == d or d in self.neighbors(c):
            return None
        va, vb, vc, vd = (self.valence(v) for v in (a, b, c, d))
        if va <= 3 or vb <= 3:
            return None
        before = (va - 6) ** 2 + (vb - 6) ** 2 + (vc - 6) ** 2 + (vd - 6) ** 2
        after = (va - 7) ** 2 + (vb - 7) ** 2 + (vc - 5) ** 2 + (vd - 5) ** 2
        return before - after, c, d

    def flip(self, a: int, b: int) -> bool:
        fs = self.edge_faces(a, b)
        t0 = self.faces[fs[0]]
        k = t0.index(a)
        if t0[(k + 1) % 3] != b:
            fs = fs[::-1]
        c = next(v for v in self.faces[fs[0]] if v != a and v != b)
        d = next(v for v in self.faces[fs[1]] if v != a and v != b)
        n0, n1 = self._normal(self.faces[fs[0]]), self._normal(self.faces[fs[1]])
        n_old = (n0[0] + n1[0], n0[1] + n1[1], n0[2] + n1[2])
        new0, new1 = [a, d, c], [b, c, d]
        m0, m1 = self._normal(new0), self._normal(new1)
        if _dot(m0, n_old) <= 0 or _dot(m1, n_old) <= 0 or _dot(m0, m1) <= 0:
            return False
        f0, f1 = fs
        self.faces[f0], self.faces[f1] = new0, new1
        self.vf[b].discard(f0)
        self.vf[a].discard(f1)
        self.vf[d].add(f0)
        self.vf[c].add(f1)
        return True

    # -- output ------------------------------------------------------------
    def to_mesh(self) -> HexMesh:
        alive = np.array(self.alive)
        remap = np.full(len(alive), -1, dtype=np.int64)
        remap[alive] = np.arange(alive.sum())
        faces = np.array([f for f in self.faces if f is not None], dtype=np.int64)
        pos = np.array(self.pos, dtype=np.float64)[alive]
        feat = np.array(self.feat, dtype=np.float64).reshape(len(self.pos), self.feat_dim)[alive]
        return HexMesh(pos, remap[faces], feat, feat_dim=self.feat_dim)


def split_long_edges(em: EditableMesh, hi: float) -> int:
    n = 0
    while True:
        todo = [(a, b) for a, b in em.edges() if em.length(a, b) > hi]
        if not todo:
            return n
        for a, b in todo:
            if em.edge_faces(a, b) and em.length(a, b) > hi:
                em.split(a, b)
                n += 1


def collapse_short_edges(em: EditableMesh, lo: float, hi: float) -> int:
    n = 0
    edges = sorted(em.edges(), key=lambda e: em.length(*e))
    for a, b in edges:
        if not (em.alive[a] and em.alive[b]):
            continue
        if em.length(a, b) >= lo:
            continue
        p = _mid(em.pos[a], em.pos[b])
        if em.can_collapse(a, b, p, max_len=hi):
            em.collapse(a, b, p)
            n += 1
    return n


def equalize_valences(em: EditableMesh) -> int:
    n = 0
    for a, b in em.edges():
        g = em.flip_gain(a, b)
        if g is not None and g[0] > 0 and em.flip(a, b):
            n += 1
    return n


def tangential_relax(mesh: HexMesh, reference: HexMesh | None = None, passes: int = 1,
                     step: float = RELAX_STEP) -> HexMesh:
    """Move vertices toward their area-weighted 1-ring centroid within the tangent plane.

    With ``reference`` the result is projected onto that surface and features are
    re-sampled from it at the projected points.  Counts and topology are unchanged;
    a vertex whose move would flip or squash an incident face stays put.
    """
    from ..geometry.bvh import build_bvh, closest_points

    out = mesh.copy()
    if passes <= 0:
        return out
    f = out.faces
    bvh = build_bvh(reference) if reference is not None else None
    for _ in range(passes):
        p = out.positions
        tri = p[f]
        cen = tri.mean(axis=1)
        area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        acc = np.zeros_like(p)
        wsum = np.bincount(f.ravel(), weights=np.repeat(area, 3), minlength=len(p))
        for k in range(3):
            for ax in range(3):
                acc[:, ax] += np.bincount(f[:, k], weights=area * cen[:, ax], minlength=len(p))
        target = acc / np.where(wsum > 0, wsum, 1.0)[:, None]
        n = out.vertex_normals()
        delta = target - p
        delta -= n * np.einsum("ij,ij->i", delta, n)[:, None]
        new = p + step * delta
        feat = out.features
        if reference is not None:
            face, _, q, bary = closest_points(bvh, reference, new)
            new = q
            feat = np.einsum("nk,nkd->nd", bary, reference.features[reference.faces[face]])
        new, feat = _reject_bad_moves(out, new, feat)
        out = HexMesh(new, f, feat, feat_dim=out.feat_dim)
    return out


def _reject_bad_moves(mesh: HexMesh, new: np.ndarray, feat: np.ndarray):
    f = mesh.faces
    old_c = mesh.face_cross()
    old_a = np.linalg.norm(old_c, axis=1)
    new = new.copy()
    feat = feat.copy()
    for _ in range(4):
        tri = new[f]
        c = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        bad = (np.einsum("ij,ij->i", c, old_c) <= 0.0) | (np.linalg.norm(c, axis=1) < 1e-3 * old_a)
        if not bad.any():
            break
        v = np.unique(f[bad])
        new[v] = mesh.positions[v]
        feat[v] = mesh.features[v]
    return new, feat


def isotropic_remesh(mesh: HexMesh, target_edge_len: float, passes: int = 5,
                     project: bool = True, reference: HexMesh | None = None,
                     relax_step: float = REMESH_RELAX_STEP) -> HexMesh:
    """Split / collapse / flip / relax loop at ``target_edge_len``.

    Parameters
    ----------
    project : bool
        Project relaxed vertices back onto ``reference`` (the input mesh by default).
    relax_step : float
        Fraction of the tangential move toward the area-weighted centroid per pass.
    """
    if target_edge_len <= 0:
        raise ValueError("target_edge_len must be positive")
    if passes <= 0:
        return mesh.copy()
    hi = SPLIT_RATIO * target_edge_len
    lo = COLLAPSE_RATIO * target_edge_len
    if project and reference is None:
        reference = mesh.copy()
    elif not project:
        reference = None
    cur = mesh
    for _ in range(passes):
        em = EditableMesh(cur)
        split_long_edges(em, hi)
        collapse_short_edges(em, lo, hi)
        equalize_valences(em)
        cur = tangential_relax(em.to_mesh(), reference, step=relax_step)
    cur.validate()
    return cur


def decimate(mesh: HexMesh, target_vertices: int) -> HexMesh:
    """Shortest-edge-first collapse to ``target_vertices`` (midpoint placement)."""
    if target_vertices < 4:
        raise DataError("cannot decimate below 4 vertices")
    em = EditableMesh(mesh)
    stamp = [0] * len(em.pos)
    heap = [(em.length(a, b), a, b, 0, 0) for a, b in em.edges()]
    heapq.heapify(heap)
    while em.n_alive > target_vertices and heap:
        length, a, b, sa, sb = heapq.heappop(heap)
        if not (em.alive[a] and em.alive[b]) or stamp[a] != sa or stamp[b] != sb:
            continue
        p = _mid(em.pos[a], em.pos[b])
        if not em.can_collapse(a, b, p, min_cos=0.2):
            continue
        em.collapse(a, b, p)
        # only edges at the merged vertex change length
        stamp[a] += 1
        for n in em.neighbors(a):
            x, y = (a, n) if a < n else (n, a)
            heapq.heappush(heap, (em.length(x, y), x, y, stamp[x], stamp[y]))
    return em.to_mesh()
