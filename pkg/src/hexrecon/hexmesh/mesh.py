"""Triangle mesh container with cyclic one-ring adjacency."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TopologyError

DEFAULT_FEAT_DIM = 8


@dataclass(frozen=True)
class Adjacency:
    """Cyclically ordered one-rings in CSR layout.

    ``idx[ptr[i]:ptr[i + 1]]`` lists the neighbors of vertex ``i`` counter-clockwise
    around the outward normal, starting from the smallest neighbor index.  For a
    boundary vertex (only when built with ``allow_boundary=True``) the list is the
    open fan from the first to the last boundary neighbor and ``boundary[i]`` is set.
    """

    ptr: np.ndarray
    idx: np.ndarray
    boundary: np.ndarray

    def ring(self, i: int) -> np.ndarray:
        return self.idx[self.ptr[i]:self.ptr[i + 1]]

    @property
    def valence(self) -> np.ndarray:
        return np.diff(self.ptr)

    def __len__(self) -> int:
        return len(self.ptr) - 1


class HexMesh:
    """Explicit surface: vertex positions, CCW faces and per-vertex features.

    Topology-derived data (adjacency, edges, the regularizer matrix) is cached and
    dropped by :meth:`invalidate`.  Positions and features may be edited in place
    without invalidating anything.

    Parameters
    ----------
    positions : array_like, shape (V, 3)
    faces : array_like, shape (F, 3)
        Counter-clockwise vertex triples (outward normal by the right-hand rule).
    features : array_like, shape (V, feat_dim), optional
        Zero-initialized when omitted.
    feat_dim : int
        Feature width used when ``features`` is omitted.
    """

    def __init__(self, positions, faces, features=None, feat_dim: int = DEFAULT_FEAT_DIM):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64).reshape(-1, 3)
        nv = len(self.positions)
        if features is None:
            features = np.zeros((nv, feat_dim))
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        if self.features.ndim != 2 or len(self.features) != nv:
            raise TopologyError(
                f"features must have one row per vertex: got {self.features.shape} for {nv} vertices")
        if len(self.faces):
            if self.faces.min() < 0 or self.faces.max() >= nv:
                raise TopologyError("face index out of range")
            f = self.faces
            bad = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if bad.any():
                raise TopologyError(f"degenerate face {int(np.flatnonzero(bad)[0])}: {f[bad][0].tolist()}")
        self._cache: dict = {}

    # -- bookkeeping -----------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def feat_dim(self) -> int:
        return self.features.shape[1]

    def invalidate(self) -> None:
        """Drop every cached topology-derived quantity."""
        self._cache.clear()

    def copy(self) -> HexMesh:
        return HexMesh(self.positions.copy(), self.faces.copy(), self.features.copy())

    def __repr__(self) -> str:
        return f"HexMesh(V={self.n_vertices}, F={self.n_faces}, feat_dim={self.feat_dim})"

    # -- topology --------------------------------------------------------
    def adjacency(self, allow_boundary: bool = False) -> Adjacency:
        key = ("adjacency", allow_boundary)
        if key not in self._cache:
            self._cache[key] = build_adjacency(self, allow_boundary=allow_boundary)
        return self._cache[key]

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges ``(E, 2)`` with ``edges[:, 0] < edges[:, 1]``."""
        if "edges" not in self._cache:
            self._build_edges()
        return self._cache["edges"]

    @property
    def face_edges(self) -> np.ndarray:
        """``(F, 3)`` edge ids; column k is edge ``(f[k], f[(k + 1) % 3])``."""
        if "edges" not in self._cache:
            self._build_edges()
        return self._cache["face_edges"]

    @property
    def edge_faces(self) -> np.ndarray:
        """``(E, 2)`` incident faces per edge, ``-1`` where an edge is on the boundary."""
        if "edges" not in self._cache:
            self._build_edges()
        return self._cache["edge_faces"]

    def _build_edges(self) -> None:
        f = self.faces
        he = np.stack([f, np.roll(f, -1, axis=1)], axis=-1).reshape(-1, 2)
        und = np.sort(he, axis=1)
        edges, inverse, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if (counts > 2).any():
            e = edges[np.flatnonzero(counts > 2)[0]]
            raise TopologyError(f"non-manifold edge ({e[0]}, {e[1]}) has {counts.max()} incident faces")
        face_of_he = np.repeat(np.arange(len(f)), 3)
        edge_faces = np.full((len(edges), 2), -1, dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        inv_sorted = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = inv_sorted[1:] != inv_sorted[:-1]
        edge_faces[inv_sorted[first], 0] = face_of_he[order[first]]
        edge_faces[inv_sorted[~first], 1] = face_of_he[order[~first]]
        self._cache["edges"] = edges
        self._cache["face_edges"] = inverse.reshape(-1, 3)
        self._cache["edge_faces"] = edge_faces

    def valences(self) -> np.ndarray:
        e = self.edges
        return np.bincount(e.ravel(), minlength=self.n_vertices)

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    def is_closed(self) -> bool:
        return bool((self.edge_faces[:, 1] >= 0).all())

    # -- geometry --------------------------------------------------------
    def face_cross(self) -> np.ndarray:
        """Unnormalized face normals ``(p1 - p0) x (p2 - p0)`` (twice the area)."""
        p = self.positions[self.faces]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_cross(), axis=1)

    def surface_area(self) -> float:
        return float(self.face_areas().sum())

    def vertex_normals(self) -> np.ndarray:
        """Unit area-weighted vertex normals."""
        acc = np.zeros_like(self.positions)
        c = self.face_cross()
        for k in range(3):
            np.add.at(acc, self.faces[:, k], c)
        n = np.linalg.norm(acc, axis=1, keepdims=True)
        return acc / np.where(n > 0, n, 1.0)

    def signed_volume(self) -> float:
        p = self.positions[self.faces]
        return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)

    def mean_edge_length(self) -> float:
        e = self.edges
        return float(np.linalg.norm(self.positions[e[:, 0]] - self.positions[e[:, 1]], axis=1).mean())

    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.positions.max(0) - self.positions.min(0)))

    def validate(self) -> None:
        """Check closedness, manifoldness and consistent orientation; raise on failure."""
        build_adjacency(self)


def build_adjacency(mesh: HexMesh, allow_boundary: bool = False) -> Adjacency:
    """Cyclically ordered one-rings of every vertex.

    Raises
    ------
    TopologyError
        On an edge without exactly two oppositely oriented faces (a boundary edge
        only when ``allow_boundary`` is false), on a vertex whose faces form more
        than one fan, or on a vertex with no faces.
    """
    nv = mesh.n_vertices
    f = mesh.faces
    if len(f) == 0:
        raise TopologyError("mesh has no faces")
    # Around vertex f[k], the face sweeps from f[k+1] to f[k+2].
    center = f.reshape(-1)
    src = np.roll(f, -1, axis=1).reshape(-1)
    dst = np.roll(f, -2, axis=1).reshape(-1)

    # Directed half-edges src->dst must be unique (orientation consistency).
    key = center * nv + src
    order = np.argsort(key, kind="stable")
    ks = key[order]
    dup = np.flatnonzero(ks[1:] == ks[:-1])
    if len(dup):
        i = order[dup[0]]
        raise TopologyError(
            f"non-manifold or inconsistently oriented edge ({center[i]}, {src[i]})")

    c_s, src_s, dst_s = center[order], src[order], dst[order]
    deg = np.bincount(c_s, minlength=nv)
    if (deg == 0).any():
        raise TopologyError(f"vertex {int(np.flatnonzero(deg == 0)[0])} has no incident faces")
    start = np.concatenate([[0], np.cumsum(deg)[:-1]])

    nxt_key = c_s * nv + dst_s
    pos = np.searchsorted(ks, nxt_key)
    pos = np.minimum(pos, len(ks) - 1)
    has_next = ks[pos] == nxt_key
    nxt = np.where(has_next, pos, -1)

    # A sweep with no successor ends at a boundary edge.
    open_center = np.zeros(nv, dtype=bool)
    open_center[c_s[~has_next]] = True
    if open_center.any() and not allow_boundary:
        i = np.flatnonzero(~has_next)[0]
        a, b = sorted((int(c_s[i]), int(dst_s[i])))
        raise TopologyError(f"boundary edge ({a}, {b}) has only one incident face; mesh is not closed")

    ring_len = deg + open_center
    ptr = np.concatenate([[0], np.cumsum(ring_len)]).astype(np.int64)
    idx = np.empty(ptr[-1], dtype=np.int64)

    closed_v = np.flatnonzero(~open_center)
    if len(closed_v):
        cur = start[closed_v].copy()
        first = cur.copy()
        d = deg[closed_v]
        for step in range(int(d.max())):
            act = d > step
            v = closed_v[act]
            c = cur[act]
            idx[ptr[v] + step] = src_s[c]
            c = nxt[c]
            cur[act] = c
            early = (c == first[act]) & (d[act] > step + 1)
            if early.any():
                bad = int(v[np.flatnonzero(early)[0]])
                raise TopologyError(f"vertex {bad} is non-manifold (faces form several fans)")
        if (cur != first).any():
            bad = int(closed_v[np.flatnonzero(cur != first)[0]])
            raise TopologyError(f"vertex {bad} is non-manifold")

    for v in np.flatnonzero(open_center):
        lo, hi = start[v], start[v] + deg[v]
        incoming = set(dst_s[lo:hi].tolist())
        heads = [k for k in range(lo, hi) if src_s[k] not in incoming]
        if len(heads) != 1:
            raise TopologyError(f"vertex {int(v)} is non-manifold (faces form several fans)")
        k = heads[0]
        out = [int(src_s[k])]
        for _ in range(deg[v]):
            out.append(int(dst_s[k]))
            k = nxt[k]
            if k < 0:
                break
        if len(out) != deg[v] + 1:
            raise TopologyError(f"vertex {int(v)} is non-manifold (faces form several fans)")
        idx[ptr[v]:ptr[v + 1]] = out

    return Adjacency(ptr=ptr, idx=idx, boundary=open_center)
