"""Closed and open reference meshes used for initialization, ground truth and tests."""

from __future__ import annotations

import numpy as np

from .mesh import HexMesh
from .subdivision import subdivide


def tetrahedron() -> HexMesh:
    p = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / np.sqrt(3)
    f = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]
    return HexMesh(p, f)


def octahedron() -> HexMesh:
    p = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
    f = [[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
         [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]]
    return HexMesh(p, f)


def icosahedron() -> HexMesh:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    p = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    f = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    return HexMesh(p, f)


def icosphere(level: int, radius: float = 1.0) -> HexMesh:
    """Geodesic sphere: icosahedron split ``level`` times, vertices pushed to the sphere."""
    m = icosahedron()
    for _ in range(level):
        m = subdivide(m)
    m.positions *= radius / np.linalg.norm(m.positions, axis=1, keepdims=True)
    return m


def uv_torus(major: float = 0.7, minor: float = 0.3, n_major: int = 48, n_minor: int = 24) -> HexMesh:
    """Torus around the z axis tessellated on a regular (u, v) grid."""
    u = 2 * np.pi * np.arange(n_major) / n_major
    v = 2 * np.pi * np.arange(n_minor) / n_minor
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ring = major + minor * np.cos(vv)
    p = np.stack([ring * np.cos(uu), ring * np.sin(uu), minor * np.sin(vv)], -1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(n_major), np.arange(n_minor), indexing="ij")
    a = i * n_minor + j
    b = ((i + 1) % n_major) * n_minor + j
    c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
    d = i * n_minor + (j + 1) % n_minor
    f = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3),
                        np.stack([a, c, d], -1).reshape(-1, 3)])
    return HexMesh(p, f)


def lattice_patch(n: int, spacing: float = 1.0) -> tuple[HexMesh, np.ndarray]:
    """Planar regular triangular lattice on an ``n`` x ``n`` rhombus in the z=0 plane.

    Returns the open mesh and a boolean mask of interior vertices.
    """
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    x = spacing * (i + 0.5 * j)
    y = spacing * (np.sqrt(3) / 2) * j
    p = np.stack([x, y, np.zeros_like(x)], -1).reshape(-1, 3)
    a = (i * n + j)[:-1, :-1]
    b = ((i + 1) * n + j)[:-1, :-1]
    c = ((i + 1) * n + j + 1)[:-1, :-1]
    d = (i * n + j + 1)[:-1, :-1]
    f = np.concatenate([np.stack([a, b, d], -1).reshape(-1, 3),
                        np.stack([b, c, d], -1).reshape(-1, 3)])
    interior = ((i > 0) & (i < n - 1) & (j > 0) & (j < n - 1)).reshape(-1)
    return HexMesh(p, f), interior


def quad(size: float = 1.0, z: float = 0.0) -> HexMesh:
    """Axis-aligned square of two triangles centred at the origin, normal +z."""
    h = size / 2
    p = [[-h, -h, z], [h, -h, z], [h, h, z], [-h, h, z]]
    return HexMesh(p, [[0, 1, 2], [0, 2, 3]])
