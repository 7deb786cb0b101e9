"""1-to-4 midpoint subdivision."""

from __future__ import annotations

import numpy as np

from .mesh import HexMesh


def subdivide(mesh: HexMesh) -> HexMesh:
    """Split every face into four by inserting one vertex at each edge midpoint.

    New vertex ``V + e`` sits at the midpoint of edge ``e`` (in ``mesh.edges`` order)
    and carries the average of its endpoints' features.  Every inserted vertex has
    valence 6 on a closed mesh and the original vertices keep their valence, so
    ``V' = V + E`` and ``F' = 4F``.
    """
    nv = mesh.n_vertices
    e = mesh.edges
    fe = mesh.face_edges + nv
    pos = np.concatenate([mesh.positions, 0.5 * (mesh.positions[e[:, 0]] + mesh.positions[e[:, 1]])])
    feat = np.concatenate([mesh.features, 0.5 * (mesh.features[e[:, 0]] + mesh.features[e[:, 1]])])
    f = mesh.faces
    # fe[:, 0] = m01, fe[:, 1] = m12, fe[:, 2] = m20
    m01, m12, m20 = fe[:, 0], fe[:, 1], fe[:, 2]
    faces = np.concatenate([
        np.stack([f[:, 0], m01, m20], -1),
        np.stack([f[:, 1], m12, m01], -1),
        np.stack([f[:, 2], m20, m12], -1),
        np.stack([m01, m12, m20], -1),
    ])
    return HexMesh(pos, faces, feat)
