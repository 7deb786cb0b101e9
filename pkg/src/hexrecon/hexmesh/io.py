"""OBJ and binary PLY mesh files.

PLY files store positions as 64-bit doubles so a round trip is bitwise exact;
per-vertex features are written as ``f0 .. f{n-1}`` double properties.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from plyfile import PlyData, PlyElement

from ..errors import DataError
from .mesh import DEFAULT_FEAT_DIM, HexMesh


def export_mesh(mesh: HexMesh, path, format: str | None = None) -> Path:
    """Write ``mesh`` as OBJ or binary little-endian PLY (picked from the suffix by default)."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if not path.parent.is_dir():
        raise DataError(f"cannot write {path}: directory {path.parent} does not exist")
    try:
        if fmt == "obj":
            _write_obj(mesh, path)
        elif fmt == "ply":
            _write_ply(mesh, path)
        else:
            raise DataError(f"unknown mesh format {fmt!r} for {path}")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path


def load_mesh(path, feat_dim: int = DEFAULT_FEAT_DIM) -> HexMesh:
    """Read an OBJ or PLY file written by :func:`export_mesh` (or any triangle mesh)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"mesh file not found: {path}")
    fmt = path.suffix.lstrip(".").lower()
    if fmt == "obj":
        return _read_obj(path, feat_dim)
    if fmt == "ply":
        return _read_ply(path, feat_dim)
    raise DataError(f"unknown mesh format for {path}")


def _write_obj(mesh: HexMesh, path: Path) -> None:
    with open(path, "w") as fh:
        for p in mesh.positions.tolist():
            fh.write(f"v {p[0]!r} {p[1]!r} {p[2]!r}\n")
        for f in mesh.faces + 1:
            fh.write(f"f {f[0]} {f[1]} {f[2]}\n")


def _read_obj(path: Path, feat_dim: int) -> HexMesh:
    verts, faces = [], []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            try:
                if tok[0] == "v":
                    verts.append([float(x) for x in tok[1:4]])
                elif tok[0] == "f":
                    idx = [int(t.split("/")[0]) for t in tok[1:]]
                    idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                    if len(idx) < 3:
                        raise ValueError("face with fewer than 3 vertices")
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
            except ValueError as exc:
                raise DataError(f"{path}:{n}: malformed line {line.strip()!r}") from exc
    if not verts or not faces:
        raise DataError(f"{path}: no vertices or faces")
    return HexMesh(np.array(verts), np.array(faces), feat_dim=feat_dim)


def _write_ply(mesh: HexMesh, path: Path) -> None:
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    fields += [(f"f{k}", "<f8") for k in range(mesh.feat_dim)]
    v = np.empty(mesh.n_vertices, dtype=fields)
    v["x"], v["y"], v["z"] = mesh.positions.T
    for k in range(mesh.feat_dim):
        v[f"f{k}"] = mesh.features[:, k]
    f = np.empty(mesh.n_faces, dtype=[("vertex_indices", "<i4", (3,))])
    f["vertex_indices"] = mesh.faces
    PlyData([PlyElement.describe(v, "vertex"), PlyElement.describe(f, "face")],
            text=False, byte_order="<").write(str(path))


def _read_ply(path: Path, feat_dim: int) -> HexMesh:
    try:
        ply = PlyData.read(str(path))
        v = ply["vertex"].data
        fdata = ply["face"].data
    except Exception as exc:  # plyfile raises a variety of parse errors
        raise DataError(f"{path}: malformed PLY ({exc})") from exc
    names = v.dtype.names
    if not {"x", "y", "z"} <= set(names):
        raise DataError(f"{path}: vertex element lacks x/y/z")
    pos = np.stack([v["x"], v["y"], v["z"]], 1).astype(np.float64)
    fkeys = sorted((n for n in names if n[0] == "f" and n[1:].isdigit()), key=lambda n: int(n[1:]))
    feats = np.stack([v[k] for k in fkeys], 1).astype(np.float64) if fkeys else None
    key = "vertex_indices" if "vertex_indices" in fdata.dtype.names else fdata.dtype.names[0]
    faces = np.stack([np.asarray(r, dtype=np.int64) for r in fdata[key]]) if len(fdata) else None
    if faces is None or faces.shape[1] != 3:
        raise DataError(f"{path}: expected a non-empty triangle face list")
    return HexMesh(pos, faces, feats, feat_dim=feat_dim)
