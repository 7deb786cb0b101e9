"""Calibrated multi-view scenes on disk.

Layout of a scene directory::

    cameras.json        {"views": [{"index", "K", "world_to_camera", "width", "height"}, ...]}
    images/000.png      8-bit RGB
    masks/000.png       8-bit gray, > 127 is foreground
    normals/000.png     optional, 16-bit RGB, [0, 65535] -> [-1, 1] per channel
    gt.ply              optional ground-truth mesh (synthetic scenes)

``K`` is the row-major 3x3 intrinsic matrix and ``world_to_camera`` the
row-major 4x4 extrinsic matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import png

from ..errors import DataError
from ..geometry import Camera
from ..hexmesh import HexMesh
from ..hexmesh.io import export_mesh, load_mesh


@dataclass
class View:
    index: int
    image: np.ndarray               # (H, W, 3) float in [0, 1]
    mask: np.ndarray                # (H, W) bool
    camera: Camera
    normals: np.ndarray | None = None  # (H, W, 3) unit world-space normals

    def downsampled(self, factor: int) -> View:
        """Block-average by an integer ``factor``."""
        if factor == 1:
            return self
        H, W = self.mask.shape
        if H % factor or W % factor:
            raise DataError(f"view {self.index}: {W}x{H} is not divisible by {factor}")

        def pool(a):
            return a.reshape(H // factor, factor, W // factor, factor, *a.shape[2:]).mean(axis=(1, 3))

        nrm = None
        if self.normals is not None:
            nrm = pool(self.normals)
            nrm /= np.maximum(np.linalg.norm(nrm, axis=-1, keepdims=True), 1e-12)
        return View(self.index, pool(self.image), pool(self.mask.astype(float)) > 0.5,
                    self.camera.scaled(1.0 / factor), nrm)


@dataclass
class Scene:
    views: list[View]
    gt_mesh: HexMesh | None = None

    def __len__(self) -> int:
        return len(self.views)

    @property
    def cameras(self) -> list[Camera]:
        return [v.camera for v in self.views]

    @property
    def masks(self) -> list[np.ndarray]:
        return [v.mask for v in self.views]

    @property
    def has_normals(self) -> bool:
        return all(v.normals is not None for v in self.views)

    def split(self, holdout_fraction: float = 0.1) -> tuple[Scene, Scene]:
        """``(train, test)``: the lowest-index ``holdout_fraction`` of views is held out."""
        order = sorted(self.views, key=lambda v: v.index)
        n_test = int(np.floor(holdout_fraction * len(order) + 1e-9))
        return (Scene(order[n_test:], self.gt_mesh), Scene(order[:n_test], self.gt_mesh))

    def resized(self, width: int | None) -> Scene:
        if width is None:
            return self
        out = []
        for v in self.views:
            W = v.camera.width
            if W % width:
                raise DataError(f"view {v.index}: width {W} is not a multiple of {width}")
            out.append(v.downsampled(W // width))
        return replace(self, views=out)


# -- PNG helpers -------------------------------------------------------------
def write_png(path, array: np.ndarray, bitdepth: int = 8) -> None:
    a = np.asarray(array)
    h, w = a.shape[:2]
    greyscale = a.ndim == 2
    rows = a.reshape(h, -1)
    with open(path, "wb") as fh:
        png.Writer(w, h, greyscale=greyscale, bitdepth=bitdepth).write(fh, rows.tolist())


def read_png(path) -> tuple[np.ndarray, int]:
    """``(array, bitdepth)``; gray images come back 2-D, color images ``(H, W, 3)``."""
    try:
        w, h, rows, info = png.Reader(filename=str(path)).asDirect()
        data = np.vstack([np.asarray(r, dtype=np.uint32) for r in rows])
    except (png.Error, OSError, ValueError) as exc:
        raise DataError(f"{path}: unreadable PNG ({exc})") from exc
    planes = info["planes"]
    data = data.reshape(h, w, planes)
    if info.get("alpha"):
        data = data[..., :-1]
        planes -= 1
    return (data[..., 0] if planes == 1 else data), info["bitdepth"]


def encode_normals(n: np.ndarray) -> np.ndarray:
    return np.round((np.clip(n, -1, 1) + 1.0) * 0.5 * 65535).astype(np.uint16)


def decode_normals(a: np.ndarray) -> np.ndarray:
    n = a.astype(np.float64) / 65535.0 * 2.0 - 1.0
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    return n / np.where(norm > 0, norm, 1.0)


# -- scene I/O ---------------------------------------------------------------
def _name(index: int, width: int) -> str:
    return f"{index:0{width}d}.png"


def save_scene(scene: Scene, path) -> Path:
    path = Path(path)
    for sub in ("images", "masks") + (("normals",) if scene.has_normals else ()):
        (path / sub).mkdir(parents=True, exist_ok=True)
    pad = max(3, len(str(max(v.index for v in scene.views))))
    entries = []
    for v in scene.views:
        c = v.camera
        entries.append({"index": v.index, "K": c.K.ravel().tolist(),
                        "world_to_camera": c.world_to_camera.ravel().tolist(),
                        "width": c.width, "height": c.height})
        name = _name(v.index, pad)
        write_png(path / "images" / name, np.round(np.clip(v.image, 0, 1) * 255).astype(np.uint8))
        write_png(path / "masks" / name, np.where(v.mask, 255, 0).astype(np.uint8))
        if v.normals is not None:
            write_png(path / "normals" / name, encode_normals(v.normals), bitdepth=16)
    (path / "cameras.json").write_text(json.dumps({"views": entries}, indent=1))
    if scene.gt_mesh is not None:
        export_mesh(scene.gt_mesh, path / "gt.ply")
    return path


def load_cameras(path) -> dict[int, Camera]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"camera file not found: {path}")
    try:
        doc = json.loads(path.read_text())
        cams = {}
        for e in doc["views"]:
            cams[int(e["index"])] = Camera.from_matrices(e["K"], e["world_to_camera"],
                                                         int(e["width"]), int(e["height"]))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed camera file ({exc})") from exc
    return cams


def _index_of(p: Path) -> int:
    try:
        return int(p.stem)
    except ValueError as exc:
        raise DataError(f"{p}: file name is not a view index") from exc


def load_scene(path) -> Scene:
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"scene directory not found: {path}")
    cams = load_cameras(path / "cameras.json")
    img_dir, mask_dir, nrm_dir = path / "images", path / "masks", path / "normals"
    if not img_dir.is_dir() or not mask_dir.is_dir():
        raise DataError(f"{path}: needs images/ and masks/ directories")
    images = {_index_of(p): p for p in sorted(img_dir.glob("*.png"))}
    if not images:
        raise DataError(f"{img_dir}: no PNG images")
    views = []
    for idx, ipath in sorted(images.items()):
        if idx not in cams:
            raise DataError(f"{ipath}: no camera entry with index {idx} in cameras.json")
        cam = cams[idx]
        img, depth = read_png(ipath)
        if img.ndim != 3:
            raise DataError(f"{ipath}: expected an RGB image")
        img = img.astype(np.float64) / (2 ** depth - 1)
        _check_size(ipath, img.shape[:2], cam)
        mpath = mask_dir / ipath.name
        if not mpath.is_file():
            raise DataError(f"{mpath}: mask missing for view {idx}")
        m, mdepth = read_png(mpath)
        if m.ndim != 2:
            raise DataError(f"{mpath}: expected a grayscale mask")
        _check_size(mpath, m.shape, cam)
        mask = m > (127 if mdepth == 8 else (2 ** mdepth - 1) // 2)
        normals = None
        npath = nrm_dir / ipath.name
        if npath.is_file():
            n, ndepth = read_png(npath)
            if n.ndim != 3 or ndepth != 16:
                raise DataError(f"{npath}: expected a 16-bit RGB normal map")
            _check_size(npath, n.shape[:2], cam)
            normals = decode_normals(n)
        views.append(View(idx, img, mask, cam, normals))
    missing = sorted(set(cams) - set(images))
    if missing:
        raise DataError(f"{path / 'cameras.json'}: camera(s) {missing} have no image")
    gt = load_mesh(path / "gt.ply") if (path / "gt.ply").is_file() else None
    return Scene(views, gt)


def _check_size(path, shape, cam: Camera) -> None:
    if tuple(shape) != (cam.height, cam.width):
        raise DataError(f"{path}: size {shape[1]}x{shape[0]} does not match camera "
                        f"{cam.width}x{cam.height}")
