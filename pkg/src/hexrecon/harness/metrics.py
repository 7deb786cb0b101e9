"""Evaluation metrics: Chamfer distance, PSNR, IoU."""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..geometry import build_bvh, closest_points
from ..hexmesh import HexMesh

PSNR_CAP = 99.0


def sample_surface(mesh: HexMesh, n: int, seed: int) -> np.ndarray:
    """``n`` area-weighted uniform samples on the surface of ``mesh``."""
    rng = np.random.default_rng(seed)
    area = mesh.face_areas()
    cdf = np.cumsum(area)
    face = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    face = np.minimum(face, len(area) - 1)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    b = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], 1)
    return np.einsum("nk,nkd->nd", b, mesh.positions[mesh.faces[face]])


def one_sided(points: np.ndarray, mesh: HexMesh) -> np.ndarray:
    _, dist, _, _ = closest_points(build_bvh(mesh), mesh, points)
    return dist


def chamfer(mesh_a: HexMesh, mesh_b: HexMesh, n_samples: int = 100_000, seed: int = 0) -> float:
    """Symmetric mean point-to-surface distance.

    Both meshes are sampled with the same ``seed``, so ``chamfer(a, b) == chamfer(b, a)``.
    """
    if mesh_a.n_faces == 0 or mesh_b.n_faces == 0:
        raise DataError("chamfer needs two non-empty meshes")
    d_ab = one_sided(sample_surface(mesh_a, n_samples, seed), mesh_b).mean()
    d_ba = one_sided(sample_surface(mesh_b, n_samples, seed), mesh_a).mean()
    return float(0.5 * (d_ab + d_ba))


def psnr(img_a, img_b, mask=None) -> float:
    """``10 log10(1 / MSE)`` over (masked) pixels, capped at 99 dB for identical inputs."""
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise DataError("psnr: empty mask")
        a, b = a[mask], b[mask]
    mse = float(np.mean((a - b) ** 2))
    if mse <= 10.0 ** (-PSNR_CAP / 10.0):
        return PSNR_CAP
    return float(10.0 * np.log10(1.0 / mse))


def iou(mask_a, mask_b) -> float:
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)
