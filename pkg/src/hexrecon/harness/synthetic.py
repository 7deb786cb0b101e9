"""Procedural ground-truth scenes: analytic shapes, textured shading, exact masks and normals.

Shapes are implicit surfaces ``g(p) = 0`` (negative inside).  Rays are marched
inside a bounding sphere to the first sign change and refined by bisection, so
images, masks and normals are exact up to float precision.  The matching
ground-truth mesh is a dense tessellation of the same surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import Camera, look_at
from ..hexmesh import HexMesh, icosphere, uv_torus
from .scene import Scene, View

SHAPES = ("sphere", "torus", "blob")
CAMERA_RADIUS = 3.0
FOCAL_SCALE = 1.07          # fx = FOCAL_SCALE * width, about 50 degrees field of view
BOUND_RADIUS = 1.3
TORUS_R, TORUS_r = 0.75, 0.3
LIGHT = np.array([0.4, 0.5, 0.75]) / np.linalg.norm([0.4, 0.5, 0.75])
AMBIENT, DIFFUSE, SPECULAR, SHININESS = 0.3, 0.7, 0.25, 20.0


# -- shapes ------------------------------------------------------------------
def _blob_radius(u: np.ndarray) -> np.ndarray:
    x, y, z = u[..., 0], u[..., 1], u[..., 2]
    return 0.9 + 0.08 * np.sin(3 * x + 0.5) * np.cos(2 * y) + 0.06 * z * z - 0.05 * x * y


def implicit(shape: str, p: np.ndarray) -> np.ndarray:
    if shape == "sphere":
        return np.linalg.norm(p, axis=-1) - 1.0
    if shape == "torus":
        q = np.linalg.norm(p[..., :2], axis=-1) - TORUS_R
        return np.hypot(q, p[..., 2]) - TORUS_r
    if shape == "blob":
        r = np.linalg.norm(p, axis=-1)
        u = p / np.maximum(r, 1e-12)[..., None]
        return r - _blob_radius(u)
    raise ValueError(f"unknown shape {shape!r}; choose from {SHAPES}")


def implicit_normal(shape: str, p: np.ndarray) -> np.ndarray:
    if shape == "sphere":
        g = p.copy()
    elif shape == "torus":
        rho = np.maximum(np.linalg.norm(p[:, :2], axis=1), 1e-12)
        c = np.zeros_like(p)
        c[:, :2] = p[:, :2] * (TORUS_R / rho)[:, None]
        g = p - c
    else:
        h = 1e-6
        g = np.stack([implicit(shape, p + h * e) - implicit(shape, p - h * e) for e in np.eye(3)], 1)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def ground_truth_mesh(shape: str, level: int = 6) -> HexMesh:
    """Dense tessellation of ``shape`` (icosphere level ``level`` for sphere and blob)."""
    if shape == "sphere":
        return icosphere(level)
    if shape == "torus":
        return uv_torus(TORUS_R, TORUS_r, n_major=256, n_minor=96)
    if shape == "blob":
        m = icosphere(level)
        m.positions *= _blob_radius(m.positions)[:, None]
        return m
    raise ValueError(f"unknown shape {shape!r}; choose from {SHAPES}")


def trace(shape: str, origins: np.ndarray, dirs: np.ndarray, n_steps: int = 384,
          n_bisect: int = 60, chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """First-hit distance ``t`` (``inf`` on a miss) and hit flags for unit ``dirs``."""
    if len(dirs) > chunk:
        parts = [trace(shape, origins[i:i + chunk], dirs[i:i + chunk], n_steps, n_bisect, chunk)
                 for i in range(0, len(dirs), chunk)]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    b = np.einsum("ij,ij->i", origins, dirs)
    c = np.einsum("ij,ij->i", origins, origins) - BOUND_RADIUS ** 2
    disc = b * b - c
    t = np.full(len(dirs), np.inf)
    rows = np.flatnonzero(disc > 0)
    if not len(rows):
        return t, np.zeros(len(dirs), bool)
    sq = np.sqrt(disc[rows])
    t0 = np.maximum(-b[rows] - sq, 0.0)
    t1 = -b[rows] + sq
    o, d = origins[rows], dirs[rows]
    s = np.linspace(0.0, 1.0, n_steps)
    ts = t0[:, None] + (t1 - t0)[:, None] * s[None, :]
    g = implicit(shape, o[:, None, :] + ts[..., None] * d[:, None, :])
    neg = g < 0
    found = neg.any(axis=1)
    k = np.argmax(neg, axis=1)
    ok = found & (k > 0)
    r = np.flatnonzero(ok)
    lo = ts[r, k[r] - 1]
    hi = ts[r, k[r]]
    oo, dd = o[r], d[r]
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        inside = implicit(shape, oo + mid[:, None] * dd) < 0
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    t[rows[r]] = 0.5 * (lo + hi)
    return t, np.isfinite(t)


# -- appearance --------------------------------------------------------------
@dataclass(frozen=True)
class Texture:
    """Smooth procedural albedo ``0.5 + sum_j a_j sin(w_j . p + phi_j)`` per channel."""

    freqs: np.ndarray    # (3, J, 3)
    phases: np.ndarray   # (3, J)
    amps: np.ndarray     # (3, J)

    @classmethod
    def from_seed(cls, seed: int, n_waves: int = 3) -> Texture:
        rng = np.random.default_rng(seed)
        dirs = rng.normal(size=(3, n_waves, 3))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        freqs = dirs * rng.uniform(1.5, 4.0, size=(3, n_waves, 1))
        phases = rng.uniform(0, 2 * np.pi, size=(3, n_waves))
        amps = rng.uniform(0.08, 0.16, size=(3, n_waves))
        return cls(freqs, phases, amps)

    def __call__(self, p: np.ndarray) -> np.ndarray:
        arg = np.einsum("nd,cjd->ncj", p, self.freqs) + self.phases[None]
        return np.clip(0.5 + (self.amps[None] * np.sin(arg)).sum(-1), 0.02, 0.98)


def shade_surface(texture: Texture, x: np.ndarray, n: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Lambertian term with ambient light plus one Blinn-Phong highlight."""
    alb = texture(x)
    lam = np.maximum(n @ LIGHT, 0.0)
    h = LIGHT[None, :] - d
    h /= np.maximum(np.linalg.norm(h, axis=1, keepdims=True), 1e-12)
    spec = SPECULAR * np.maximum(np.einsum("ij,ij->i", n, h), 0.0) ** SHININESS
    return np.clip(alb * (AMBIENT + DIFFUSE * lam)[:, None] + spec[:, None], 0.0, 1.0)


def oracle_shader(texture: Texture):
    """Callable ``f(x, n, h, d)`` reproducing the generator's shading (``h`` unused)."""
    def f(x, n, h, d):
        return shade_surface(texture, x, n, d)
    return f


# -- cameras and scenes ------------------------------------------------------
def fibonacci_directions(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    r = np.sqrt(1.0 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], 1)


def synthetic_cameras(n_views: int, res: int) -> list[Camera]:
    f = FOCAL_SCALE * res
    return [look_at(CAMERA_RADIUS * u, np.zeros(3), [0.0, 0.0, 1.0], f, f, res, res)
            for u in fibonacci_directions(n_views)]


def render_analytic(shape: str, camera: Camera, texture: Texture):
    """``(image, mask, normals)`` of the analytic shape."""
    o, d = camera.pixel_rays()
    t, hit = trace(shape, o, d)
    H, W = camera.height, camera.width
    img = np.zeros((H * W, 3))
    nrm = np.zeros((H * W, 3))
    r = np.flatnonzero(hit)
    x = o[r] + t[r, None] * d[r]
    n = implicit_normal(shape, x)
    img[r] = shade_surface(texture, x, n, d[r])
    nrm[r] = n
    # unit-length placeholder off the object keeps every stored normal valid
    nrm[~hit] = -d[~hit]
    return img.reshape(H, W, 3), hit.reshape(H, W), nrm.reshape(H, W, 3)


def generate_synthetic(shape: str = "sphere", n_views: int = 24, res: int = 128, seed: int = 0,
                       gt_level: int = 6) -> tuple[Scene, HexMesh]:
    """Scene of ``n_views`` Fibonacci-spaced views of ``shape`` and its ground-truth mesh."""
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; choose from {SHAPES}")
    if n_views < 4:
        raise ValueError("need at least 4 views")
    tex = Texture.from_seed(seed)
    views = []
    for i, cam in enumerate(synthetic_cameras(n_views, res)):
        img, mask, nrm = render_analytic(shape, cam, tex)
        views.append(View(i, img, mask, cam, nrm))
    gt = ground_truth_mesh(shape, gt_level)
    return Scene(views, gt), gt
