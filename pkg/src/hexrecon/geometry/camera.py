"""Pinhole cameras.

Conventions: ``X_cam = R X_world + t``; the camera looks down its local +z axis,
image x grows with camera x and image y with camera y.  Pixel ``(px, py)`` covers
the continuous image square ``[px, px+1) x [py, py+1)``, so its center sits at
``(px + 0.5, py + 0.5)``.  :func:`project` returns continuous image coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray
    t: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        if not (self.fx > 0 and self.fy > 0):
            raise DataError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or np.linalg.det(R) < 0:
            raise DataError("camera rotation must be orthonormal with determinant +1")
        if self.width <= 0 or self.height <= 0:
            raise DataError("image size must be positive")

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    @property
    def world_to_camera(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3], m[:3, 3] = self.R, self.t
        return m

    @classmethod
    def from_matrices(cls, K, world_to_camera, width: int, height: int) -> Camera:
        K = np.asarray(K, dtype=np.float64).reshape(3, 3)
        M = np.asarray(world_to_camera, dtype=np.float64).reshape(4, 4)
        if abs(K[0, 1]) > 1e-12 or np.any(np.abs(K[2] - [0, 0, 1]) > 1e-12):
            raise DataError("intrinsic matrix must be [[fx,0,cx],[0,fy,cy],[0,0,1]]")
        return cls(K[0, 0], K[1, 1], K[0, 2], K[1, 2], M[:3, :3], M[:3, 3], int(width), int(height))

    def scaled(self, factor: float) -> Camera:
        """Same pose, image resampled by ``factor`` (0.5 halves the resolution)."""
        return Camera(self.fx * factor, self.fy * factor, self.cx * factor, self.cy * factor,
                      self.R, self.t, int(round(self.width * factor)), int(round(self.height * factor)))

    def pixel_rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Origins and unit directions for every pixel, row-major ``(H * W, 3)``."""
        py, px = np.mgrid[0:self.height, 0:self.width]
        d = self.directions(px.ravel(), py.ravel())
        return np.broadcast_to(self.center, d.shape).copy(), d

    def directions(self, px, py) -> np.ndarray:
        px = np.asarray(px, dtype=np.float64)
        py = np.asarray(py, dtype=np.float64)
        dc = np.stack([(px + 0.5 - self.cx) / self.fx, (py + 0.5 - self.cy) / self.fy,
                       np.ones_like(px)], -1)
        dw = dc @ self.R
        return dw / np.linalg.norm(dw, axis=-1, keepdims=True)


def look_at(eye, target, up, fx: float, fy: float, width: int, height: int) -> Camera:
    """Camera at ``eye`` looking at ``target``; image y points along ``-up``."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    up = np.asarray(up, dtype=np.float64)
    if np.linalg.norm(np.cross(z, up)) < 1e-6:
        up = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return Camera(fx, fy, width / 2.0, height / 2.0, R, -R @ eye, width, height)


def ray_for_pixel(camera: Camera, px: float, py: float) -> tuple[np.ndarray, np.ndarray]:
    """Ray ``(origin, unit direction)`` through the center of pixel ``(px, py)``.

    Any ``px`` in ``[-0.5, width - 0.5)`` (likewise ``py``) is accepted, so the
    ray's image point ``px + 0.5`` lies inside the image rectangle.
    """
    if not (-0.5 <= px < camera.width - 0.5 and -0.5 <= py < camera.height - 0.5):
        raise DataError(f"pixel ({px}, {py}) outside {camera.width}x{camera.height} image")
    return camera.center.copy(), camera.directions(px, py)


def project(camera: Camera, points) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Continuous image coordinates and depth of world points.

    Returns
    -------
    u, v, depth, behind : ndarray
        ``behind`` flags points with camera-space ``z <= 0``; their ``u, v`` are nan.
    """
    p = np.asarray(points, dtype=np.float64)
    pc = p @ camera.R.T + camera.t
    z = pc[..., 2]
    behind = z <= 0
    zs = np.where(behind, np.nan, z)
    u = camera.fx * pc[..., 0] / zs + camera.cx
    v = camera.fy * pc[..., 1] / zs + camera.cy
    return u, v, z, behind


def projection_jacobian(camera: Camera, points) -> np.ndarray:
    """``(N, 2, 3)`` derivative of ``(u, v)`` with respect to world position."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pc = p @ camera.R.T + camera.t
    x, y, z = pc.T
    J = np.zeros((len(p), 2, 3))
    J[:, 0, 0] = camera.fx / z
    J[:, 0, 2] = -camera.fx * x / z ** 2
    J[:, 1, 1] = camera.fy / z
    J[:, 1, 2] = -camera.fy * y / z ** 2
    return J @ camera.R
