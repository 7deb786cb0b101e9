"""Forward rendering of a mesh with a trained or oracle shader."""

from __future__ import annotations

import numpy as np

from ..geometry import Camera
from ..hexmesh import HexMesh
from ..training.render import Shader, render_forward
from ..shader import MlpParams


def render_view(mesh: HexMesh, params: MlpParams | Shader, camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    """``(rgb (H, W, 3), coverage (H, W))``; misses are black with zero coverage."""
    r = render_forward(mesh, params, camera)
    return r.rgb, r.coverage.image
