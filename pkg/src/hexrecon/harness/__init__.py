"""Scene I/O, synthetic scenes, rendering and evaluation metrics."""

from .scene import Scene, View, load_scene, save_scene
from .synthetic import SHAPES, Texture, generate_synthetic, ground_truth_mesh, oracle_shader
from .metrics import chamfer, iou, psnr, sample_surface
from .render import render_view
from ..hexmesh.io import export_mesh, load_mesh

__all__ = [
    "Scene", "View", "load_scene", "save_scene", "SHAPES", "Texture", "generate_synthetic",
    "ground_truth_mesh", "oracle_shader", "chamfer", "iou", "psnr", "sample_surface",
    "render_view", "export_mesh", "load_mesh",
]
