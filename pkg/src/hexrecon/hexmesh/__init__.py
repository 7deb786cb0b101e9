"""Hexagon-dominant triangle meshes: adjacency, regularizer, subdivision, remeshing, I/O."""

from .mesh import DEFAULT_FEAT_DIM, Adjacency, HexMesh, build_adjacency
from .regularizer import (build_K, hex_energy, hex_energy_gradient, hex_energy_gradient_summation,
                          hex_energy_matrix_form, neighbor_pairs)
from .subdivision import subdivide
from .primitives import icosahedron, icosphere, lattice_patch, octahedron, quad, tetrahedron, uv_torus

__all__ = [
    "DEFAULT_FEAT_DIM", "Adjacency", "HexMesh", "build_adjacency", "build_K", "hex_energy",
    "hex_energy_gradient", "hex_energy_gradient_summation", "hex_energy_matrix_form",
    "neighbor_pairs", "subdivide", "icosahedron", "icosphere", "lattice_patch", "octahedron",
    "quad", "tetrahedron", "uv_torus",
]
