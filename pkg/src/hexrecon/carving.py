"""Visual-hull initialization from silhouettes.

A voxel survives when its center projects inside the (dilated) mask of every
view that sees it.  The occupancy is box-smoothed, contoured at 0.5 with
marching cubes, simplified and remeshed into a hexagon-dominant coarse mesh.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from skimage import measure

from .errors import DataError, EmptyHullError, NoSurfaceError
from .geometry import Camera, project
from .hexmesh import HexMesh, subdivide
from .hexmesh.remesh import RELAX_STEP, decimate, isotropic_remesh, tangential_relax

DEFAULT_RES = 128
MIN_TARGET_VERTICES = 100


@dataclass
class VoxelGrid:
    lo: np.ndarray
    hi: np.ndarray
    occupancy: np.ndarray   # (nx, ny, nz) bool, True inside the hull

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.occupancy.ndim != 3 or min(self.occupancy.shape) < 8:
            raise DataError(f"voxel grid needs >= 8 cells per axis, got {self.occupancy.shape}")
        if np.any(self.hi <= self.lo):
            raise DataError("voxel grid bounding box is empty")

    @property
    def res(self) -> tuple[int, int, int]:
        return self.occupancy.shape

    @property
    def voxel_size(self) -> np.ndarray:
        return (self.hi - self.lo) / np.array(self.res)

    @property
    def voxel_diagonal(self) -> float:
        return float(np.linalg.norm(self.voxel_size))

    def axes(self) -> list[np.ndarray]:
        return [self.lo[a] + (np.arange(n) + 0.5) * self.voxel_size[a] for a, n in enumerate(self.res)]

    def centers(self) -> np.ndarray:
        """``(N, 3)`` voxel centers in C order, matching ``occupancy.ravel()``."""
        g = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([x.ravel() for x in g], 1)

    def dump(self, path) -> tuple[Path, Path]:
        """Write the packed occupancy bits (C order) and a text header next to them."""
        path = Path(path)
        bits = np.packbits(self.occupancy.ravel())
        bits.tofile(path)
        header = path.with_suffix(path.suffix + ".txt")
        header.write_text(
            f"res {self.res[0]} {self.res[1]} {self.res[2]}\n"
            f"lo {' '.join(repr(x) for x in self.lo.tolist())}\n"
            f"hi {' '.join(repr(x) for x in self.hi.tolist())}\n"
            f"order C (x slowest), numpy packbits big-endian\n"
            f"occupied {int(self.occupancy.sum())}\n")
        return path, header


def _disk(radius: int) -> np.ndarray:
    r = int(radius)
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    return x * x + y * y <= r * r


def _prepare_masks(masks, cameras, dilation_px: int) -> list[np.ndarray]:
    if len(masks) != len(cameras):
        raise DataError(f"{len(masks)} masks but {len(cameras)} cameras")
    if not masks:
        raise DataError("carving needs at least one view")
    out = []
    for i, (m, cam) in enumerate(zip(masks, cameras)):
        m = np.asarray(m, dtype=bool)
        if m.shape != (cam.height, cam.width):
            raise DataError(f"mask {i} is {m.shape}, camera expects {(cam.height, cam.width)}")
        if dilation_px > 0:
            m = ndimage.binary_dilation(m, structure=_disk(dilation_px))
        out.append(m)
    return out


def _carve_points(points: np.ndarray, masks, cameras, strict: bool = False) -> np.ndarray:
    """Survival flags; with ``strict`` a point must also lie inside every frustum."""
    keep = np.ones(len(points), dtype=bool)
    for m, cam in zip(masks, cameras):
        idx = np.flatnonzero(keep)
        if not len(idx):
            break
        u, v, _, behind = project(cam, points[idx])
        with np.errstate(invalid="ignore"):
            px = np.floor(u)
            py = np.floor(v)
            inside = ~behind & (px >= 0) & (px < cam.width) & (py >= 0) & (py < cam.height)
        ok = np.full(len(idx), not strict)   # outside the frustum: kept unless strict
        ii = np.flatnonzero(inside)
        ok[ii] = m[py[ii].astype(np.int64), px[ii].astype(np.int64)]
        keep[idx[~ok]] = False
    return keep


def default_bbox(masks, cameras, res: int = 48, dilation_px: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Box around the masked intersection of all frusta, sampled on a coarse grid.

    The search region is the bounding box of the camera centers.
    """
    ms = _prepare_masks(masks, cameras, dilation_px)
    c = np.array([cam.center for cam in cameras])
    lo, hi = c.min(0), c.max(0)
    if len(cameras) < 2 or np.any(hi - lo <= 0):
        span = max(float(np.linalg.norm(hi - lo)), 1.0)
        lo, hi = lo - span, hi + span
    grid = VoxelGrid(lo, hi, np.zeros((res, res, res), bool))
    keep = _carve_points(grid.centers(), ms, cameras, strict=True).reshape(grid.res)
    if not keep.any():
        raise EmptyHullError("no voxel survives carving; masks may be empty or cameras inconsistent "
                             "(try a larger dilation)")
    ijk = np.argwhere(keep)
    vs = grid.voxel_size
    blo = lo + (ijk.min(0) - 1) * vs
    bhi = lo + (ijk.max(0) + 2) * vs
    return blo, bhi


def carve(masks, cameras: list[Camera], bbox=None, res=DEFAULT_RES, dilation_px: int = 1) -> VoxelGrid:
    """Visual hull of ``masks`` seen from ``cameras`` on a ``res`` grid over ``bbox``.

    Parameters
    ----------
    masks : sequence of (H, W) bool arrays
    bbox : (lo, hi) or None
        Defaults to :func:`default_bbox`.
    res : int or 3-tuple
    dilation_px : int
        Disk radius used to grow every mask before testing.
    """
    ms = _prepare_masks(masks, cameras, dilation_px)
    if bbox is None:
        bbox = default_bbox(masks, cameras)
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bbox)
    shape = tuple(int(r) for r in np.broadcast_to(res, 3))
    grid = VoxelGrid(lo, hi, np.zeros(shape, bool))
    keep = np.zeros(int(np.prod(shape)), dtype=bool)
    # slab by slab keeps the projected coordinates small in memory
    ax = grid.axes()
    g1, g2 = np.meshgrid(ax[1], ax[2], indexing="ij")
    n_slab = shape[1] * shape[2]
    for i, x in enumerate(ax[0]):
        pts = np.stack([np.full(n_slab, x), g1.ravel(), g2.ravel()], 1)
        keep[i * n_slab:(i + 1) * n_slab] = _carve_points(pts, ms, cameras)
    grid.occupancy = keep.reshape(shape)
    if not keep.any():
        raise EmptyHullError("all voxels were carved away; check the masks or increase dilation_px")
    return grid


def marching_cubes(grid: VoxelGrid, smooth: bool = True) -> HexMesh:
    """Closed, outward-oriented surface of the 0.5 level of the occupancy.

    The occupancy is first averaged over a 3x3x3 box (when ``smooth``); a grid too
    thin to survive the filter is contoured unsmoothed.  Only the largest connected
    component is kept.
    """
    occ = grid.occupancy
    if occ.all() or not occ.any():
        raise NoSurfaceError("occupancy grid is " + ("full" if occ.any() else "empty")
                             + "; no surface to extract")
    field = occ.astype(np.float64)
    if smooth:
        sm = ndimage.uniform_filter(field, size=3, mode="constant", cval=0.0)
        if sm.max() > 0.5:
            field = sm
    field = np.pad(field, 1)
    vs = grid.voxel_size
    verts, faces, _, _ = measure.marching_cubes(field, 0.5, spacing=tuple(vs), allow_degenerate=False)
    verts = verts + grid.lo - 0.5 * vs
    faces = faces[:, ::-1]
    mesh = _largest_component(verts, faces)
    if mesh.signed_volume() < 0:
        mesh = HexMesh(mesh.positions, mesh.faces[:, ::-1].copy())
    mesh.validate()
    return mesh


def _largest_component(verts, faces) -> HexMesh:
    faces = faces[(faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])]
    n = len(verts)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]]])
    adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    _, lab = connected_components(adj, directed=False)
    flab = lab[faces[:, 0]]
    big = np.bincount(flab).argmax()
    faces = faces[flab == big]
    used = np.unique(faces)
    remap = np.full(n, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return HexMesh(verts[used], remap[faces])


def edge_length_for(mesh: HexMesh, n_vertices: int) -> float:
    """Edge length of an equilateral closed mesh with ``n_vertices`` covering ``mesh``'s area."""
    return float(np.sqrt(2.0 * mesh.surface_area() / (np.sqrt(3.0) * n_vertices)))


def init_coarse_mesh(grid: VoxelGrid | HexMesh, target_vertices: int = 2500, passes: int = 5) -> HexMesh:
    """Hexagon-dominant coarse mesh of about ``target_vertices`` vertices.

    The hull surface is decimated and remeshed at a quarter of the budget, split once
    at edge midpoints (all new vertices have valence 6) and relaxed back onto the
    hull surface.  Features start at zero.
    """
    if target_vertices < MIN_TARGET_VERTICES:
        raise DataError(f"target_vertices={target_vertices} is below the floor of {MIN_TARGET_VERTICES}")
    surface = grid if isinstance(grid, HexMesh) else marching_cubes(grid)
    n_coarse = max(target_vertices // 4, 4)
    m = decimate(surface, n_coarse) if surface.n_vertices > n_coarse else surface
    m = isotropic_remesh(m, edge_length_for(m, n_coarse), passes, reference=surface,
                         relax_step=RELAX_STEP)
    m = subdivide(m)
    m = tangential_relax(m, reference=surface, passes=2)
    m.features[:] = 0.0
    m.validate()
    return m
