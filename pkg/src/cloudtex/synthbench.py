"""Synthetic scenes with injected multiview inconsistencies.

The stacked-slabs scene puts a small front slab over a large back slab so a
band of the back slab is occluded in frontal views; dilating the occluder's
color region in the images then reproduces the characteristic occlusion-border
artifact that border-first unprojection exists to remove.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .camera import View
from .pcio import ColoredPointCloud, TextureAtlas, TriangleMesh, sample_points
from .projection import Raster, rasterize_mesh
from .unproject import seam_bleed
from .uvatlas import TexelTable, rasterize_texels, unwrap

DEFAULT_SLAB_COLORS = ((0.55, 0.34, 0.18), (0.55, 0.55, 0.58))  # back (brown), front (gray)
DEFAULT_COLOR_TOL = 0.2


@dataclass
class SlabScene:
    mesh: TriangleMesh
    atlas: TextureAtlas
    cloud: ColoredPointCloud
    charts: list
    occludee_faces: np.ndarray  # the large back slab
    occluder_faces: np.ndarray  # the small front slab
    colors: tuple


# tilt keeping every cube6/fib8/ico20 view at least ~14 degrees off the slab
# plane, so no depth map degenerates to an edge-on sliver
_TILT_X = np.radians(41.0)
_TILT_Y = np.radians(31.0)


def _scene_rotation() -> np.ndarray:
    cx, sx = np.cos(_TILT_X), np.sin(_TILT_X)
    cy, sy = np.cos(_TILT_Y), np.sin(_TILT_Y)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    return rx @ ry


def make_stacked_slabs(colors=DEFAULT_SLAB_COLORS, sizes=(1.0, 0.4), gap: float = 0.25,
                       n_points: int = 30_000, seed: int = 0,
                       atlas_res: int = 1024, tilt: bool = True) -> SlabScene:
    """Two single-sided square slabs facing +z; the smaller one floats in front.

    With tilt (default) the whole assembly is rotated so that none of the
    standard rigs views the slab planes edge-on.
    """
    if np.max(np.abs(np.asarray(colors[0]) - np.asarray(colors[1]))) < 1e-6:
        raise ValueError("slab colors must be distinct")
    big, small = sizes
    verts = []
    faces = []

    def add_quad(half, z):
        base = len(verts)
        verts.extend([
            [-half, -half, z], [half, -half, z], [half, half, z], [-half, half, z],
        ])
        faces.append([base, base + 1, base + 2])
        faces.append([base, base + 2, base + 3])

    add_quad(big / 2.0, 0.0)
    add_quad(small / 2.0, gap)
    vertices = np.asarray(verts, dtype=np.float64)
    if tilt:
        vertices = vertices @ _scene_rotation().T
    mesh = TriangleMesh(vertices, np.asarray(faces, dtype=np.int64))
    mesh, charts = unwrap(mesh, atlas_res=atlas_res)

    texels = rasterize_texels(mesh, charts, atlas_res)
    data = np.zeros((atlas_res, atlas_res, 3), dtype=np.float64)
    back = np.isin(texels.face_id, [0, 1])
    front = np.isin(texels.face_id, [2, 3])
    data[back] = colors[0]
    data[front] = colors[1]
    seam_bleed(data, texels.valid.copy())
    atlas = TextureAtlas(data)
    cloud = sample_points(mesh, atlas, n_points, seed)
    return SlabScene(mesh, atlas, cloud, charts,
                     occludee_faces=np.array([0, 1]), occluder_faces=np.array([2, 3]),
                     colors=colors)


def inject_border_inconsistency(images: list[Raster], views: list[View], mesh: TriangleMesh,
                                dilate_img_px: int, occluder_faces: np.ndarray) -> list[Raster]:
    """Dilate the occluder's color region across the true occlusion boundary.

    In each view, surface pixels within dilate_img_px of the occluder's
    rendered region are recolored with the nearest occluder pixel's color,
    simulating an inpainting/geometry disagreement along the border.
    """
    if dilate_img_px < 0:
        raise ValueError("dilate_img_px must be >= 0")
    out = []
    occset = np.asarray(occluder_faces)
    for view, img in zip(views, images):
        if dilate_img_px == 0:
            out.append(img.copy())
            continue
        _, fid, _ = rasterize_mesh(mesh, view)
        occ = np.isin(fid, occset)
        surf = (fid >= 0) & ~occ
        band = ndimage.binary_dilation(occ, structure=np.ones((3, 3), dtype=bool),
                                       iterations=dilate_img_px) & surf
        new = img.copy()
        if band.any() and occ.any():
            _, (ir, ic) = ndimage.distance_transform_edt(~occ, return_indices=True)
            rows, cols = np.nonzero(band)
            new.data[rows, cols] = img.data[ir[rows, cols], ic[rows, cols]]
        out.append(new)
    return out


def misassigned_texels(atlas: TextureAtlas, gt_atlas: TextureAtlas, texels: TexelTable,
                       color_tol: float = DEFAULT_COLOR_TOL) -> tuple[int, np.ndarray]:
    """Count valid texels whose color is off by more than color_tol (max-norm).

    Texels within 1 texel of a chart silhouette are excluded. Returns
    (count, boolean mask of the misassigned texels).
    """
    if atlas.data.shape != gt_atlas.data.shape:
        raise ValueError("atlas layouts do not match")
    if atlas.resolution != texels.resolution:
        raise ValueError("texel table resolution does not match the atlas")
    silhouette_ring = texels.valid & ndimage.binary_dilation(
        ~texels.valid, structure=np.ones((3, 3), dtype=bool))
    consider = texels.valid & ~silhouette_ring
    diff = np.abs(atlas.data - gt_atlas.data).max(axis=2)
    bad = consider & (diff > color_tol)
    return int(bad.sum()), bad
