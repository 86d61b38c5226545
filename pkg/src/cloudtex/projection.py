"""Rasterize points into sparse images / depth maps / masks, and meshes into depth maps.

Fill rule: top-left, pixel-center sampling, no antialiasing; depth is stored
along the camera forward axis so the visibility inequality is a planar
z-buffer test.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .camera import View, project
from .pcio import FormatError, TriangleMesh, quantize_colors

BACKGROUND_RGB = 1.0  # white
SQUARE3 = np.ones((3, 3), dtype=bool)


@dataclass
class Raster:
    width: int
    height: int
    channels: str  # rgb | depth | mask
    data: np.ndarray  # (H,W,3) float64 | (H,W) float32 | (H,W) bool
    known: np.ndarray  # (H,W) bool

    @staticmethod
    def empty_rgb(width: int, height: int) -> "Raster":
        return Raster(width, height, "rgb",
                      np.zeros((height, width, 3), dtype=np.float64),
                      np.zeros((height, width), dtype=bool))

    @staticmethod
    def empty_depth(width: int, height: int) -> "Raster":
        return Raster(width, height, "depth",
                      np.full((height, width), np.inf, dtype=np.float32),
                      np.zeros((height, width), dtype=bool))

    @staticmethod
    def empty_mask(width: int, height: int) -> "Raster":
        m = np.zeros((height, width), dtype=bool)
        return Raster(width, height, "mask", m, m.copy())

    def copy(self) -> "Raster":
        return Raster(self.width, self.height, self.channels, self.data.copy(), self.known.copy())


def splat_points(points: np.ndarray, colors: np.ndarray, view: View,
                 splat_px: int = 1) -> tuple[Raster, Raster]:
    """Paint visibility-filtered points into a sparse RGB image + sparse depth map.

    Each point covers a splat_px x splat_px block centered on its rounded pixel;
    conflicts keep the smallest depth (ties: lowest point index).
    """
    if splat_px < 1:
        raise ValueError("splat_px must be >= 1")
    w, h = view.width, view.height
    rgb = Raster.empty_rgb(w, h)
    dep = Raster.empty_depth(w, h)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        return rgb, dep
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    pix, depth = project(view, points)
    front = depth > 0
    ci = np.rint(pix[:, 0]).astype(np.int64)
    rj = np.rint(pix[:, 1]).astype(np.int64)

    half = (splat_px - 1) // 2
    offs = np.arange(splat_px) - half
    oc, orr = np.meshgrid(offs, offs, indexing="xy")
    cc = (ci[:, None] + oc.ravel()[None, :]).ravel()
    rr = (rj[:, None] + orr.ravel()[None, :]).ravel()
    k = splat_px * splat_px
    idx = np.repeat(np.arange(len(points)), k)
    ok = front[idx] & (cc >= 0) & (cc < w) & (rr >= 0) & (rr < h)
    cc, rr, idx = cc[ok], rr[ok], idx[ok]
    if len(idx) == 0:
        return rgb, dep
    flat = rr * w + cc
    order = np.lexsort((idx, depth[idx], flat))
    flat, idx = flat[order], idx[order]
    first = np.ones(len(flat), dtype=bool)
    first[1:] = flat[1:] != flat[:-1]
    flat, idx = flat[first], idx[first]
    r_, c_ = flat // w, flat % w
    rgb.data[r_, c_] = colors[idx]
    rgb.known[r_, c_] = True
    dep.data[r_, c_] = depth[idx].astype(np.float32)
    dep.known[r_, c_] = True
    return rgb, dep


def estimate_gap_px(points: np.ndarray, view: View) -> float:
    """Mean inter-point pixel spacing of the projected points.

    The subject's screen area is estimated by counting occupied 8x8 pixel
    blocks, which is robust to the very gaps being measured.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        return 0.0
    pix, depth = project(view, points)
    front = depth > 0
    ci = np.rint(pix[front, 0]).astype(np.int64) // 8
    rj = np.rint(pix[front, 1]).astype(np.int64) // 8
    ok = (ci >= 0) & (ci < (view.width + 7) // 8) & (rj >= 0) & (rj < (view.height + 7) // 8)
    if not ok.any():
        return 0.0
    blocks = len(np.unique(rj[ok] * ((view.width + 7) // 8) + ci[ok]))
    return float(np.sqrt(blocks * 64.0 / max(int(front.sum()), 1)))


def auto_mask_splat_px(points: np.ndarray, view: View, minimum: int = 5) -> int:
    """Mask splat size ~2.8x the mean inter-point pixel gap (odd, >= minimum)."""
    gap = estimate_gap_px(points, view)
    size = int(np.ceil(2.8 * gap))
    size += 1 - size % 2  # odd sizes center on the splatted pixel
    return max(minimum, size)


def splat_px_for_gap(gap: float) -> int:
    """RGB/depth splat size ladder: 1 px while points are dense enough for the
    inpainters to bridge the gaps, 3/5 px for sparse inputs."""
    if gap <= 2.5:
        return 1
    if gap <= 5.0:
        return 3
    return 5


def auto_splat_px(points: np.ndarray, view: View) -> int:
    return splat_px_for_gap(estimate_gap_px(points, view))


def foreground_mask(points: np.ndarray, view: View, mask_splat_px: int | None = None,
                    close_iter: int = 2, erode_iter: int = 2) -> Raster:
    """Foreground mask: big-splat coverage, then morphological closing, then erosion.

    mask_splat_px=None picks the splat size from the projected point density.
    """
    if mask_splat_px is None:
        mask_splat_px = auto_mask_splat_px(points, view)
    if mask_splat_px < 1:
        raise ValueError("mask_splat_px must be >= 1")
    w, h = view.width, view.height
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cover = np.zeros((h, w), dtype=bool)
    if len(points):
        pix, depth = project(view, points)
        front = depth > 0
        ci = np.rint(pix[:, 0]).astype(np.int64)
        rj = np.rint(pix[:, 1]).astype(np.int64)
        half = (mask_splat_px - 1) // 2
        offs = np.arange(mask_splat_px) - half
        oc, orr = np.meshgrid(offs, offs, indexing="xy")
        cc = (ci[:, None] + oc.ravel()[None, :]).ravel()
        rr = (rj[:, None] + orr.ravel()[None, :]).ravel()
        idx = np.repeat(np.arange(len(points)), mask_splat_px * mask_splat_px)
        ok = front[idx] & (cc >= 0) & (cc < w) & (rr >= 0) & (rr < h)
        cover[rr[ok], cc[ok]] = True
    m = cover
    if close_iter > 0:
        m = ndimage.binary_closing(m, structure=SQUARE3, iterations=close_iter)
    if erode_iter > 0:
        m = ndimage.binary_erosion(m, structure=SQUARE3, iterations=erode_iter)
    return Raster(w, h, "mask", m, m.copy())


# ---------------------------------------------------------------------------
# mesh rasterization

def rasterize_mesh(mesh: TriangleMesh, view: View):
    """Z-buffered software rasterization at pixel centers.

    Returns (depth (H,W) float32 with +inf background, face_id (H,W) int32
    with -1 background, bary (H,W,3) float32 perspective-correct barycentric
    coordinates). Triangles with any vertex at or behind the near plane are
    skipped (subjects live inside the rig, so this does not trigger in the
    supported configurations).
    """
    w, h = view.width, view.height
    zbuf = np.full((h, w), np.inf, dtype=np.float64)
    fid = np.full((h, w), -1, dtype=np.int32)
    bary = np.zeros((h, w, 3), dtype=np.float32)

    pix, depth = project(view, mesh.vertices)
    tri_pix = pix[mesh.faces]  # (F, 3, 2)
    tri_z = depth[mesh.faces]  # (F, 3)
    valid = np.all(tri_z > view.near, axis=1)
    # conservative screen-bounds cull
    mins = tri_pix.min(axis=1)
    maxs = tri_pix.max(axis=1)
    valid &= (maxs[:, 0] >= 0) & (mins[:, 0] <= w - 1) & (maxs[:, 1] >= 0) & (mins[:, 1] <= h - 1)

    for f in np.nonzero(valid)[0]:
        p = tri_pix[f]
        z = tri_z[f]
        x0 = max(int(np.ceil(p[:, 0].min())), 0)
        x1 = min(int(np.floor(p[:, 0].max())), w - 1)
        y0 = max(int(np.ceil(p[:, 1].min())), 0)
        y1 = min(int(np.floor(p[:, 1].max())), h - 1)
        if x1 < x0 or y1 < y0:
            continue
        a, b, c = p[0], p[1], p[2]
        area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if area == 0.0:
            continue
        if area < 0:
            b, c = c, b
            z = z[[0, 2, 1]]
            order = np.array([0, 2, 1])
            area = -area
        else:
            order = np.array([0, 1, 2])
        xs = np.arange(x0, x1 + 1, dtype=np.float64)
        ys = np.arange(y0, y1 + 1, dtype=np.float64)
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        e0 = _edge(b, c, gx, gy)
        e1 = _edge(c, a, gx, gy)
        e2 = _edge(a, b, gx, gy)
        inside = (
            _cover(e0, b, c) & _cover(e1, c, a) & _cover(e2, a, b)
        )
        if not inside.any():
            continue
        l0 = e0 / area
        l1 = e1 / area
        l2 = e2 / area
        inv_z = l0 / z[0] + l1 / z[1] + l2 / z[2]
        zpix = 1.0 / inv_z
        rows = gy.astype(np.int64)
        cols = gx.astype(np.int64)
        upd = inside & (zpix < zbuf[rows, cols])
        if not upd.any():
            continue
        ur = rows[upd]
        uc = cols[upd]
        zbuf[ur, uc] = zpix[upd]
        fid[ur, uc] = f
        # perspective-correct barycentrics in original corner order
        pb = np.stack([l0[upd] / z[0], l1[upd] / z[1], l2[upd] / z[2]], axis=1)
        pb /= pb.sum(axis=1)[:, None]
        out = np.empty_like(pb)
        out[:, order] = pb
        bary[ur, uc] = out.astype(np.float32)
    return zbuf.astype(np.float32), fid, bary


def _edge(a, b, px, py):
    return (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])


def _cover(e, a, b):
    # top-left rule for y-down screen coords and edges ordered with interior >= 0
    dx = b[0] - a[0]
    dy = b[1] - a[1]
    top_left = (dy == 0 and dx > 0) or (dy < 0)
    return e > 0 if not top_left else e >= 0


def render_mesh_depth(mesh: TriangleMesh, view: View) -> Raster:
    """Depth map of a mesh from one view; background pixels stay at +inf."""
    zbuf, fid, _ = rasterize_mesh(mesh, view)
    return Raster(view.width, view.height, "depth", zbuf, fid >= 0)


def bilinear_sample(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Clamped bilinear sampling of an (H,W,C) or (H,W) image at continuous pixels."""
    h, w = image.shape[:2]
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    if image.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    return (image[y0, x0] * (1 - fx) * (1 - fy) + image[y0, x1] * fx * (1 - fy)
            + image[y1, x0] * (1 - fx) * fy + image[y1, x1] * fx * fy)


# ---------------------------------------------------------------------------
# raster file formats

DEPTH_MAGIC = b"MDPT"


def write_image_png(raster: Raster, path) -> Path:
    """8-bit RGB PNG; unknown pixels are written as their sentinel value."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(quantize_colors(raster.data), mode="RGB").save(path)
    return path


def write_mask_png(mask: np.ndarray, path) -> Path:
    """8-bit single-channel PNG, 255 = known/foreground."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)
    return path


def read_image_png(path, known: np.ndarray | None = None) -> Raster:
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    h, w = img.shape[:2]
    if known is None:
        known = np.ones((h, w), dtype=bool)
    return Raster(w, h, "rgb", img, known.astype(bool))


def read_mask_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("L"))
    return arr >= 128


def write_depth(raster: Raster, path) -> Path:
    """float32 depth with a 16-byte header: MDPT, width u32 LE, height u32 LE, reserved."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(DEPTH_MAGIC)
        f.write(struct.pack("<II", raster.width, raster.height))
        f.write(b"\x00\x00\x00\x00")
        f.write(np.ascontiguousarray(raster.data, dtype="<f4").tobytes())
    return path


def read_depth(path) -> Raster:
    raw = Path(path).read_bytes()
    if raw[:4] != DEPTH_MAGIC:
        raise FormatError(f"{path}: bad depth magic (byte offset 0)")
    w, h = struct.unpack("<II", raw[4:12])
    need = 16 + 4 * w * h
    if len(raw) < need:
        raise FormatError(f"{path}: truncated depth payload (byte offset {len(raw)})")
    data = np.frombuffer(raw, dtype="<f4", count=w * h, offset=16).reshape(h, w).copy()
    return Raster(w, h, "depth", data, np.isfinite(data))
