"""Fill the texture atlas from posed dense images: naive, optimization-based,
and non-border-first view selection."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .camera import View, project
from .pcio import TextureAtlas, TriangleMesh
from .projection import Raster, bilinear_sample, rasterize_mesh
from .uvatlas import TexelTable
from .visibility import DEFAULT_DEPTH_EPSILON

DEFAULT_DILATE_PX = 3
SEAM_BLEED_PASSES = 8
_S3 = np.ones((3, 3), dtype=bool)


def compute_view_layers(texels: TexelTable, views: list[View], mesh_depths: list[Raster],
                        epsilon: float = DEFAULT_DEPTH_EPSILON) -> TexelTable:
    """Attach per-view visibility, direction priority, and projected pixel coords.

    A texel is visible in view k iff it projects in-frame and its depth is no
    bigger than the view's mesh depth map value plus epsilon.
    """
    K = len(views)
    A = texels.resolution
    texels.visible = np.zeros((K, A, A), dtype=bool)
    texels.priority = np.full((K, A, A), -np.inf, dtype=np.float32)
    texels.pix = np.zeros((K, A, A, 2), dtype=np.float32)
    texels.border = np.zeros((K, A, A), dtype=bool)

    vr, vc = np.nonzero(texels.valid)
    pos = texels.position[vr, vc]
    nrm = texels.normal[vr, vc]
    for k, (view, dmap) in enumerate(zip(views, mesh_depths)):
        if (dmap.width, dmap.height) != (view.width, view.height):
            raise ValueError("mesh depth resolution does not match its view")
        pix, depth = project(view, pos)
        ci = np.rint(pix[:, 0]).astype(np.int64)
        rj = np.rint(pix[:, 1]).astype(np.int64)
        inframe = ((depth > 0) & (ci >= 0) & (ci < view.width)
                   & (rj >= 0) & (rj < view.height))
        vis = np.zeros(len(pos), dtype=bool)
        md = dmap.data[rj[inframe], ci[inframe]].astype(np.float64)
        vis[inframe] = depth[inframe] <= md + epsilon
        texels.visible[k, vr, vc] = vis
        texels.priority[k, vr, vc] = (-nrm @ view.direction).astype(np.float32)
        texels.pix[k, vr, vc] = pix.astype(np.float32)
    return texels


def detect_borders(texels: TexelTable, k: int, dilate_px: int = DEFAULT_DILATE_PX) -> TexelTable:
    """Mark view-k border texels: the visible/invisible transition band of each chart.

    Edge texels are visible texels 8-adjacent to an invisible or invalid texel;
    the border is the edge set dilated by a square kernel of half-width
    dilate_px, kept within the visible set.
    """
    vis = texels.visible[k]
    bad = ~vis  # invisible or invalid; charts are gutter-separated so no cross-talk
    edge = vis & ndimage.binary_dilation(bad, structure=_S3, border_value=0)
    if dilate_px > 0:
        size = 2 * dilate_px + 1
        band = ndimage.binary_dilation(edge, structure=np.ones((size, size), dtype=bool))
        border = band & vis
    else:
        border = edge
    texels.border[k] = border
    return texels


def detect_all_borders(texels: TexelTable, dilate_px: int = DEFAULT_DILATE_PX) -> TexelTable:
    for k in range(texels.n_views):
        detect_borders(texels, k, dilate_px)
    return texels


def _sample_views(images: list[Raster], texels: TexelTable, choice: np.ndarray,
                  rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    out = np.zeros((len(rows), 3), dtype=np.float64)
    for k in range(len(images)):
        sel = choice == k
        if not sel.any():
            continue
        px = texels.pix[k, rows[sel], cols[sel]].astype(np.float64)
        out[sel] = bilinear_sample(images[k].data, px[:, 0], px[:, 1])
    return out


def _masked_argmax(priority: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Argmax of priority over axis 0 restricted to mask; ties -> lowest view index."""
    p = np.where(mask, priority, -np.inf)
    choice = p.argmax(axis=0)
    has = mask.any(axis=0)
    return choice, has


def naive_choice(texels: TexelTable) -> np.ndarray:
    """Per-texel view index under the priority-only rule, -1 on invalid texels."""
    A = texels.resolution
    vr, vc = np.nonzero(texels.valid)
    vis = texels.visible[:, vr, vc]
    pri = texels.priority[:, vr, vc]
    choice, has = _masked_argmax(pri, vis)
    fallback = pri.argmax(axis=0)
    out = np.full((A, A), -1, dtype=np.int32)
    out[vr, vc] = np.where(has, choice, fallback)
    return out


def nbf_choice(texels: TexelTable, dilate_px: int = DEFAULT_DILATE_PX) -> np.ndarray:
    """Per-texel view index under the non-border-first rule, -1 on invalid texels."""
    if texels.border is None or not texels.border.any():
        detect_all_borders(texels, dilate_px)
    A = texels.resolution
    vr, vc = np.nonzero(texels.valid)
    vis = texels.visible[:, vr, vc]
    brd = texels.border[:, vr, vc]
    pri = texels.priority[:, vr, vc]
    choice1, has1 = _masked_argmax(pri, vis & ~brd)
    choice2, has2 = _masked_argmax(pri, vis)
    fallback = pri.argmax(axis=0)
    out = np.full((A, A), -1, dtype=np.int32)
    out[vr, vc] = np.where(has1, choice1, np.where(has2, choice2, fallback))
    return out


def _paint_from_choice(texels: TexelTable, images: list[Raster], choice: np.ndarray) -> TextureAtlas:
    A = texels.resolution
    vr, vc = np.nonzero(texels.valid)
    colors = _sample_views(images, texels, choice[vr, vc], vr, vc)
    data = np.zeros((A, A, 3), dtype=np.float64)
    data[vr, vc] = colors
    seam_bleed(data, texels.valid.copy())
    return TextureAtlas(data)


def paint_naive(texels: TexelTable, images: list[Raster]) -> TextureAtlas:
    """Each texel takes the visible view with the highest direction priority;
    texels visible nowhere fall back to priority over all views."""
    _check_layers(texels, images)
    return _paint_from_choice(texels, images, naive_choice(texels))


def paint_nbf(texels: TexelTable, images: list[Raster],
              dilate_px: int = DEFAULT_DILATE_PX) -> TextureAtlas:
    """Non-border-first painting.

    Texels visible in some view's non-border region take the highest-priority
    such view; texels visible only in border regions take the highest-priority
    border view; texels visible nowhere take the globally highest-priority view.
    """
    _check_layers(texels, images)
    return _paint_from_choice(texels, images, nbf_choice(texels, dilate_px))


def optimize_atlas(init: TextureAtlas | None, texels: TexelTable, images: list[Raster],
                   exclude_borders: bool = False, iters: int = 0, seed: int | None = None,
                   mesh: TriangleMesh | None = None, views: list[View] | None = None,
                   step: float = 0.1) -> TextureAtlas:
    """Least-squares atlas fit against the posed images.

    Under nearest-texel sampling the per-pixel MSE separates per texel and the
    exact minimizer is the mean of each texel's image samples over its
    contributing views (visible, and non-border when exclude_borders is set);
    texels with no contributing view keep their init value. init=None requests
    a random initialization and requires a seed. iters > 0 additionally runs
    gradient-descent refinement under bilinear atlas sampling, which needs the
    mesh and views to rasterize per-pixel UV correspondences.
    """
    _check_layers(texels, images)
    A = texels.resolution
    if init is None:
        if seed is None:
            raise ValueError("random init requires a seed")
        rng = np.random.default_rng(seed)
        data = rng.random((A, A, 3))
    else:
        data = init.data.copy()
    if exclude_borders and texels.border is None:
        raise ValueError("exclude_borders requires borders to be computed")

    vr, vc = np.nonzero(texels.valid)
    contrib = texels.visible[:, vr, vc]
    if exclude_borders:
        contrib = contrib & ~texels.border[:, vr, vc]
    acc = np.zeros((len(vr), 3), dtype=np.float64)
    cnt = contrib.sum(axis=0).astype(np.float64)
    for k in range(len(images)):
        sel = contrib[k]
        if not sel.any():
            continue
        px = texels.pix[k, vr[sel], vc[sel]].astype(np.float64)
        acc[sel] += bilinear_sample(images[k].data, px[:, 0], px[:, 1])
    covered = cnt > 0
    mean = np.zeros_like(acc)
    mean[covered] = acc[covered] / cnt[covered, None]
    texel_vals = np.where(covered[:, None], mean, data[vr, vc])
    data[vr, vc] = texel_vals
    seam_bleed(data, texels.valid.copy())

    if iters > 0:
        if mesh is None or views is None:
            raise ValueError("iterative refinement needs the mesh and views")
        data = _refine_bilinear(data, texels, images, mesh, views, exclude_borders, iters, step)
    return TextureAtlas(data)


def _refine_bilinear(data, texels, images, mesh, views, exclude_borders, iters, step):
    """Gradient descent on sum_k ||render_k - I_k||^2 with bilinear atlas lookups."""
    A = texels.resolution
    buffers = []
    for k, view in enumerate(views):
        _, fid, bary = rasterize_mesh(mesh, view)
        cov = fid >= 0
        uv = np.zeros((cov.sum(), 2), dtype=np.float64)
        fids = fid[cov]
        uv = np.einsum("nk,nkd->nd", bary[cov].astype(np.float64), mesh.uv_corners[fids])
        x = uv[:, 0] * A - 0.5
        y = (1.0 - uv[:, 1]) * A - 0.5
        tr = np.clip(np.rint(y).astype(np.int64), 0, A - 1)
        tc = np.clip(np.rint(x).astype(np.int64), 0, A - 1)
        ok = np.ones(len(x), dtype=bool)
        if exclude_borders:
            ok = ~texels.border[k, tr, tc]
        target = images[k].data[cov]
        buffers.append((x[ok], y[ok], target[ok]))
    for _ in range(iters):
        grad = np.zeros_like(data)
        for x, y, target in buffers:
            pred = bilinear_sample(data, x, y)
            resid = pred - target
            _scatter_bilinear(grad, x, y, 2.0 * resid)
        data = data - step * grad
    return np.clip(data, 0.0, 1.0)


def _scatter_bilinear(grad, x, y, values):
    h, w = grad.shape[:2]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    np.add.at(grad, (y0, x0), values * (1 - fx) * (1 - fy))
    np.add.at(grad, (y0, x1), values * fx * (1 - fy))
    np.add.at(grad, (y1, x0), values * (1 - fx) * fy)
    np.add.at(grad, (y1, x1), values * fx * fy)


def seam_bleed(data: np.ndarray, filled: np.ndarray, passes: int = SEAM_BLEED_PASSES) -> np.ndarray:
    """Dilate painted texels into the unpainted gutter so bilinear rendering
    never blends in background; runs as deterministic synchronous sweeps."""
    kernel = np.ones((3, 3), dtype=np.float64)
    for _ in range(passes):
        if filled.all():
            break
        fcount = ndimage.convolve(filled.astype(np.float64), kernel, mode="constant")
        frontier = ~filled & (fcount > 0)
        if not frontier.any():
            break
        sums = np.stack([
            ndimage.convolve(data[:, :, c] * filled, kernel, mode="constant")
            for c in range(3)
        ], axis=2)
        data[frontier] = sums[frontier] / fcount[frontier, None]
        filled |= frontier
    return data


def _check_layers(texels: TexelTable, images: list[Raster]):
    if texels.visible is None or texels.priority is None or texels.pix is None:
        raise ValueError("view layers not computed; run compute_view_layers first")
    if texels.n_views != len(images):
        raise ValueError("number of images does not match the computed view layers")


def run_strategy(strategy: str, texels: TexelTable, images: list[Raster],
                 dilate_px: int = DEFAULT_DILATE_PX, seed: int | None = None,
                 iters: int = 0, mesh=None, views=None) -> TextureAtlas:
    """Dispatch: naive | nbf | opt-naive | opt-nbf | opt-scratch."""
    if strategy == "naive":
        return paint_naive(texels, images)
    if strategy == "nbf":
        return paint_nbf(texels, images, dilate_px)
    if strategy == "opt-naive":
        init = paint_naive(texels, images)
        return optimize_atlas(init, texels, images, exclude_borders=False,
                              iters=iters, mesh=mesh, views=views)
    if strategy == "opt-nbf":
        init = paint_nbf(texels, images, dilate_px)
        return optimize_atlas(init, texels, images, exclude_borders=True,
                              iters=iters, mesh=mesh, views=views)
    if strategy == "opt-scratch":
        return optimize_atlas(None, texels, images, exclude_borders=False,
                              iters=iters, seed=0 if seed is None else seed,
                              mesh=mesh, views=views)
    raise ValueError(f"unknown unprojection strategy {strategy!r}")
