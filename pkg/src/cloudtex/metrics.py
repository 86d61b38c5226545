"""Evaluation: textured rendering, PSNR/SSIM on renders, and geometry metrics
(Chamfer distance x100, normal consistency, F-score)."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree
from skimage.metrics import structural_similarity

from .camera import CameraRig, View, make_rig
from .pcio import TextureAtlas, TriangleMesh, sample_surface
from .projection import Raster, bilinear_sample, rasterize_mesh

METRIC_SAMPLES = 100_000
METRIC_SEED = 0
F_SCORE_TAU = 0.01


def render_textured(mesh: TriangleMesh, atlas: TextureAtlas, view: View) -> Raster:
    """Unlit albedo rendering: z-buffer, per-pixel barycentric UVs, bilinear
    atlas sampling, white background."""
    if mesh.uv_corners is None:
        raise ValueError("mesh has no UVs")
    _, fid, bary = rasterize_mesh(mesh, view)
    h, w = fid.shape
    out = np.ones((h, w, 3), dtype=np.float64)
    cov = fid >= 0
    if cov.any():
        fids = fid[cov]
        uv = np.einsum("nk,nkd->nd", bary[cov].astype(np.float64), mesh.uv_corners[fids])
        A = atlas.resolution
        x = uv[:, 0] * A - 0.5
        y = (1.0 - uv[:, 1]) * A - 0.5
        out[cov] = bilinear_sample(atlas.data, x, y)
    return Raster(w, h, "rgb", out, np.ones((h, w), dtype=bool))


def eval_views(resolution: int) -> CameraRig:
    """The 20-view icosahedral evaluation rig."""
    return make_rig("ico20", resolution=resolution)


def _img(a) -> np.ndarray:
    return np.asarray(getattr(a, "data", a), dtype=np.float64)


def psnr(a, b) -> float:
    """10 log10(1 / MSE) on [0,1] images; +inf for identical inputs."""
    ia, ib = _img(a), _img(b)
    if ia.shape != ib.shape:
        raise ValueError(f"psnr: shape mismatch {ia.shape} vs {ib.shape}")
    mse = float(np.mean((ia - ib) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim(a, b) -> float:
    """Single-scale SSIM, 11x11 Gaussian window sigma=1.5, K1=0.01, K2=0.03,
    averaged per channel over valid window positions."""
    ia, ib = _img(a), _img(b)
    if ia.shape != ib.shape:
        raise ValueError(f"ssim: shape mismatch {ia.shape} vs {ib.shape}")
    if min(ia.shape[0], ia.shape[1]) < 11:
        raise ValueError("ssim: image smaller than the 11x11 window")
    kwargs = dict(win_size=11, gaussian_weights=True, sigma=1.5,
                  use_sample_covariance=False, K1=0.01, K2=0.03, data_range=1.0)
    if ia.ndim == 3:
        return float(structural_similarity(ia, ib, channel_axis=2, **kwargs))
    return float(structural_similarity(ia, ib, **kwargs))


def chamfer_l1(pred: np.ndarray, gt: np.ndarray) -> float:
    """100 * 0.5 * (mean NN distance pred->gt + mean NN distance gt->pred)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if len(pred) == 0 or len(gt) == 0:
        raise ValueError("chamfer_l1: empty point set")
    d_pg, _ = cKDTree(gt).query(pred)
    d_gp, _ = cKDTree(pred).query(gt)
    return 100.0 * 0.5 * (float(d_pg.mean()) + float(d_gp.mean()))


def normal_consistency(pred: TriangleMesh, gt: TriangleMesh,
                       n_samples: int = METRIC_SAMPLES, seed: int = METRIC_SEED) -> float:
    """Mean absolute normal cosine against the nearest sample, symmetrized."""
    pp, pn, _, _ = sample_surface(pred, n_samples, seed)
    gp, gn, _, _ = sample_surface(gt, n_samples, seed)
    _, idx_pg = cKDTree(gp).query(pp)
    _, idx_gp = cKDTree(pp).query(gp)
    t1 = float(np.abs(np.sum(pn * gn[idx_pg], axis=1)).mean())
    t2 = float(np.abs(np.sum(gn * pn[idx_gp], axis=1)).mean())
    return 0.5 * (t1 + t2)


def f_score(pred: np.ndarray, gt: np.ndarray, tau: float = F_SCORE_TAU) -> float:
    """Harmonic mean of precision/recall at distance threshold tau."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if len(pred) == 0 or len(gt) == 0:
        raise ValueError("f_score: empty point set")
    d_pg, _ = cKDTree(gt).query(pred)
    d_gp, _ = cKDTree(pred).query(gt)
    precision = float((d_pg <= tau).mean())
    recall = float((d_gp <= tau).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def geometry_report(pred: TriangleMesh, gt: TriangleMesh,
                    n_samples: int = METRIC_SAMPLES, seed: int = METRIC_SEED) -> dict:
    """CD / NC / FS between two meshes using fixed-seed area-weighted samples."""
    pp, _, _, _ = sample_surface(pred, n_samples, seed)
    gp, _, _, _ = sample_surface(gt, n_samples, seed)
    return {
        "cd": chamfer_l1(pp, gp),
        "nc": normal_consistency(pred, gt, n_samples, seed),
        "fs": f_score(pp, gp),
    }


def render_report(pred: tuple[TriangleMesh, TextureAtlas], gt: tuple[TriangleMesh, TextureAtlas],
                  resolution: int = 256) -> dict:
    """PSNR/SSIM averaged over the 20 icosahedral views, plus per-view values."""
    rig = eval_views(resolution)
    per_view = []
    for view in rig.views:
        ra = render_textured(pred[0], pred[1], view)
        rb = render_textured(gt[0], gt[1], view)
        per_view.append({"psnr": psnr(ra, rb), "ssim": ssim(ra, rb)})
    mean_psnr = float(np.mean([v["psnr"] for v in per_view]))
    mean_ssim = float(np.mean([v["ssim"] for v in per_view]))
    return {"psnr": mean_psnr, "ssim": mean_ssim, "views": per_view}
