"""Fill unknown pixels of sparse rasters: nearest / linear interpolation and a
remote-protocol client for external inpainting services.

The remote wire format: POST {endpoint}/inpaint, multipart with parts
"image" (8-bit RGB PNG, unknown pixels black) and "mask" (8-bit gray PNG,
255 = known), response = 8-bit RGB PNG of identical dimensions.
"""

from __future__ import annotations

import io
import warnings

import numpy as np
import requests
from PIL import Image
from scipy import interpolate
from scipy.spatial import QhullError, cKDTree

from .pcio import quantize_colors
from .projection import Raster

BACKGROUND_RGB = 1.0  # white outside the foreground mask
_TIE_CHUNK = 8


class RemoteInpaintError(RuntimeError):
    def __init__(self, endpoint: str, status: int | None, message: str):
        super().__init__(f"remote inpainter {endpoint} failed (status={status}): {message}")
        self.endpoint = endpoint
        self.status = status


def _nearest_assign(known_rc: np.ndarray, query_rc: np.ndarray, n_known: int) -> np.ndarray:
    """Index of the nearest known pixel per query; ties broken by smaller row then column."""
    tree = cKDTree(known_rc)
    k = min(_TIE_CHUNK, n_known)
    _, idx = tree.query(query_rc, k=k)
    idx = np.atleast_2d(idx.T).T if idx.ndim == 1 else idx
    d2 = ((known_rc[idx] - query_rc[:, None, :]) ** 2).sum(axis=2).astype(np.int64)
    best = np.empty(len(query_rc), dtype=np.int64)
    # rank candidates by (squared distance, row, col); known_rc rows are sorted
    # row-major so the smaller index is the smaller (row, col)
    key = d2 * np.int64(n_known) + idx
    order = np.argmin(key, axis=1)
    best = idx[np.arange(len(query_rc)), order]
    if k < n_known:
        # if the k-th candidate still ties the minimum distance there may be an
        # unseen better tie-break candidate; redo those queries exhaustively
        mind2 = d2[np.arange(len(query_rc)), order]
        unsafe = d2[:, -1] == mind2
        if unsafe.any():
            full_d2 = ((known_rc[None, :, :] - query_rc[unsafe][:, None, :]) ** 2).sum(axis=2)
            mins = full_d2.min(axis=1)
            first = (full_d2 == mins[:, None]).argmax(axis=1)
            best[unsafe] = first
    return best


def inpaint_nearest(sparse: Raster, mask: Raster | np.ndarray) -> Raster:
    """Nearest-known-pixel fill inside the mask; outside it, white / +inf background."""
    m = np.asarray(getattr(mask, "data", mask), dtype=bool)
    known = sparse.known
    if not known.any():
        raise ValueError("inpaint_nearest: no known pixels")
    is_rgb = sparse.channels == "rgb"
    out = sparse.data.copy()
    krc = np.argwhere(known)  # row-major order: sorted by (row, col)
    fill = m & ~known
    if fill.any():
        qrc = np.argwhere(fill)
        best = _nearest_assign(krc, qrc, len(krc))
        src = krc[best]
        out[qrc[:, 0], qrc[:, 1]] = sparse.data[src[:, 0], src[:, 1]]
    out[~m] = BACKGROUND_RGB if is_rgb else np.inf
    dense_known = np.ones_like(known)
    return Raster(sparse.width, sparse.height, sparse.channels, out, dense_known)


def inpaint_linear(sparse: Raster, mask: Raster | np.ndarray) -> Raster:
    """Delaunay barycentric interpolation over known pixels.

    Pixels outside the convex hull of the known set fall back to nearest;
    fewer than 3 (or collinear) known pixels fall back entirely with a warning.
    """
    m = np.asarray(getattr(mask, "data", mask), dtype=bool)
    known = sparse.known
    if not known.any():
        raise ValueError("inpaint_linear: no known pixels")
    krc = np.argwhere(known)
    if len(krc) < 3:
        warnings.warn("inpaint_linear: fewer than 3 known pixels, falling back to nearest")
        return inpaint_nearest(sparse, m)
    values = sparse.data[known.nonzero()]
    try:
        interp = interpolate.LinearNDInterpolator(krc.astype(np.float64), values)
    except QhullError:
        warnings.warn("inpaint_linear: collinear known pixels, falling back to nearest")
        return inpaint_nearest(sparse, m)
    out = sparse.data.copy()
    fill = m & ~known
    if fill.any():
        qrc = np.argwhere(fill)
        vals = interp(qrc.astype(np.float64))
        flat_nan = np.isnan(vals)
        nan_rows = flat_nan.any(axis=1) if vals.ndim == 2 else flat_nan
        if nan_rows.any():
            best = _nearest_assign(krc, qrc[nan_rows], len(krc))
            src = krc[best]
            vals[nan_rows] = sparse.data[src[:, 0], src[:, 1]]
        out[qrc[:, 0], qrc[:, 1]] = vals
    out[~m] = BACKGROUND_RGB if sparse.channels == "rgb" else np.inf
    return Raster(sparse.width, sparse.height, sparse.channels, out, np.ones_like(known))


def encode_png_rgb(data: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(quantize_colors(data), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def encode_png_mask(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def inpaint_remote(sparse: Raster, mask: Raster | np.ndarray, endpoint: str,
                   timeout: float = 30.0, strict: bool = False,
                   fallback: str | None = None) -> Raster:
    """Send a sparse image to a remote inpainting service.

    The request carries the sparse RGB (unknown pixels black) and the known-pixel
    mask; the dense response is then composited with the foreground mask
    (background forced white) and, in strict mode, the known pixels are re-imposed.
    On failure, `fallback` may name a built-in ("nearest" / "linear").
    """
    if sparse.channels != "rgb":
        raise ValueError("inpaint_remote handles RGB rasters only")
    m = np.asarray(getattr(mask, "data", mask), dtype=bool)
    send = sparse.data.copy()
    send[~sparse.known] = 0.0
    files = {
        "image": ("image.png", encode_png_rgb(send), "image/png"),
        "mask": ("mask.png", encode_png_mask(sparse.known), "image/png"),
    }
    url = endpoint.rstrip("/") + "/inpaint"
    try:
        resp = requests.post(url, files=files, timeout=timeout)
    except requests.RequestException as e:
        return _remote_fail(sparse, m, endpoint, None, str(e), fallback)
    if resp.status_code != 200:
        return _remote_fail(sparse, m, endpoint, resp.status_code, resp.text[:200], fallback)
    try:
        img = Image.open(io.BytesIO(resp.content)).convert("RGB")
    except Exception as e:
        return _remote_fail(sparse, m, endpoint, 200, f"undecodable response: {e}", fallback)
    if img.size != (sparse.width, sparse.height):
        return _remote_fail(sparse, m, endpoint, 200,
                            f"dimension mismatch: got {img.size}, want {(sparse.width, sparse.height)}",
                            fallback)
    data = np.asarray(img, dtype=np.float64) / 255.0
    if strict:
        data[sparse.known] = sparse.data[sparse.known]
    data[~m] = BACKGROUND_RGB
    return Raster(sparse.width, sparse.height, "rgb", data, np.ones((sparse.height, sparse.width), dtype=bool))


def _remote_fail(sparse, mask, endpoint, status, message, fallback):
    err = RemoteInpaintError(endpoint, status, message)
    if fallback == "nearest":
        warnings.warn(f"{err}; falling back to nearest")
        return inpaint_nearest(sparse, mask)
    if fallback == "linear":
        warnings.warn(f"{err}; falling back to linear")
        return inpaint_linear(sparse, mask)
    raise err


def run_inpainter(kind: str, sparse: Raster, mask, *, strict: bool | None = None,
                  endpoint: str | None = None, timeout: float = 30.0,
                  fallback: str | None = None) -> Raster:
    """Dispatch on an inpainter name: "nearest", "linear", or "remote:URL".

    strict=None uses the backend default: built-ins always keep known pixels,
    remote backends may repaint them (diffusion models harmonize known pixels)
    unless strict is set. RGB results are snapped to the 8-bit grid so
    in-memory and file-mediated pipelines agree exactly.
    """
    if kind == "nearest":
        out = inpaint_nearest(sparse, mask)
    elif kind == "linear":
        out = inpaint_linear(sparse, mask)
    elif kind == "remote" or kind.startswith("remote:"):
        url = endpoint if endpoint is not None else kind.split(":", 1)[1]
        out = inpaint_remote(sparse, mask, url, timeout=timeout,
                             strict=bool(strict) if strict is not None else False,
                             fallback=fallback)
    else:
        raise ValueError(f"unknown inpainter {kind!r}")
    if out.channels == "rgb":
        out.data = quantize_colors(out.data).astype(np.float64) / 255.0
    return out
