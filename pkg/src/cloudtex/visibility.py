"""Per-view point visibility: spherical-flip hidden point removal and depth culling."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .camera import View, project
from .projection import Raster

DEFAULT_RADIUS_FACTOR = 100.0
DEFAULT_DEPTH_EPSILON = 5e-3


def _positions(cloud_or_points) -> np.ndarray:
    pts = getattr(cloud_or_points, "positions", cloud_or_points)
    return np.asarray(pts, dtype=np.float64).reshape(-1, 3)


def hidden_point_removal(cloud_or_points, view: View,
                         radius_factor: float = DEFAULT_RADIUS_FACTOR) -> np.ndarray:
    """Indices of points visible from the view via spherical-flip inversion.

    Points are moved to camera-centered coordinates, reflected by
    p -> p + 2 (R - |p|) p / |p| with R = radius_factor * max |p|, and the
    points on the convex hull of the reflected set plus the camera origin are
    reported visible. Degenerate (coplanar) inputs fall back to all-visible
    with a warning.
    """
    pts = _positions(cloud_or_points)
    n = len(pts)
    if n < 4:
        return np.arange(n)
    q = pts - view.position
    norms = np.linalg.norm(q, axis=1)
    norms = np.maximum(norms, 1e-300)
    # radius keyed to the nearest point: that point is always visible, so the
    # flip is identical when re-run on the visible subset (exact idempotence)
    radius = radius_factor * norms.min()
    flipped = q + 2.0 * (radius - norms)[:, None] * q / norms[:, None]
    augmented = np.vstack([flipped, np.zeros(3)])
    try:
        hull = ConvexHull(augmented)
    except QhullError:
        warnings.warn("hidden_point_removal: degenerate (coplanar) input, reporting all points visible")
        return np.arange(n)
    visible = hull.vertices[hull.vertices < n]
    return np.sort(visible)


def depth_cull(points: np.ndarray, view: View, mesh_depth: Raster,
               epsilon: float = DEFAULT_DEPTH_EPSILON) -> np.ndarray:
    """Indices of points not hidden behind the mesh depth map.

    A point is kept iff its projected depth <= depth at its pixel + epsilon.
    Points projecting off-screen or onto background pixels are kept.
    """
    if (mesh_depth.width, mesh_depth.height) != (view.width, view.height):
        raise ValueError("depth map resolution does not match the view")
    pts = _positions(points)
    pix, depth = project(view, pts)
    ci = np.rint(pix[:, 0]).astype(np.int64)
    rj = np.rint(pix[:, 1]).astype(np.int64)
    onscreen = (ci >= 0) & (ci < view.width) & (rj >= 0) & (rj < view.height) & (depth > 0)
    keep = np.ones(len(pts), dtype=bool)
    md = mesh_depth.data[rj[onscreen], ci[onscreen]].astype(np.float64)
    keep[onscreen] = depth[onscreen] <= md + epsilon
    return np.nonzero(keep)[0]
