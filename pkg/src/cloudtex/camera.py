"""Fixed camera rigs and world <-> pixel projection math.

Conventions: pixel (i, j) = (column, row) with centers at integer coordinates;
j grows downward. Depth is measured along the camera forward axis, not as
Euclidean ray length. All rigs look at the origin of the normalized working
cube and assume a unit-scale subject.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0

DEFAULT_RESOLUTION = 256
DEFAULT_RADIUS = 2.0
DEFAULT_FOV_Y = math.radians(50.0)
DEFAULT_NEAR = 0.1
DEFAULT_FAR = 10.0


@dataclass
class View:
    position: np.ndarray  # (3,)
    direction: np.ndarray  # unit vector toward the subject
    up: np.ndarray  # unit vector, not parallel to direction
    fov_y: float  # radians
    width: int
    height: int
    near: float = DEFAULT_NEAR
    far: float = DEFAULT_FAR

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise ValueError("view direction must be unit length")
        if abs(abs(float(self.direction @ self.up)) - 1.0) < 1e-12:
            raise ValueError("view direction must not be parallel to up")
        if not (0 < self.near < self.far):
            raise ValueError("need 0 < near < far")
        if self.width < 1 or self.height < 1:
            raise ValueError("resolution must be >= 1")

    def rotation(self) -> np.ndarray:
        """World->camera rotation; rows are (right, down, forward)."""
        fwd = self.direction
        right = np.cross(fwd, self.up)
        right = right / np.linalg.norm(right)
        down = np.cross(fwd, right)
        down = down / np.linalg.norm(down)
        return np.stack([right, down, fwd])

    def tan_half(self) -> tuple[float, float]:
        ty = math.tan(self.fov_y / 2.0)
        tx = ty * self.width / self.height
        return tx, ty


def look_at(position, fov_y=DEFAULT_FOV_Y, width=DEFAULT_RESOLUTION, height=None,
            near=DEFAULT_NEAR, far=DEFAULT_FAR, target=(0.0, 0.0, 0.0)) -> View:
    """View at `position` looking at `target`, up +Y (falls back to +X when parallel)."""
    position = np.asarray(position, dtype=np.float64)
    d = np.asarray(target, dtype=np.float64) - position
    d = d / np.linalg.norm(d)
    up = np.array([0.0, 1.0, 0.0])
    if abs(float(d @ up)) > 1.0 - 1e-9:
        up = np.array([1.0, 0.0, 0.0])
    return View(position, d, up, fov_y, width, height if height is not None else width, near, far)


@dataclass
class CameraRig:
    views: list[View]
    rig_kind: str  # cube6 | fib8 | ico20

    def __len__(self) -> int:
        return len(self.views)

    def to_json(self) -> str:
        doc = {
            "rig_kind": self.rig_kind,
            "views": [
                {
                    "position": v.position.tolist(),
                    "direction": v.direction.tolist(),
                    "up": v.up.tolist(),
                    "fov_y": v.fov_y,
                    "width": v.width,
                    "height": v.height,
                    "near": v.near,
                    "far": v.far,
                }
                for v in self.views
            ],
        }
        return json.dumps(doc, indent=2)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @staticmethod
    def from_json(text: str) -> "CameraRig":
        doc = json.loads(text)
        views = [
            View(np.array(v["position"]), np.array(v["direction"]), np.array(v["up"]),
                 v["fov_y"], v["width"], v["height"], v["near"], v["far"])
            for v in doc["views"]
        ]
        return CameraRig(views, doc["rig_kind"])

    @staticmethod
    def load(path) -> "CameraRig":
        return CameraRig.from_json(Path(path).read_text())


_RIG_SIZES = {"cube6": 6, "fib8": 8, "ico20": 20}


def make_rig(kind: str, resolution: int = DEFAULT_RESOLUTION, radius: float = DEFAULT_RADIUS,
             fov_y: float = DEFAULT_FOV_Y) -> CameraRig:
    """Build one of the fixed rigs, all views looking at the origin.

    cube6: face centers of an origin-centered cube. fib8: 8-point Fibonacci
    sphere lattice. ico20: the 20 icosahedral face-center directions (the
    vertices of the dual regular dodecahedron).
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    if kind == "cube6":
        dirs = np.array([
            [1, 0, 0], [-1, 0, 0],
            [0, 1, 0], [0, -1, 0],
            [0, 0, 1], [0, 0, -1],
        ], dtype=np.float64)
    elif kind == "fib8":
        dirs = fibonacci_sphere(8)
    elif kind == "ico20":
        phi = GOLDEN_RATIO
        a, b = 1.0, 1.0 / phi
        dirs = np.array(
            [[sx, sy, sz] for sx in (-a, a) for sy in (-a, a) for sz in (-a, a)]
            + [[0.0, sy * b, sz * phi] for sy in (-1, 1) for sz in (-1, 1)]
            + [[sx * b, sy * phi, 0.0] for sx in (-1, 1) for sy in (-1, 1)]
            + [[sx * phi, 0.0, sz * b] for sx in (-1, 1) for sz in (-1, 1)],
            dtype=np.float64,
        )
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    else:
        raise ValueError(f"unknown rig kind {kind!r}")
    views = [look_at(radius * d, fov_y=fov_y, width=resolution) for d in dirs]
    return CameraRig(views, kind)


def fibonacci_sphere(n: int) -> np.ndarray:
    """Canonical Fibonacci lattice: y_t = 1 - 2(t+0.5)/n, azimuth 2*pi*t/phi."""
    t = np.arange(n, dtype=np.float64)
    y = 1.0 - 2.0 * (t + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - y * y))
    az = 2.0 * math.pi * t / GOLDEN_RATIO
    return np.stack([r * np.cos(az), y, r * np.sin(az)], axis=1)


def project(view: View, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Perspective-project world points.

    Returns (pix, depth): pix[..., 0] = i (column), pix[..., 1] = j (row),
    both continuous; depth is signed distance along the forward axis
    (<= 0 behind the camera). Out-of-frustum points simply land outside
    [0, w) x [0, h).
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    rot = view.rotation()
    cam = (pts - view.position) @ rot.T
    depth = cam[:, 2]
    tx, ty = view.tan_half()
    safe = np.where(np.abs(depth) < 1e-300, 1e-300, depth)
    xn = cam[:, 0] / (safe * tx)
    yn = cam[:, 1] / (safe * ty)
    i = (xn + 1.0) * 0.5 * view.width - 0.5
    j = (yn + 1.0) * 0.5 * view.height - 0.5
    pix = np.stack([i, j], axis=1)
    if single:
        return pix[0], float(depth[0])
    return pix, depth


def unproject(view: View, pix: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """Inverse of `project` for pixel coords + axis depth."""
    pix = np.atleast_2d(np.asarray(pix, dtype=np.float64))
    depth = np.atleast_1d(np.asarray(depth, dtype=np.float64))
    tx, ty = view.tan_half()
    xn = (pix[:, 0] + 0.5) * 2.0 / view.width - 1.0
    yn = (pix[:, 1] + 0.5) * 2.0 / view.height - 1.0
    cam = np.stack([xn * tx * depth, yn * ty * depth, depth], axis=1)
    return cam @ view.rotation() + view.position


def direction_priority(n: np.ndarray, view: View) -> float | np.ndarray:
    """Cosine between the surface normal and the direction toward the camera.

    1.0 = surface faces the camera head-on, negative = back-facing.
    """
    n = np.asarray(n, dtype=np.float64)
    lens = np.linalg.norm(n, axis=-1)
    if np.any(lens < 1e-12):
        raise ValueError("zero-length normal")
    score = -(n @ view.direction)
    if np.isscalar(score) or score.ndim == 0:
        return float(score)
    return score
