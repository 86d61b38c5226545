"""Classical geometry extraction: TSDF fusion of dense depth maps, marching
cubes, quadric-error simplification, and Taubin smoothing."""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse as sp
from skimage import measure

from .camera import View, project
from .pcio import TriangleMesh
from .projection import Raster

DEFAULT_TSDF_RESOLUTION = 128
DEFAULT_VOLUME_EXTENT = 1.2  # covers the unit working cube with margin
DEFAULT_TARGET_FACES = 100_000
DEFAULT_TAUBIN_LAMBDA = 0.5
DEFAULT_TAUBIN_MU = -0.53
DEFAULT_TAUBIN_ITERS = 10


class EmptyMeshError(RuntimeError):
    pass


@dataclass
class TsdfVolume:
    resolution: int
    origin: np.ndarray  # (3,) corner of the volume
    voxel_size: float
    values: np.ndarray  # (R,R,R) float32 in [-1, 1], units of trunc
    weights: np.ndarray  # (R,R,R) float32 >= 0

    def voxel_centers(self) -> np.ndarray:
        r = self.resolution
        ax = self.origin[None, :] + (np.arange(r, dtype=np.float64)[:, None] + 0.5) * self.voxel_size
        return ax  # per-axis coordinates, combined lazily by the caller

    def dump(self, path_prefix) -> tuple[Path, Path]:
        raw = Path(str(path_prefix) + ".f32")
        meta = Path(str(path_prefix) + ".json")
        raw.write_bytes(np.ascontiguousarray(self.values, dtype="<f4").tobytes())
        meta.write_text(json.dumps({
            "resolution": self.resolution,
            "origin": self.origin.tolist(),
            "voxel_size": self.voxel_size,
        }, indent=2))
        return raw, meta


def tsdf_fuse(depth_maps: list[Raster], masks: list[Raster | np.ndarray], views: list[View],
              resolution: int = DEFAULT_TSDF_RESOLUTION, trunc: float | None = None,
              extent: float = DEFAULT_VOLUME_EXTENT) -> TsdfVolume:
    """Weighted TSDF integration of dense depth maps.

    Per voxel and view: signed distance = (depth at the projected pixel - voxel
    depth), clamped to [-trunc, trunc] and normalized; views average with
    weight 1. Pixels outside the mask (or at +inf) carve free space at +1.
    Voxels more than trunc behind the observed surface stay unobserved.
    """
    if len(views) == 0:
        raise ValueError("tsdf_fuse requires at least one view")
    if len(depth_maps) != len(views) or len(masks) != len(views):
        raise ValueError("need one depth map and one mask per view")
    r = resolution
    voxel_size = extent / r
    if trunc is None:
        trunc = 3.0 * voxel_size
    origin = np.full(3, -extent / 2.0)

    centers_1d = origin[0] + (np.arange(r, dtype=np.float64) + 0.5) * voxel_size
    gx, gy, gz = np.meshgrid(centers_1d, centers_1d, centers_1d, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    acc = np.zeros(r ** 3, dtype=np.float64)
    wsum = np.zeros(r ** 3, dtype=np.float64)
    for view, dmap, mask in zip(views, depth_maps, masks):
        m = np.asarray(getattr(mask, "data", mask), dtype=bool)
        pix, depth = project(view, pts)
        ci = np.rint(pix[:, 0]).astype(np.int64)
        rj = np.rint(pix[:, 1]).astype(np.int64)
        inframe = ((depth > 0) & (ci >= 0) & (ci < view.width)
                   & (rj >= 0) & (rj < view.height))
        d = np.full(len(pts), np.inf)
        fg = np.zeros(len(pts), dtype=bool)
        d[inframe] = dmap.data[rj[inframe], ci[inframe]].astype(np.float64)
        fg[inframe] = m[rj[inframe], ci[inframe]]
        background = inframe & (~fg | ~np.isfinite(d))
        surface = inframe & fg & np.isfinite(d)
        sdf = d - depth
        observed = background | (surface & (sdf >= -trunc))
        contrib = np.where(background, 1.0, np.clip(sdf / trunc, -1.0, 1.0))
        acc[observed] += contrib[observed]
        wsum[observed] += 1.0
    values = np.zeros(r ** 3, dtype=np.float64)
    seen = wsum > 0
    values[seen] = acc[seen] / wsum[seen]
    return TsdfVolume(r, origin, voxel_size,
                      values.reshape(r, r, r).astype(np.float32),
                      wsum.reshape(r, r, r).astype(np.float32))


def marching_cubes(volume: TsdfVolume, iso: float = 0.0) -> TriangleMesh:
    """Extract the iso-surface over observed voxels, oriented outward
    (faces wind so their normals ascend the signed distance field)."""
    observed = volume.weights > 0
    vals = volume.values
    obs_vals = vals[observed]
    if obs_vals.size == 0 or obs_vals.min() >= iso or obs_vals.max() <= iso:
        raise EmptyMeshError("volume has no sign change across observed voxels")
    verts, faces, _, _ = measure.marching_cubes(
        vals.astype(np.float64), level=iso,
        spacing=(volume.voxel_size,) * 3,
        gradient_direction="descent",
        allow_degenerate=False,
        mask=observed,
    )
    if len(faces) == 0:
        raise EmptyMeshError("no surface extracted")
    verts = verts + (volume.origin + 0.5 * volume.voxel_size)
    return TriangleMesh(verts, faces.astype(np.int64))


# ---------------------------------------------------------------------------
# simplification

def simplify_qem(mesh: TriangleMesh, target_faces: int) -> TriangleMesh:
    """Iterative minimum-quadric-error edge collapse.

    Collapses that flip any surviving incident face normal are rejected; stops
    at <= target_faces or when no legal collapse remains.
    """
    if target_faces < 4:
        raise ValueError("target_faces must be >= 4")
    if len(mesh.faces) <= target_faces:
        return mesh.copy()

    verts = mesh.vertices.copy()
    faces = [tuple(int(i) for i in f) for f in mesh.faces]
    alive_face = np.ones(len(faces), dtype=bool)
    n_alive = len(faces)

    vert_faces: list[set[int]] = [set() for _ in range(len(verts))]
    for fi, f in enumerate(faces):
        for v in f:
            vert_faces[v].add(fi)

    quadrics = np.zeros((len(verts), 4, 4), dtype=np.float64)
    for fi, f in enumerate(faces):
        p0, p1, p2 = verts[f[0]], verts[f[1]], verts[f[2]]
        n = np.cross(p1 - p0, p2 - p0)
        area2 = np.linalg.norm(n)
        if area2 < 1e-300:
            continue
        n_unit = n / area2
        plane = np.append(n_unit, -n_unit @ p0)
        K = np.outer(plane, plane) * (0.5 * area2)
        for v in f:
            quadrics[v] += K

    version = np.zeros(len(verts), dtype=np.int64)
    heap: list[tuple[float, int, int, int, int, tuple]] = []

    def edge_candidate(a: int, b: int):
        Q = quadrics[a] + quadrics[b]
        A = Q[:3, :3]
        rhs = -Q[:3, 3]
        pos = None
        if abs(np.linalg.det(A)) > 1e-12:
            pos = np.linalg.solve(A, rhs)
        candidates = [pos] if pos is not None else []
        candidates += [0.5 * (verts[a] + verts[b]), verts[a], verts[b]]
        best_cost, best_pos = np.inf, None
        for c in candidates:
            h = np.append(c, 1.0)
            cost = float(h @ Q @ h)
            if cost < best_cost:
                best_cost, best_pos = cost, c
        return best_cost, best_pos

    def push_edges_of(v: int):
        nbrs = set()
        for fi in vert_faces[v]:
            for u in faces[fi]:
                if u != v:
                    nbrs.add(u)
        for u in sorted(nbrs):
            a, b = (v, u) if v < u else (u, v)
            cost, pos = edge_candidate(a, b)
            heapq.heappush(heap, (cost, int(version[a]), int(version[b]), a, b, tuple(pos)))

    edges = set()
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            edges.add((min(a, b), max(a, b)))
    for a, b in sorted(edges):
        cost, pos = edge_candidate(a, b)
        heapq.heappush(heap, (cost, int(version[a]), int(version[b]), a, b, tuple(pos)))

    alive_vert = np.ones(len(verts), dtype=bool)

    while n_alive > target_faces and heap:
        cost, va, vb, a, b, pos = heapq.heappop(heap)
        if not (alive_vert[a] and alive_vert[b]):
            continue
        if va != version[a] or vb != version[b]:
            continue
        shared = vert_faces[a] & vert_faces[b]
        if not shared:
            continue
        pos = np.asarray(pos)
        # reject collapses that flip any surviving incident face
        legal = True
        affected = (vert_faces[a] | vert_faces[b]) - shared
        for fi in affected:
            f = faces[fi]
            old = [verts[v] for v in f]
            new = [pos if v in (a, b) else verts[v] for v in f]
            n_old = np.cross(old[1] - old[0], old[2] - old[0])
            n_new = np.cross(new[1] - new[0], new[2] - new[0])
            if float(n_old @ n_new) <= 0.0:
                legal = False
                break
        if not legal:
            continue
        # commit: b merges into a at pos
        verts[a] = pos
        quadrics[a] = quadrics[a] + quadrics[b]
        alive_vert[b] = False
        for fi in shared:
            if alive_face[fi]:
                alive_face[fi] = False
                n_alive -= 1
            for v in faces[fi]:
                vert_faces[v].discard(fi)
        for fi in list(vert_faces[b]):
            f = faces[fi]
            faces[fi] = tuple(a if v == b else v for v in f)
            vert_faces[a].add(fi)
        vert_faces[b] = set()
        version[a] += 1
        version[b] += 1
        push_edges_of(a)

    keep = np.nonzero(alive_face)[0]
    used = sorted({v for fi in keep for v in faces[fi]})
    remap = {v: i for i, v in enumerate(used)}
    new_faces = np.array([[remap[v] for v in faces[fi]] for fi in keep], dtype=np.int64)
    return TriangleMesh(verts[used], new_faces)


def taubin_smooth(mesh: TriangleMesh, lam: float = DEFAULT_TAUBIN_LAMBDA,
                  mu: float = DEFAULT_TAUBIN_MU,
                  iterations: int = DEFAULT_TAUBIN_ITERS) -> TriangleMesh:
    """Alternating uniform-Laplacian steps with factors lambda then mu."""
    if iterations == 0:
        return mesh.copy()
    nv = len(mesh.vertices)
    f = mesh.faces
    rows = np.concatenate([f[:, 0], f[:, 1], f[:, 1], f[:, 2], f[:, 2], f[:, 0]])
    cols = np.concatenate([f[:, 1], f[:, 0], f[:, 2], f[:, 1], f[:, 0], f[:, 2]])
    data = np.ones(len(rows))
    adj = sp.coo_matrix((data, (rows, cols)), shape=(nv, nv)).tocsr()
    adj.data[:] = 1.0  # binary adjacency; tocsr() summed the duplicate edges
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv_deg = np.where(deg > 0, 1.0 / np.maximum(deg, 1), 0.0)

    v = mesh.vertices.copy()
    for _ in range(iterations):
        for factor in (lam, mu):
            mean_nb = adj @ v * inv_deg[:, None]
            delta = mean_nb - v
            delta[deg == 0] = 0.0
            v = v + factor * delta
    return TriangleMesh(v, mesh.faces.copy(), uv_corners=None if mesh.uv_corners is None else mesh.uv_corners.copy())
