"""UV unwrapping into planar charts, shelf packing, and texel-table rasterization.

The built-in unwrapper is deliberately basic (planar charts + shelf packing);
externally unwrapped meshes can be ingested via OBJ and their charts are
recovered as UV-connected components. When a contiguous surface region ends up
split across charts, border-first unprojection loses its advantage along the
extra chart boundary and behaves like the naive strategy there.
"""

from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .pcio import TriangleMesh

DEFAULT_ATLAS_RES = 1024
DEFAULT_GUTTER_PX = 4
DEFAULT_NORMAL_DEV_DEG = 60.0


class PackingError(RuntimeError):
    pass


@dataclass
class Chart:
    id: int
    face_ids: np.ndarray
    uv_bbox: tuple[int, int, int, int] = (0, 0, 0, 0)  # (x0, y0, w, h) atlas pixels


@dataclass
class TexelTable:
    """Per-texel correspondence between the atlas and the mesh surface.

    View layers (visible/border/priority/pix) are (K, H, W) arrays attached
    after projection against a camera rig.
    """

    resolution: int
    valid: np.ndarray  # (H, W) bool
    chart_id: np.ndarray  # (H, W) int32, -1 where invalid
    face_id: np.ndarray  # (H, W) int32, -1 where invalid
    position: np.ndarray  # (H, W, 3) float64
    normal: np.ndarray  # (H, W, 3) float64, unit on valid texels
    visible: np.ndarray | None = None  # (K, H, W) bool
    border: np.ndarray | None = None  # (K, H, W) bool
    priority: np.ndarray | None = None  # (K, H, W) float32
    pix: np.ndarray | None = None  # (K, H, W, 2) float32 continuous (i, j)

    @property
    def n_views(self) -> int:
        return 0 if self.visible is None else self.visible.shape[0]


def _face_adjacency(faces: np.ndarray) -> list[list[int]]:
    edge_map: dict[tuple[int, int], list[int]] = defaultdict(list)
    for fi, f in enumerate(faces):
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            edge_map[(min(a, b), max(a, b))].append(fi)
        # face ids per undirected edge
    adj: list[list[int]] = [[] for _ in range(len(faces))]
    for flist in edge_map.values():
        for i in flist:
            for j in flist:
                if i != j:
                    adj[i].append(j)
    return adj


def unwrap(mesh: TriangleMesh, atlas_res: int = DEFAULT_ATLAS_RES,
           gutter_px: int = DEFAULT_GUTTER_PX,
           normal_dev_deg: float = DEFAULT_NORMAL_DEV_DEG) -> tuple[TriangleMesh, list[Chart]]:
    """Attach per-corner UVs to a mesh and return the chart partition.

    Meshes that already carry UVs are passed through; their charts are
    recovered as connected components of the UV triangle adjacency graph.
    """
    if len(mesh.faces) == 0:
        raise ValueError("cannot unwrap an empty mesh")
    if mesh.uv_corners is not None:
        return mesh, recover_charts(mesh, atlas_res)

    face_n = mesh.face_normals()
    adj = _face_adjacency(mesh.faces)
    cos_thresh = np.cos(np.radians(normal_dev_deg))

    chart_faces: list[list[int]] = []
    assigned = np.full(len(mesh.faces), -1, dtype=np.int64)
    for seed in range(len(mesh.faces)):
        if assigned[seed] >= 0:
            continue
        cid = len(chart_faces)
        members = [seed]
        assigned[seed] = cid
        queue = [seed]
        seed_n = face_n[seed]
        while queue:
            cur = queue.pop(0)
            for nb in adj[cur]:
                if assigned[nb] < 0 and float(face_n[nb] @ seed_n) >= cos_thresh:
                    assigned[nb] = cid
                    members.append(nb)
                    queue.append(nb)
        chart_faces.append(sorted(members))

    # project each chart on its area-weighted average plane
    areas = mesh.face_areas()
    local: list[np.ndarray] = []  # per chart: (nf, 3, 2) local 2D corners
    final_faces: list[list[int]] = []
    for members in chart_faces:
        pieces = _project_chart(mesh, members, face_n, areas)
        for faces_piece, coords in pieces:
            final_faces.append(faces_piece)
            local.append(coords)

    uv_corners = _pack_charts(mesh, final_faces, local, atlas_res, gutter_px)
    out = mesh.copy()
    out.uv_corners = uv_corners
    charts = [Chart(i, np.asarray(f, dtype=np.int64)) for i, f in enumerate(final_faces)]
    _fill_bboxes(out, charts, atlas_res)
    return out, charts


def _project_chart(mesh, members, face_n, areas):
    """Project a chart to 2D; splits into per-face charts if the projection inverts."""
    mem = np.asarray(members, dtype=np.int64)
    w = areas[mem]
    n = (face_n[mem] * w[:, None]).sum(axis=0)
    ln = np.linalg.norm(n)
    n = face_n[mem[0]] if ln < 1e-12 else n / ln
    u, v = _plane_basis(n)
    tri = mesh.vertices[mesh.faces[mem]]  # (nf, 3, 3)
    coords = np.stack([tri @ u, tri @ v], axis=2)  # (nf, 3, 2)
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    signed2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    expect = np.sign(face_n[mem] @ n)
    inverted = (signed2 * expect <= 0) & (np.abs(signed2) > 0)
    flat = np.abs(signed2) <= 1e-18
    if (inverted | flat).any() and len(mem) > 1:
        # fall back to one chart per face, each on its own plane
        out = []
        for f in mem:
            un, vn = _plane_basis(face_n[f])
            t = mesh.vertices[mesh.faces[f]]
            out.append(([int(f)], np.stack([t @ un, t @ vn], axis=1)[None, :, :]))
        return out
    return [(list(map(int, mem)), coords)]


def _plane_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(n)))] = 1.0
    u = np.cross(n, axis)
    u = u / np.linalg.norm(u)
    v = np.cross(n, u)
    return u, v


def _pack_charts(mesh, chart_faces, local, atlas_res, gutter_px):
    g = gutter_px
    sizes = []
    shifted = []
    for coords in local:
        lo = coords.reshape(-1, 2).min(axis=0)
        c = coords - lo
        shifted.append(c)
        sizes.append(c.reshape(-1, 2).max(axis=0))
    sizes = np.asarray(sizes, dtype=np.float64)  # world units (w, h)
    total_area = float(np.prod(np.maximum(sizes, 1e-12), axis=1).sum())
    scale = np.sqrt(0.5 * atlas_res * atlas_res / max(total_area, 1e-12))
    max_side = float(sizes.max()) if sizes.size else 1.0
    scale = min(scale, (atlas_res - 2 * g) / max(max_side, 1e-12))

    for _ in range(4):
        placement = _shelf_pack(sizes * scale, atlas_res, g)
        if placement is not None:
            break
        scale *= 0.7
    else:
        raise PackingError(f"charts do not fit a {atlas_res}px atlas after 3 retries")

    uv_corners = np.zeros((len(mesh.faces), 3, 2), dtype=np.float64)
    for ci, faces in enumerate(chart_faces):
        x0, y0 = placement[ci]
        px = shifted[ci] * scale  # (nf, 3, 2) chart-local pixels
        xs = x0 + px[:, :, 0]
        ys = y0 + px[:, :, 1]
        uv = np.stack([xs / atlas_res, 1.0 - ys / atlas_res], axis=2)
        uv_corners[np.asarray(faces, dtype=np.int64)] = uv
    return uv_corners


def _shelf_pack(sizes_px: np.ndarray, atlas_res: int, g: int):
    """Shelf packing by descending height. Returns per-chart (x0, y0) or None."""
    order = np.argsort(-sizes_px[:, 1], kind="stable")
    placement = [None] * len(sizes_px)
    x = float(g)
    y = float(g)
    shelf_h = 0.0
    for ci in order:
        w, h = sizes_px[ci]
        if x + w + g > atlas_res:
            y += shelf_h + g
            x = float(g)
            shelf_h = 0.0
        if x + w + g > atlas_res or y + h + g > atlas_res:
            return None
        placement[ci] = (x, y)
        x += w + g
        shelf_h = max(shelf_h, float(h))
    return placement


def recover_charts(mesh: TriangleMesh, atlas_res: int) -> list[Chart]:
    """Connected components of the UV triangle adjacency graph."""
    uv = mesh.uv_corners
    parent = np.arange(len(mesh.faces))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    corner_key: dict[tuple[int, int, int], list[tuple[int, int]]] = defaultdict(list)
    q = np.round(uv * 1e7).astype(np.int64)
    for fi, f in enumerate(mesh.faces):
        for k in range(3):
            corner_key[(int(f[k]), int(q[fi, k, 0]), int(q[fi, k, 1]))].append((fi, k))
    edge_map: dict[tuple, list[int]] = defaultdict(list)
    for fi, f in enumerate(mesh.faces):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            va, vb = int(f[a]), int(f[b])
            ka = (va, int(q[fi, a, 0]), int(q[fi, a, 1]))
            kb = (vb, int(q[fi, b, 0]), int(q[fi, b, 1]))
            key = tuple(sorted((ka, kb)))
            edge_map[key].append(fi)
    for flist in edge_map.values():
        for other in flist[1:]:
            ra, rb = find(flist[0]), find(other)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    roots = np.array([find(i) for i in range(len(mesh.faces))])
    uniq = np.unique(roots)
    charts = [Chart(i, np.nonzero(roots == r)[0]) for i, r in enumerate(uniq)]
    _fill_bboxes(mesh, charts, atlas_res)
    return charts


def _fill_bboxes(mesh, charts, atlas_res):
    for ch in charts:
        uv = mesh.uv_corners[ch.face_ids].reshape(-1, 2)
        xs = uv[:, 0] * atlas_res
        ys = (1.0 - uv[:, 1]) * atlas_res
        x0 = int(np.floor(xs.min()))
        y0 = int(np.floor(ys.min()))
        ch.uv_bbox = (x0, y0, int(np.ceil(xs.max())) - x0, int(np.ceil(ys.max())) - y0)


def rasterize_texels(mesh: TriangleMesh, charts: list[Chart], atlas_res: int) -> TexelTable:
    """Map every texel center inside a UV triangle to its surface point.

    Texel (r, c) centers sit at uv = ((c+0.5)/res, 1-(r+0.5)/res). Overlapping
    UV triangles resolve to the smaller face id with a warning.
    """
    if mesh.uv_corners is None:
        raise ValueError("mesh has no UVs")
    A = atlas_res
    valid = np.zeros((A, A), dtype=bool)
    chart_id = np.full((A, A), -1, dtype=np.int32)
    face_id = np.full((A, A), -1, dtype=np.int32)
    position = np.zeros((A, A, 3), dtype=np.float64)
    normal = np.zeros((A, A, 3), dtype=np.float64)

    face_chart = np.full(len(mesh.faces), -1, dtype=np.int32)
    for ch in charts:
        face_chart[ch.face_ids] = ch.id

    face_n = mesh.face_normals()
    overlap = False
    uvpx = np.empty_like(mesh.uv_corners)
    uvpx[:, :, 0] = mesh.uv_corners[:, :, 0] * A - 0.5  # continuous col
    uvpx[:, :, 1] = (1.0 - mesh.uv_corners[:, :, 1]) * A - 0.5  # continuous row

    for fi in range(len(mesh.faces)):
        p = uvpx[fi]
        x0 = max(int(np.ceil(p[:, 0].min() - 1e-9)), 0)
        x1 = min(int(np.floor(p[:, 0].max() + 1e-9)), A - 1)
        y0 = max(int(np.ceil(p[:, 1].min() - 1e-9)), 0)
        y1 = min(int(np.floor(p[:, 1].max() + 1e-9)), A - 1)
        if x1 < x0 or y1 < y0:
            continue
        a, b, c = p[0], p[1], p[2]
        area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if area == 0.0:
            continue
        gx, gy = np.meshgrid(np.arange(x0, x1 + 1, dtype=np.float64),
                             np.arange(y0, y1 + 1, dtype=np.float64), indexing="xy")
        w0 = ((c[0] - b[0]) * (gy - b[1]) - (c[1] - b[1]) * (gx - b[0])) / area
        w1 = ((a[0] - c[0]) * (gy - c[1]) - (a[1] - c[1]) * (gx - c[0])) / area
        w2 = 1.0 - w0 - w1
        eps = -1e-9
        inside = (w0 >= eps) & (w1 >= eps) & (w2 >= eps)
        if not inside.any():
            continue
        rows = gy.astype(np.int64)[inside]
        cols = gx.astype(np.int64)[inside]
        taken = valid[rows, cols]
        if taken.any():
            # texels on a shared edge graze both triangles; only a strictly
            # interior second claim indicates a genuine UV overlap
            strict = (w0[inside] > 1e-6) & (w1[inside] > 1e-6) & (w2[inside] > 1e-6)
            if (taken & strict).any():
                overlap = True
        keep = ~taken
        rows, cols = rows[keep], cols[keep]
        if len(rows) == 0:
            continue
        bw = np.stack([w0[inside][keep], w1[inside][keep], w2[inside][keep]], axis=1)
        bw = np.clip(bw, 0.0, None)
        bw /= bw.sum(axis=1)[:, None]
        tri = mesh.vertices[mesh.faces[fi]]
        position[rows, cols] = bw @ tri
        if mesh.vertex_normals is not None:
            nrm = bw @ mesh.vertex_normals[mesh.faces[fi]]
            ln = np.linalg.norm(nrm, axis=1)
            nrm = np.where(ln[:, None] > 1e-12, nrm / np.maximum(ln, 1e-300)[:, None], face_n[fi])
        else:
            nrm = np.broadcast_to(face_n[fi], (len(rows), 3))
        normal[rows, cols] = nrm
        valid[rows, cols] = True
        face_id[rows, cols] = fi
        chart_id[rows, cols] = face_chart[fi]
    if overlap:
        warnings.warn("rasterize_texels: overlapping UV triangles; smaller face id kept")
    return TexelTable(A, valid, chart_id, face_id, position, normal)
