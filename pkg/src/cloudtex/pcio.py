"""Point cloud / mesh file I/O, surface sampling, and input degradation utilities."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image


class FormatError(ValueError):
    """Raised when an input file violates its declared format."""


class InputError(ValueError):
    """Raised when an input is well-formed but unusable (e.g. missing colors)."""


@dataclass
class ColoredPointCloud:
    positions: np.ndarray  # (N, 3) float64
    colors: np.ndarray  # (N, 3) float64 in [0, 1]
    normals: np.ndarray | None = None  # (N, 3) unit vectors

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.colors = np.asarray(self.colors, dtype=np.float64)
        n = len(self.positions)
        if n < 1:
            raise InputError("point cloud must contain at least one point")
        if self.positions.shape != (n, 3) or self.colors.shape != (n, 3):
            raise InputError("positions and colors must both be (N, 3)")
        if self.colors.min() < 0.0 or self.colors.max() > 1.0:
            raise InputError("color channels must lie in [0, 1]")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64)
            if self.normals.shape != (n, 3):
                raise InputError("normals must be (N, 3)")
            lens = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(lens - 1.0) > 1e-6):
                raise InputError("normals must be unit length")

    def __len__(self) -> int:
        return len(self.positions)


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int64
    vertex_normals: np.ndarray | None = None
    uv_corners: np.ndarray | None = None  # (F, 3, 2) per-corner UV in [0,1]^2
    material: str | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        if self.faces.size and self.faces.max() >= len(self.vertices):
            raise FormatError("face index out of range")
        if self.faces.size and self.faces.min() < 0:
            raise FormatError("negative face index")
        f = self.faces
        if f.size and np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise FormatError("degenerate face (repeated vertex index)")
        if self.uv_corners is not None:
            self.uv_corners = np.asarray(self.uv_corners, dtype=np.float64)
            if self.uv_corners.shape != (len(self.faces), 3, 2):
                raise FormatError("uv_corners must be (F, 3, 2)")

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_normals(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        lens = np.linalg.norm(n, axis=1)
        return n / np.maximum(lens, 1e-300)[:, None]

    def face_areas(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return 0.5 * np.linalg.norm(n, axis=1)

    def copy(self) -> "TriangleMesh":
        return TriangleMesh(
            self.vertices.copy(),
            self.faces.copy(),
            None if self.vertex_normals is None else self.vertex_normals.copy(),
            None if self.uv_corners is None else self.uv_corners.copy(),
            self.material,
        )


@dataclass
class TextureAtlas:
    data: np.ndarray  # (res, res, 3) float64 in [0, 1]

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise InputError("atlas data must be (H, W, 3)")

    @property
    def resolution(self) -> int:
        return self.data.shape[0]


@dataclass
class NormalizationTransform:
    """Similarity transform mapping input coordinates to the unit working cube."""

    center: np.ndarray  # (3,)
    scale: float  # working = (input - center) * scale

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) * self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) / self.scale + self.center


def normalize_points(points: np.ndarray) -> NormalizationTransform:
    """Transform centering the bbox at the origin with longest edge scaled to 1."""
    points = np.asarray(points, dtype=np.float64)
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    center = (lo + hi) / 2.0
    extent = float((hi - lo).max())
    scale = 1.0 / extent if extent > 0 else 1.0
    return NormalizationTransform(center=center, scale=scale)


def normalize_cloud(cloud: ColoredPointCloud) -> tuple[ColoredPointCloud, NormalizationTransform]:
    tf = normalize_points(cloud.positions)
    return replace(cloud, positions=tf.apply(cloud.positions)), tf


# ---------------------------------------------------------------------------
# reading

_PLY_TYPES = {
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
}


def read_point_cloud(path, format: str | None = None) -> ColoredPointCloud:
    """Read a colored point cloud from ply, obj, or xyz-rgb text.

    8-bit color channels are divided by 255; float colors are taken as-is.
    """
    path = Path(path)
    if format is None:
        ext = path.suffix.lower().lstrip(".")
        format = {"ply": "ply", "obj": "obj", "xyz": "xyz-rgb", "xyzrgb": "xyz-rgb", "txt": "xyz-rgb"}.get(ext, ext)
    if format == "ply":
        return _read_ply(path)
    if format == "obj":
        return _read_obj_points(path)
    if format == "xyz-rgb":
        return _read_xyzrgb(path)
    raise FormatError(f"unknown point cloud format: {format!r}")


def _read_ply(path: Path) -> ColoredPointCloud:
    raw = path.read_bytes()
    if not raw:
        raise InputError(f"{path}: empty file")
    if not raw.startswith(b"ply"):
        raise FormatError(f"{path}: not a ply file (byte offset 0)")
    end = raw.find(b"end_header")
    if end < 0:
        raise FormatError(f"{path}: missing end_header (byte offset {len(raw)})")
    header = raw[:end].decode("ascii", errors="replace")
    body_off = raw.index(b"\n", end) + 1

    fmt = None
    n_vertex = 0
    props: list[tuple[str, str]] = []  # (name, type), vertex element only
    in_vertex = False
    for line in header.splitlines():
        toks = line.split()
        if not toks:
            continue
        if toks[0] == "format":
            fmt = toks[1]
        elif toks[0] == "element":
            in_vertex = toks[1] == "vertex"
            if in_vertex:
                n_vertex = int(toks[2])
        elif toks[0] == "property" and in_vertex:
            if toks[1] == "list":
                raise FormatError(f"{path}: list property in vertex element unsupported")
            props.append((toks[2], toks[1]))

    names = [p[0] for p in props]
    if n_vertex < 1:
        raise InputError(f"{path}: no vertices")
    for req in ("x", "y", "z"):
        if req not in names:
            raise FormatError(f"{path}: vertex property {req!r} missing")
    if "red" not in names or "green" not in names or "blue" not in names:
        raise InputError(f"{path}: color attributes missing")
    has_normals = all(k in names for k in ("nx", "ny", "nz"))

    if fmt == "ascii":
        text = raw[body_off:].decode("ascii", errors="replace")
        rows = []
        offset = body_off
        for line in text.splitlines():
            stripped = line.strip()
            if stripped:
                toks = stripped.split()
                if len(toks) < len(props):
                    raise FormatError(f"{path}: short vertex row (byte offset {offset})")
                try:
                    rows.append([float(t) for t in toks[: len(props)]])
                except ValueError:
                    raise FormatError(f"{path}: unparseable vertex row (byte offset {offset})")
            offset += len(line) + 1
            if len(rows) == n_vertex:
                break
        if len(rows) < n_vertex:
            raise FormatError(f"{path}: expected {n_vertex} vertices, got {len(rows)} (byte offset {len(raw)})")
        table = np.asarray(rows, dtype=np.float64)
        col = {name: table[:, i] for i, (name, _) in enumerate(props)}
        is8bit = {name: t in ("uchar", "uint8", "char", "int8") for name, t in props}
    elif fmt == "binary_little_endian":
        fmt_str = "<" + "".join(_PLY_TYPES[t][0] for _, t in props)
        row_size = struct.calcsize(fmt_str)
        need = n_vertex * row_size
        if len(raw) - body_off < need:
            raise FormatError(f"{path}: truncated binary body (byte offset {len(raw)})")
        arr = np.frombuffer(raw, dtype=np.dtype([(n, "<" + _PLY_TYPES[t][0]) for n, t in props]),
                            count=n_vertex, offset=body_off)
        col = {name: arr[name].astype(np.float64) for name, _ in props}
        is8bit = {name: t in ("uchar", "uint8", "char", "int8") for name, t in props}
    else:
        raise FormatError(f"{path}: unsupported ply format {fmt!r}")

    positions = np.stack([col["x"], col["y"], col["z"]], axis=1)
    colors = np.stack([col["red"], col["green"], col["blue"]], axis=1)
    if is8bit["red"] or colors.max() > 1.0:
        colors = colors / 255.0
    colors = np.clip(colors, 0.0, 1.0)
    normals = None
    if has_normals:
        normals = np.stack([col["nx"], col["ny"], col["nz"]], axis=1)
        lens = np.linalg.norm(normals, axis=1)
        normals = normals / np.maximum(lens, 1e-300)[:, None]
    return ColoredPointCloud(positions, colors, normals)


def _read_xyzrgb(path: Path) -> ColoredPointCloud:
    raw = path.read_text()
    if not raw.strip():
        raise InputError(f"{path}: empty file")
    rows = []
    offset = 0
    for line in raw.splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            toks = stripped.split()
            if len(toks) < 6:
                raise FormatError(f"{path}: need x y z r g b per line (byte offset {offset})")
            try:
                rows.append([float(t) for t in toks[:6]])
            except ValueError:
                raise FormatError(f"{path}: unparseable row (byte offset {offset})")
        offset += len(line) + 1
    table = np.asarray(rows, dtype=np.float64)
    colors = table[:, 3:6]
    if colors.max() > 1.0:
        colors = colors / 255.0
    return ColoredPointCloud(table[:, :3], np.clip(colors, 0.0, 1.0))


def _read_obj_points(path: Path) -> ColoredPointCloud:
    """Point cloud as OBJ 'v x y z [r g b]' records (a common scanner export)."""
    raw = path.read_text()
    if not raw.strip():
        raise InputError(f"{path}: empty file")
    pos, cols = [], []
    offset = 0
    for line in raw.splitlines():
        toks = line.split()
        if toks and toks[0] == "v":
            if len(toks) < 7:
                raise InputError(f"{path}: vertex without color (byte offset {offset})")
            try:
                vals = [float(t) for t in toks[1:7]]
            except ValueError:
                raise FormatError(f"{path}: unparseable vertex (byte offset {offset})")
            pos.append(vals[:3])
            cols.append(vals[3:6])
        offset += len(line) + 1
    if not pos:
        raise InputError(f"{path}: no vertices")
    colors = np.asarray(cols, dtype=np.float64)
    if colors.max() > 1.0:
        colors = colors / 255.0
    return ColoredPointCloud(np.asarray(pos), np.clip(colors, 0.0, 1.0))


def read_mesh(path, format: str = "obj") -> TriangleMesh:
    """Read a triangle mesh from OBJ; n-gon faces are fan-triangulated."""
    if format != "obj":
        raise FormatError(f"unsupported mesh format: {format!r}")
    path = Path(path)
    raw = path.read_text()
    verts: list[list[float]] = []
    uvs: list[list[float]] = []
    norms: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    face_uv: list[tuple[int, int, int] | None] = []
    material = None
    offset = 0
    for line in raw.splitlines():
        toks = line.split()
        if not toks or toks[0].startswith("#"):
            offset += len(line) + 1
            continue
        tag = toks[0]
        try:
            if tag == "v":
                verts.append([float(t) for t in toks[1:4]])
            elif tag == "vt":
                uvs.append([float(t) for t in toks[1:3]])
            elif tag == "vn":
                norms.append([float(t) for t in toks[1:4]])
            elif tag == "f":
                corners = [_parse_obj_corner(t) for t in toks[1:]]
                if len(corners) < 3:
                    raise FormatError(f"{path}: face with <3 corners (byte offset {offset})")
                vi = [_resolve_index(c[0], len(verts), path, offset) for c in corners]
                ti = [None if c[1] is None else _resolve_index(c[1], len(uvs), path, offset) for c in corners]
                for k in range(1, len(corners) - 1):
                    faces.append((vi[0], vi[k], vi[k + 1]))
                    if ti[0] is not None and ti[k] is not None and ti[k + 1] is not None:
                        face_uv.append((ti[0], ti[k], ti[k + 1]))
                    else:
                        face_uv.append(None)
            elif tag == "usemtl":
                material = toks[1] if len(toks) > 1 else None
        except (ValueError, IndexError):
            raise FormatError(f"{path}: unparseable record (byte offset {offset})")
        offset += len(line) + 1

    vertices = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    face_arr = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    uv_corners = None
    if face_uv and all(t is not None for t in face_uv):
        uv_table = np.asarray(uvs, dtype=np.float64).reshape(-1, 2)
        uv_corners = uv_table[np.asarray(face_uv, dtype=np.int64)]
    vertex_normals = None
    if norms and len(norms) == len(verts):
        vn = np.asarray(norms, dtype=np.float64)
        lens = np.linalg.norm(vn, axis=1)
        vertex_normals = vn / np.maximum(lens, 1e-300)[:, None]
    return TriangleMesh(vertices, face_arr, vertex_normals, uv_corners, material)


def _parse_obj_corner(tok: str) -> tuple[int, int | None]:
    parts = tok.split("/")
    v = int(parts[0])
    t = int(parts[1]) if len(parts) > 1 and parts[1] else None
    return v, t


def _resolve_index(idx: int, count: int, path, offset: int) -> int:
    # OBJ indices are 1-based; negative counts back from the end.
    if idx == 0:
        raise FormatError(f"{path}: OBJ index 0 is invalid, indices are 1-based (byte offset {offset})")
    out = idx - 1 if idx > 0 else count + idx
    if not (0 <= out < count):
        raise FormatError(f"{path}: index {idx} out of range (byte offset {offset})")
    return out


# ---------------------------------------------------------------------------
# writing

def quantize_colors(colors: np.ndarray) -> np.ndarray:
    """Linear [0,1] -> 8-bit with round-half-up."""
    return np.floor(np.clip(colors, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_point_cloud(cloud: ColoredPointCloud, path, format: str = "ply") -> Path:
    """Write ascii ply (positions at full float precision, colors 8-bit) or xyz-rgb."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = quantize_colors(cloud.colors)
    if format == "ply":
        with open(path, "w") as f:
            f.write("ply\nformat ascii 1.0\n")
            f.write(f"element vertex {len(cloud)}\n")
            f.write("property double x\nproperty double y\nproperty double z\n")
            if cloud.normals is not None:
                f.write("property double nx\nproperty double ny\nproperty double nz\n")
            f.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
            f.write("end_header\n")
            for i in range(len(cloud)):
                p = cloud.positions[i]
                row = f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}"
                if cloud.normals is not None:
                    nrm = cloud.normals[i]
                    row += f" {float(nrm[0])!r} {float(nrm[1])!r} {float(nrm[2])!r}"
                c = cols[i]
                f.write(f"{row} {c[0]} {c[1]} {c[2]}\n")
    elif format == "xyz-rgb":
        with open(path, "w") as f:
            for i in range(len(cloud)):
                p = cloud.positions[i]
                c = cols[i]
                f.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r} {c[0]} {c[1]} {c[2]}\n")
    else:
        raise FormatError(f"unsupported point cloud output format: {format!r}")
    return path


def write_textured_mesh(mesh: TriangleMesh, atlas: TextureAtlas, out_dir, name: str = "mesh") -> dict[str, Path]:
    """Emit OBJ + MTL + PNG atlas. Vertices/UVs are written with 6 decimals."""
    if mesh.uv_corners is None:
        raise InputError("mesh has no per-corner UVs; run unwrap first")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IOError(f"cannot create output directory {out_dir}: {e}")
    obj_path = out_dir / f"{name}.obj"
    mtl_path = out_dir / f"{name}.mtl"
    png_path = out_dir / f"{name}.png"

    lines = [f"mtllib {mtl_path.name}"]
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}")
    # one vt per corner keeps the writer simple and the correspondence exact
    for fuv in mesh.uv_corners:
        for uv in fuv:
            lines.append(f"vt {uv[0]:.6f} {uv[1]:.6f}")
    if mesh.vertex_normals is not None:
        for n in mesh.vertex_normals:
            lines.append(f"vn {n[0]:.6f} {n[1]:.6f} {n[2]:.6f}")
    lines.append("usemtl atlas")
    has_vn = mesh.vertex_normals is not None
    for fi, f in enumerate(mesh.faces):
        t = 3 * fi
        if has_vn:
            lines.append(
                f"f {f[0]+1}/{t+1}/{f[0]+1} {f[1]+1}/{t+2}/{f[1]+1} {f[2]+1}/{t+3}/{f[2]+1}")
        else:
            lines.append(f"f {f[0]+1}/{t+1} {f[1]+1}/{t+2} {f[2]+1}/{t+3}")
    try:
        obj_path.write_text("\n".join(lines) + "\n")
        mtl_path.write_text(
            "newmtl atlas\nKa 1.0 1.0 1.0\nKd 1.0 1.0 1.0\nillum 1\n" f"map_Kd {png_path.name}\n")
        Image.fromarray(quantize_colors(atlas.data), mode="RGB").save(png_path)
    except OSError as e:
        raise IOError(f"cannot write textured mesh to {out_dir}: {e}")
    return {"obj": obj_path, "mtl": mtl_path, "png": png_path}


def read_atlas(path) -> TextureAtlas:
    img = Image.open(path).convert("RGB")
    return TextureAtlas(np.asarray(img, dtype=np.float64) / 255.0)


def read_textured_mesh(obj_path) -> tuple[TriangleMesh, TextureAtlas]:
    """Read an OBJ plus the atlas referenced by its MTL's map_Kd."""
    obj_path = Path(obj_path)
    mesh = read_mesh(obj_path)
    if mesh.uv_corners is None:
        raise InputError(f"{obj_path}: mesh carries no UVs")
    mtl_name = None
    for line in obj_path.read_text().splitlines():
        toks = line.split()
        if toks and toks[0] == "mtllib" and len(toks) > 1:
            mtl_name = toks[1]
            break
    if mtl_name is None:
        raise InputError(f"{obj_path}: no mtllib reference")
    tex_name = None
    for line in (obj_path.parent / mtl_name).read_text().splitlines():
        toks = line.split()
        if toks and toks[0] == "map_Kd" and len(toks) > 1:
            tex_name = toks[1]
            break
    if tex_name is None:
        raise InputError(f"{obj_path}: material has no map_Kd texture")
    return mesh, read_atlas(obj_path.parent / tex_name)


# ---------------------------------------------------------------------------
# sampling and degradation

def sample_surface(mesh: TriangleMesh, n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Area-weighted uniform surface sampling.

    Returns (points, normals, face_ids, barycentric) with face normals as normals.
    """
    if n < 1:
        raise InputError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0:
        raise InputError("mesh has zero surface area")
    probs = areas / total
    face_ids = rng.choice(len(mesh.faces), size=n, p=probs)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    bary = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    tri = mesh.vertices[mesh.faces[face_ids]]  # (n, 3, 3)
    points = np.einsum("nk,nkd->nd", bary, tri)
    normals = mesh.face_normals()[face_ids]
    return points, normals, face_ids, bary


def sample_points(mesh: TriangleMesh, atlas: TextureAtlas, n: int, seed: int) -> ColoredPointCloud:
    """Sample n colored surface points; colors read from the atlas at the sampled UV."""
    if atlas is None:
        raise InputError("mesh has no atlas; cannot sample colors")
    if mesh.uv_corners is None:
        raise InputError("mesh has no UVs; cannot sample colors")
    points, normals, face_ids, bary = sample_surface(mesh, n, seed)
    uv = np.einsum("nk,nkd->nd", bary, mesh.uv_corners[face_ids])
    colors = sample_atlas_bilinear(atlas.data, uv)
    return ColoredPointCloud(points, np.clip(colors, 0.0, 1.0), normals)


def sample_atlas_bilinear(data: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Bilinear atlas lookup; texel centers at ((c+0.5)/W, 1-(r+0.5)/H)."""
    h, w = data.shape[:2]
    x = np.asarray(uv)[:, 0] * w - 0.5
    y = (1.0 - np.asarray(uv)[:, 1]) * h - 0.5
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    out = (data[y0c, x0c] * ((1 - fx) * (1 - fy))[:, None]
           + data[y0c, x1c] * (fx * (1 - fy))[:, None]
           + data[y1c, x0c] * ((1 - fx) * fy)[:, None]
           + data[y1c, x1c] * (fx * fy)[:, None])
    return out


def add_gaussian_noise(cloud: ColoredPointCloud, sigma: float, seed: int) -> ColoredPointCloud:
    """Perturb positions i.i.d. N(0, sigma^2) per axis; colors and normals unchanged."""
    if sigma < 0:
        raise InputError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=cloud.positions.shape) if sigma > 0 else 0.0
    return replace(cloud, positions=cloud.positions + noise)


def subsample(cloud: ColoredPointCloud, n: int, seed: int) -> ColoredPointCloud:
    """Uniform selection of n points without replacement."""
    N = len(cloud)
    if not (1 <= n <= N):
        raise InputError(f"subsample count must be in [1, {N}], got {n}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(N, size=n, replace=False))
    return ColoredPointCloud(
        cloud.positions[idx],
        cloud.colors[idx],
        None if cloud.normals is None else cloud.normals[idx],
    )
