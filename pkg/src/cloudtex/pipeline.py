"""End-to-end reconstruction pipeline and its stage-level pieces.

Every stage is a pure function of its inputs plus the global seed, so a run is
reproducible from the manifest alone; per-view work may be parallelized across
threads without changing any output bit.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import geomex, inpaint, pcio, projection, unproject, uvatlas, visibility
from .camera import CameraRig, make_rig
from .pcio import ColoredPointCloud, TextureAtlas, TriangleMesh
from .projection import Raster


@dataclass
class PipelineConfig:
    seed: int = 0
    views: str = "fib8"
    resolution: int = 256
    radius: float = 2.0
    atlas_res: int = 1024
    gutter_px: int = 4
    inpainter: str = "nearest"  # nearest | linear | remote:URL
    inpaint_strict: bool | None = None  # None = on for built-ins, off for remote
    inpaint_fallback: str | None = None
    inpaint_timeout: float = 30.0
    unproject: str = "nbf"  # naive | nbf | opt-naive | opt-nbf | opt-scratch
    dilate_px: int | None = None  # None = 3 at atlas 1024, scaled with resolution
    hpr_radius_factor: float = 100.0
    depth_epsilon: float = 5e-3
    splat_px: int | None = None  # None = 1 px unless the input is sparse
    mask_splat_px: int | None = None  # None = pick from point density
    close_iter: int = 2
    erode_iter: int = 2
    mask_pad_px: int = 2  # RGB-only mask dilation so silhouette texels never sample background
    geometry: str = "mesh"  # mesh | depth-fusion
    mesh_path: str | None = None
    tsdf_resolution: int = 128
    tsdf_trunc: float | None = None
    target_faces: int = 100_000
    taubin_lambda: float = 0.5
    taubin_mu: float = -0.53
    taubin_iters: int = 10
    opt_iters: int = 0
    jobs: int = 1
    debug_dumps: bool = False


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class _Timer:
    def __init__(self, manifest: dict, stage: str):
        self.manifest = manifest
        self.stage = stage

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        dt = time.perf_counter() - self.t0
        self.manifest.setdefault("stages", {})[self.stage] = round(dt, 4)
        if exc is not None and not isinstance(exc, StageError):
            self.manifest["failed_stage"] = self.stage
            raise StageError(self.stage, exc) from exc
        return False


def _map_views(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(*args) for args in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(lambda args: fn(*args), items))


def _pad_mask(mask: Raster, pad_px: int) -> Raster:
    """Dilated copy of a foreground mask; keeps unprojection sampling away from
    the hard background boundary (the geometry path uses the unpadded mask)."""
    if pad_px <= 0:
        return mask
    from scipy import ndimage

    grown = ndimage.binary_dilation(mask.data, structure=np.ones((3, 3), dtype=bool),
                                    iterations=pad_px)
    return Raster(mask.width, mask.height, "mask", grown, grown.copy())


def effective_dilate_px(cfg: PipelineConfig) -> int:
    if cfg.dilate_px is not None:
        return cfg.dilate_px
    return max(1, round(3 * cfg.atlas_res / 1024))


def run_inpaint_views(cfg: PipelineConfig, sparse_list, mask_list) -> list[Raster]:
    def one(sparse, mask):
        return inpaint.run_inpainter(
            cfg.inpainter, sparse, mask, strict=cfg.inpaint_strict,
            timeout=cfg.inpaint_timeout, fallback=cfg.inpaint_fallback)
    return _map_views(one, list(zip(sparse_list, mask_list)), cfg.jobs)


def extract_geometry_depth_fusion(cfg: PipelineConfig, cloud: ColoredPointCloud,
                                  rig: CameraRig, manifest: dict,
                                  out_dir=None) -> TriangleMesh:
    """Depth-inpainting geometry: sparse depth -> dense by nearest -> TSDF ->
    marching cubes -> simplification -> Taubin smoothing."""
    with _Timer(manifest, "geometry.project_depth"):
        vis_all = _map_views(
            lambda v: visibility.hidden_point_removal(cloud.positions, v, cfg.hpr_radius_factor),
            [(v,) for v in rig.views], cfg.jobs)
        spx = cfg.splat_px
        if spx is None:
            gaps = [projection.estimate_gap_px(cloud.positions[vis_all[k]], rig.views[k])
                    for k in range(len(rig.views))]
            spx = projection.splat_px_for_gap(float(np.median(gaps)))

        def one(k):
            view = rig.views[k]
            pts = cloud.positions[vis_all[k]]
            _, dep = projection.splat_points(pts, cloud.colors[vis_all[k]], view, spx)
            fg = projection.foreground_mask(pts, view, cfg.mask_splat_px,
                                            cfg.close_iter, cfg.erode_iter)
            return dep, fg
        pairs = _map_views(one, [(k,) for k in range(len(rig.views))], cfg.jobs)
        deps = [p[0] for p in pairs]
        fgs = [p[1] for p in pairs]
    with _Timer(manifest, "geometry.inpaint_depth"):
        # depth is always filled by nearest interpolation
        dense = _map_views(lambda d, m: inpaint.inpaint_nearest(d, m),
                           list(zip(deps, fgs)), cfg.jobs)
    with _Timer(manifest, "geometry.tsdf_fuse"):
        vol = geomex.tsdf_fuse(dense, fgs, rig.views, cfg.tsdf_resolution, cfg.tsdf_trunc)
    if cfg.debug_dumps and out_dir is not None:
        dump_dir = Path(out_dir) / "debug"
        dump_dir.mkdir(parents=True, exist_ok=True)
        vol.dump(dump_dir / "tsdf")
    with _Timer(manifest, "geometry.marching_cubes"):
        mesh = geomex.marching_cubes(vol)
    manifest["geometry_faces_raw"] = int(len(mesh.faces))
    with _Timer(manifest, "geometry.simplify"):
        mesh = geomex.simplify_qem(mesh, cfg.target_faces)
    with _Timer(manifest, "geometry.taubin"):
        mesh = geomex.taubin_smooth(mesh, cfg.taubin_lambda, cfg.taubin_mu, cfg.taubin_iters)
    manifest["geometry_faces"] = int(len(mesh.faces))
    return mesh


def reconstruct(cfg: PipelineConfig, cloud: ColoredPointCloud,
                mesh: TriangleMesh | None = None,
                out_dir: str | Path | None = None) -> dict:
    """Full pipeline. Returns {mesh, atlas, texels, manifest, ...}; when
    out_dir is given, also writes OBJ/MTL/PNG plus manifest.json and rig.json."""
    manifest: dict = {"config": asdict(cfg), "counts": {}}
    if cfg.geometry == "mesh" and mesh is None:
        raise ValueError("geometry='mesh' requires an untextured input mesh")
    try:
        return _reconstruct_inner(cfg, cloud, mesh, out_dir, manifest)
    except StageError:
        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
        raise


def _reconstruct_inner(cfg, cloud, mesh, out_dir, manifest) -> dict:
    with _Timer(manifest, "normalize"):
        cloud_n, tf = pcio.normalize_cloud(cloud)
        manifest["normalization"] = {"center": tf.center.tolist(), "scale": tf.scale}
    rig = make_rig(cfg.views, cfg.resolution, cfg.radius)

    if cfg.geometry == "depth-fusion":
        geo = extract_geometry_depth_fusion(cfg, cloud_n, rig, manifest, out_dir)
    else:
        geo = mesh.copy()
        geo.vertices = tf.apply(geo.vertices)

    with _Timer(manifest, "hpr"):
        vis_idx = _map_views(
            lambda v: visibility.hidden_point_removal(cloud_n.positions, v, cfg.hpr_radius_factor),
            [(v,) for v in rig.views], cfg.jobs)
    with _Timer(manifest, "mesh_depth"):
        mesh_depths = _map_views(lambda v: projection.render_mesh_depth(geo, v),
                                 [(v,) for v in rig.views], cfg.jobs)
    with _Timer(manifest, "depth_cull"):
        def cull(k):
            pts = cloud_n.positions[vis_idx[k]]
            keep = visibility.depth_cull(pts, rig.views[k], mesh_depths[k], cfg.depth_epsilon)
            return vis_idx[k][keep]
        vis_idx = _map_views(cull, [(k,) for k in range(len(rig.views))], cfg.jobs)
        manifest["counts"]["visible_points"] = [int(len(i)) for i in vis_idx]
    with _Timer(manifest, "splat"):
        # one splat size for the whole run, decided by the median projected gap
        spx = cfg.splat_px
        if spx is None:
            gaps = [projection.estimate_gap_px(cloud_n.positions[vis_idx[k]], rig.views[k])
                    for k in range(len(rig.views))]
            spx = projection.splat_px_for_gap(float(np.median(gaps)))
        manifest["counts"]["splat_px"] = spx

        def splat(k):
            idx = vis_idx[k]
            pts = cloud_n.positions[idx]
            rgb, _ = projection.splat_points(pts, cloud_n.colors[idx], rig.views[k], spx)
            fg = projection.foreground_mask(pts, rig.views[k],
                                            cfg.mask_splat_px, cfg.close_iter, cfg.erode_iter)
            return rgb, _pad_mask(fg, cfg.mask_pad_px)
        pairs = _map_views(splat, [(k,) for k in range(len(rig.views))], cfg.jobs)
        sparse_imgs = [p[0] for p in pairs]
        fg_masks = [p[1] for p in pairs]
    with _Timer(manifest, "inpaint"):
        images = run_inpaint_views(cfg, sparse_imgs, fg_masks)
        manifest["counts"]["inpainted_views"] = len(images)
    with _Timer(manifest, "unwrap"):
        geo_uv, charts = uvatlas.unwrap(geo, cfg.atlas_res, cfg.gutter_px)
        manifest["counts"]["charts"] = len(charts)
    with _Timer(manifest, "texels"):
        texels = uvatlas.rasterize_texels(geo_uv, charts, cfg.atlas_res)
        manifest["counts"]["valid_texels"] = int(texels.valid.sum())
    with _Timer(manifest, "view_layers"):
        unproject.compute_view_layers(texels, rig.views, mesh_depths, cfg.depth_epsilon)
        never = texels.valid & ~texels.visible.any(axis=0)
        manifest["counts"]["never_visible_texels"] = int(never.sum())
    with _Timer(manifest, "unproject"):
        dilate_px = effective_dilate_px(cfg)
        manifest["counts"]["dilate_px"] = dilate_px
        atlas = unproject.run_strategy(cfg.unproject, texels, images, dilate_px,
                                       seed=cfg.seed, iters=cfg.opt_iters,
                                       mesh=geo_uv, views=rig.views)
    if cfg.debug_dumps and out_dir is not None:
        from . import debugdump
        if cfg.unproject in ("nbf", "opt-nbf"):
            choice = unproject.nbf_choice(texels, dilate_px)
        else:
            choice = unproject.naive_choice(texels)
        debugdump.dump_texel_debug(texels, choice, Path(out_dir) / "debug")

    out_mesh = geo_uv.copy()
    out_mesh.vertices = tf.invert(out_mesh.vertices)
    result = {"mesh": out_mesh, "mesh_normalized": geo_uv, "atlas": atlas,
              "texels": texels, "images": images, "rig": rig, "manifest": manifest,
              "transform": tf}
    if out_dir is not None:
        out_dir = Path(out_dir)
        with _Timer(manifest, "write"):
            paths = pcio.write_textured_mesh(out_mesh, atlas, out_dir)
            rig.save(out_dir / "rig.json")
            manifest["outputs"] = {k: str(v) for k, v in paths.items()}
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
        result["paths"] = paths
    return result


# ---------------------------------------------------------------------------
# standalone stages operating on files (mix-and-match with external tools)

def stage_project(cfg: PipelineConfig, cloud: ColoredPointCloud,
                  mesh: TriangleMesh | None, out_dir: Path) -> dict:
    """Write per-view sparse images, known masks, foreground masks, depth maps."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cloud_n, tf = pcio.normalize_cloud(cloud)
    rig = make_rig(cfg.views, cfg.resolution, cfg.radius)
    geo = None
    if mesh is not None:
        geo = mesh.copy()
        geo.vertices = tf.apply(geo.vertices)
    meta = {"transform": {"center": tf.center.tolist(), "scale": tf.scale},
            "config": asdict(cfg), "views": len(rig.views)}
    vis_all = []
    for k, view in enumerate(rig.views):
        vis = visibility.hidden_point_removal(cloud_n.positions, view, cfg.hpr_radius_factor)
        if geo is not None:
            md = projection.render_mesh_depth(geo, view)
            keep = visibility.depth_cull(cloud_n.positions[vis], view, md, cfg.depth_epsilon)
            vis = vis[keep]
        vis_all.append(vis)
    spx = cfg.splat_px
    if spx is None:
        gaps = [projection.estimate_gap_px(cloud_n.positions[vis_all[k]], rig.views[k])
                for k in range(len(rig.views))]
        spx = projection.splat_px_for_gap(float(np.median(gaps)))
    meta["splat_px"] = spx
    for k, view in enumerate(rig.views):
        vis = vis_all[k]
        pts, cols = cloud_n.positions[vis], cloud_n.colors[vis]
        rgb, dep = projection.splat_points(pts, cols, view, spx)
        fg = projection.foreground_mask(pts, view, cfg.mask_splat_px, cfg.close_iter, cfg.erode_iter)
        fg = _pad_mask(fg, cfg.mask_pad_px)
        projection.write_image_png(rgb, out_dir / f"sparse_{k:02d}.png")
        projection.write_mask_png(rgb.known, out_dir / f"known_{k:02d}.png")
        projection.write_mask_png(fg.data, out_dir / f"mask_{k:02d}.png")
        projection.write_depth(dep, out_dir / f"depth_{k:02d}.bin")
    rig.save(out_dir / "rig.json")
    (out_dir / "stage_meta.json").write_text(json.dumps(meta, indent=2))
    return meta


def stage_inpaint(cfg: PipelineConfig, in_dir: Path, out_dir: Path | None = None) -> list[Path]:
    """Inpaint every sparse_k.png in a projection directory to dense_k.png."""
    in_dir = Path(in_dir)
    out_dir = Path(out_dir) if out_dir is not None else in_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    outs = []
    for spath in sorted(in_dir.glob("sparse_*.png")):
        k = spath.stem.split("_")[1]
        known = projection.read_mask_png(in_dir / f"known_{k}.png")
        fg = projection.read_mask_png(in_dir / f"mask_{k}.png")
        sparse = projection.read_image_png(spath, known=known)
        dense = inpaint.run_inpainter(cfg.inpainter, sparse, fg, strict=cfg.inpaint_strict,
                                      timeout=cfg.inpaint_timeout, fallback=cfg.inpaint_fallback)
        outs.append(projection.write_image_png(dense, out_dir / f"dense_{k}.png"))
    if not outs:
        raise FileNotFoundError(f"no sparse_*.png found in {in_dir}")
    return outs


def stage_unproject(cfg: PipelineConfig, in_dir: Path, mesh: TriangleMesh,
                    out_dir: Path) -> dict:
    """Unproject dense_k.png images in a stage directory onto a mesh."""
    in_dir = Path(in_dir)
    rig = CameraRig.load(in_dir / "rig.json")
    meta = json.loads((in_dir / "stage_meta.json").read_text())
    tf = pcio.NormalizationTransform(np.asarray(meta["transform"]["center"]),
                                     meta["transform"]["scale"])
    images = [projection.read_image_png(p) for p in sorted(in_dir.glob("dense_*.png"))]
    if len(images) != len(rig.views):
        raise ValueError(f"found {len(images)} dense images for {len(rig.views)} views")
    geo = mesh.copy()
    geo.vertices = tf.apply(geo.vertices)
    mesh_depths = [projection.render_mesh_depth(geo, v) for v in rig.views]
    geo_uv, charts = uvatlas.unwrap(geo, cfg.atlas_res, cfg.gutter_px)
    texels = uvatlas.rasterize_texels(geo_uv, charts, cfg.atlas_res)
    unproject.compute_view_layers(texels, rig.views, mesh_depths, cfg.depth_epsilon)
    atlas = unproject.run_strategy(cfg.unproject, texels, images, effective_dilate_px(cfg),
                                   seed=cfg.seed, iters=cfg.opt_iters,
                                   mesh=geo_uv, views=rig.views)
    out_mesh = geo_uv.copy()
    out_mesh.vertices = tf.invert(out_mesh.vertices)
    paths = pcio.write_textured_mesh(out_mesh, atlas, out_dir)
    return {"paths": paths, "atlas": atlas, "mesh": out_mesh}
