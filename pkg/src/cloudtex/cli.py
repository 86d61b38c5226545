"""Command-line interface: reconstruct, project, inpaint, unproject, eval, ablate.

Configuration precedence: CLI flags > config file (key=value lines) > defaults.
Exit codes: 0 ok, 2 argument error, 3 input-format error, 4 remote-inpainter
error, 5 internal stage failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics, pcio, pipeline, synthbench, unproject, uvatlas
from .inpaint import RemoteInpaintError
from .pcio import FormatError, InputError
from .pipeline import PipelineConfig, StageError

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_FORMAT = 3
EXIT_REMOTE = 4
EXIT_STAGE = 5

_CFG_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _parse_config_file(path: str) -> dict:
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CFG_FIELDS:
            raise InputError(f"{path}: unknown config key {key!r}")
        values[key] = _coerce(key, val)
    return values


def _coerce(key: str, val: str):
    ftype = _CFG_FIELDS[key].type
    if "bool" in str(ftype):
        return val.lower() in ("1", "true", "yes", "on")
    if "int" in str(ftype):
        return int(val)
    if "float" in str(ftype):
        return float(val)
    return val


def build_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        for k, v in _parse_config_file(args.config).items():
            setattr(cfg, k, v)
    for key in _CFG_FIELDS:
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    return cfg


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--views", choices=["cube6", "fib8", "ico20"], default=None)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--atlas-res", dest="atlas_res", type=int, default=None)
    p.add_argument("--gutter-px", dest="gutter_px", type=int, default=None)
    p.add_argument("--inpainter", default=None, help="nearest | linear | remote:URL")
    p.add_argument("--inpaint-strict", dest="inpaint_strict", action="store_true", default=None)
    p.add_argument("--no-inpaint-strict", dest="inpaint_strict", action="store_false", default=None)
    p.add_argument("--inpaint-fallback", dest="inpaint_fallback", default=None)
    p.add_argument("--unproject", choices=["naive", "nbf", "opt-naive", "opt-nbf", "opt-scratch"],
                   default=None)
    p.add_argument("--dilate-px", dest="dilate_px", type=int, default=None)
    p.add_argument("--hpr-radius-factor", dest="hpr_radius_factor", type=float, default=None)
    p.add_argument("--depth-epsilon", dest="depth_epsilon", type=float, default=None)
    p.add_argument("--splat-px", dest="splat_px", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--debug-dumps", dest="debug_dumps", action="store_true", default=None)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="cloudtex",
                                     description="textured mesh reconstruction from colored point clouds")
    sub = parser.add_subparsers(dest="command", required=True)

    p_rec = sub.add_parser("reconstruct", help="cloud -> textured mesh")
    p_rec.add_argument("cloud", help="input point cloud (ply / obj / xyz-rgb)")
    p_rec.add_argument("--out", required=True)
    p_rec.add_argument("--mesh", dest="mesh_path", default=None, help="untextured geometry OBJ")
    p_rec.add_argument("--geometry", choices=["mesh", "depth-fusion"], default=None)
    _add_common(p_rec)

    p_proj = sub.add_parser("project", help="cloud -> per-view sparse rasters")
    p_proj.add_argument("cloud")
    p_proj.add_argument("--out", required=True)
    p_proj.add_argument("--mesh", dest="mesh_path", default=None)
    _add_common(p_proj)

    p_inp = sub.add_parser("inpaint", help="sparse rasters -> dense images")
    p_inp.add_argument("stage_dir")
    p_inp.add_argument("--out", default=None)
    _add_common(p_inp)

    p_unp = sub.add_parser("unproject", help="dense images + mesh -> textured mesh")
    p_unp.add_argument("stage_dir")
    p_unp.add_argument("--mesh", dest="mesh_path", required=True)
    p_unp.add_argument("--out", required=True)
    _add_common(p_unp)

    p_eval = sub.add_parser("eval", help="compare two textured meshes")
    p_eval.add_argument("pred", help="reconstructed OBJ (with MTL + atlas)")
    p_eval.add_argument("gt", help="ground-truth OBJ (with MTL + atlas)")
    p_eval.add_argument("--out", default=None, help="write the JSON report here")
    p_eval.add_argument("--render-dir", default=None, help="dump per-view renders as PNG")
    p_eval.add_argument("--resolution", type=int, default=None)

    p_abl = sub.add_parser("ablate", help="degradation / strategy sweeps")
    p_abl.add_argument("--gt-mesh", default=None, help="ground-truth textured OBJ")
    p_abl.add_argument("--benchmark", choices=["stacked-slabs"], default=None)
    p_abl.add_argument("--out", required=True, help="output CSV")
    p_abl.add_argument("--dilate-img-px", dest="dilate_img_px", type=int, default=4)
    p_abl.add_argument("--noises", default="0,0.005")
    p_abl.add_argument("--points", default="30000,25000,20000,10000")
    p_abl.add_argument("--strategies", default="naive,opt-naive,nbf,opt-nbf,opt-scratch")
    _add_common(p_abl)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (FormatError, InputError, FileNotFoundError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except RemoteInpaintError as e:
        print(f"remote inpainter error: {e}", file=sys.stderr)
        return EXIT_REMOTE
    except StageError as e:
        if isinstance(e.cause, RemoteInpaintError):
            print(f"remote inpainter error: {e}", file=sys.stderr)
            return EXIT_REMOTE
        if isinstance(e.cause, (FormatError, InputError)):
            print(f"input error: {e}", file=sys.stderr)
            return EXIT_FORMAT
        print(f"stage failure: {e}", file=sys.stderr)
        return EXIT_STAGE
    except ValueError as e:
        print(f"argument error: {e}", file=sys.stderr)
        return EXIT_ARGS


def _dispatch(args) -> int:
    if args.command == "reconstruct":
        cfg = build_config(args)
        if args.geometry is not None:
            cfg.geometry = args.geometry
        if args.mesh_path is not None:
            cfg.mesh_path = args.mesh_path
            cfg.geometry = "mesh" if args.geometry is None else cfg.geometry
        if cfg.geometry == "mesh" and cfg.mesh_path is None:
            raise ValueError("either --mesh PATH or --geometry depth-fusion is required")
        cloud = pcio.read_point_cloud(args.cloud)
        mesh = pcio.read_mesh(cfg.mesh_path) if cfg.mesh_path else None
        result = pipeline.reconstruct(cfg, cloud, mesh, out_dir=args.out)
        print(json.dumps({k: v for k, v in result["manifest"].items() if k != "config"}, indent=2))
        return EXIT_OK

    if args.command == "project":
        cfg = build_config(args)
        cloud = pcio.read_point_cloud(args.cloud)
        mesh = pcio.read_mesh(args.mesh_path) if args.mesh_path else None
        pipeline.stage_project(cfg, cloud, mesh, Path(args.out))
        print(f"projected {cfg.views} views into {args.out}")
        return EXIT_OK

    if args.command == "inpaint":
        cfg = build_config(args)
        outs = pipeline.stage_inpaint(cfg, Path(args.stage_dir),
                                      Path(args.out) if args.out else None)
        print(f"inpainted {len(outs)} views")
        return EXIT_OK

    if args.command == "unproject":
        cfg = build_config(args)
        mesh = pcio.read_mesh(args.mesh_path)
        pipeline.stage_unproject(cfg, Path(args.stage_dir), mesh, Path(args.out))
        print(f"textured mesh written to {args.out}")
        return EXIT_OK

    if args.command == "eval":
        pred = pcio.read_textured_mesh(args.pred)
        gt = pcio.read_textured_mesh(args.gt)
        res = args.resolution or 256
        report = metrics.render_report(pred, gt, resolution=res)
        report.update(metrics.geometry_report(pred[0], gt[0]))
        if args.render_dir:
            rig = metrics.eval_views(res)
            rdir = Path(args.render_dir)
            for k, view in enumerate(rig.views):
                from .projection import write_image_png
                write_image_png(metrics.render_textured(pred[0], pred[1], view),
                                rdir / f"pred_{k:02d}.png")
                write_image_png(metrics.render_textured(gt[0], gt[1], view),
                                rdir / f"gt_{k:02d}.png")
        text = json.dumps(report, indent=2)
        if args.out:
            Path(args.out).write_text(text)
        print(text)
        return EXIT_OK

    if args.command == "ablate":
        return _ablate(args)

    raise ValueError(f"unknown command {args.command!r}")


def _ablate(args) -> int:
    cfg = build_config(args)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]

    if args.benchmark == "stacked-slabs":
        rows = run_slab_benchmark(cfg, dilate_img_px=args.dilate_img_px, strategies=strategies)
        with open(out_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {len(rows)} benchmark rows to {out_path}")
        return EXIT_OK

    if args.gt_mesh is None:
        raise ValueError("ablate requires --gt-mesh or --benchmark stacked-slabs")
    gt_mesh, gt_atlas = pcio.read_textured_mesh(args.gt_mesh)
    noises = [float(s) for s in args.noises.split(",") if s.strip()]
    points = [int(s) for s in args.points.split(",") if s.strip()]
    base_cloud = pcio.sample_points(gt_mesh, gt_atlas, max(points), cfg.seed)
    rows = []
    for sigma in noises:
        for npts in points:
            cloud = pcio.subsample(base_cloud, npts, cfg.seed) if npts < len(base_cloud) else base_cloud
            cloud = pcio.add_gaussian_noise(cloud, sigma, cfg.seed + 1) if sigma > 0 else cloud
            for strat in strategies:
                run_cfg = dataclasses.replace(cfg, unproject=strat)
                result = pipeline.reconstruct(run_cfg, cloud, gt_mesh)
                rep = metrics.render_report((result["mesh"], result["atlas"]),
                                            (gt_mesh, gt_atlas), resolution=cfg.resolution)
                rows.append({
                    "noise_sigma": sigma, "n_points": npts, "strategy": strat,
                    "psnr": round(rep["psnr"], 4), "ssim": round(rep["ssim"], 6),
                })
    with open(out_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} sweep rows to {out_path}")
    return EXIT_OK


def run_slab_benchmark(cfg: PipelineConfig, dilate_img_px: int,
                       strategies: list[str] | None = None,
                       image_res: int = 512, nbf_dilate_px: int | None = None) -> list[dict]:
    """Misassignment comparison of the unprojection strategies on the
    stacked-slabs scene with an injected occluder dilation."""
    from .camera import make_rig
    from .projection import render_mesh_depth

    strategies = strategies or ["naive", "opt-naive", "nbf", "opt-nbf", "opt-scratch"]
    scene = synthbench.make_stacked_slabs(atlas_res=cfg.atlas_res)
    rig = make_rig(cfg.views, image_res, cfg.radius)
    images = [metrics.render_textured(scene.mesh, scene.atlas, v) for v in rig.views]
    images = synthbench.inject_border_inconsistency(images, rig.views, scene.mesh,
                                                    dilate_img_px, scene.occluder_faces)
    mesh_depths = [render_mesh_depth(scene.mesh, v) for v in rig.views]
    texels = uvatlas.rasterize_texels(scene.mesh, scene.charts, cfg.atlas_res)
    unproject.compute_view_layers(texels, rig.views, mesh_depths, cfg.depth_epsilon)
    if nbf_dilate_px is None:
        # border band must cover the injected image-space dilation once mapped
        # into texel units, plus margin for resampling jitter
        texel_per_px = _texel_per_image_px(scene.mesh, texels, rig.views[0], image_res)
        base_dilate = pipeline.effective_dilate_px(cfg)
        nbf_dilate_px = max(base_dilate, int(np.ceil(dilate_img_px * texel_per_px)) + 2)
    unproject.detect_all_borders(texels, nbf_dilate_px)
    # PSNR over valid texels minus the 1-texel chart silhouette ring, matching
    # the exclusion the misassignment count applies (the ring carries pure
    # bilinear resampling error against the chart's surroundings)
    from scipy import ndimage

    ring = texels.valid & ndimage.binary_dilation(~texels.valid, np.ones((3, 3), dtype=bool))
    core = texels.valid & ~ring
    rows = []
    for strat in strategies:
        atlas = unproject.run_strategy(strat, texels, images, nbf_dilate_px, seed=cfg.seed,
                                       mesh=scene.mesh, views=rig.views)
        count, _ = synthbench.misassigned_texels(atlas, scene.atlas, texels)
        mse = float(np.mean((atlas.data[core] - scene.atlas.data[core]) ** 2))
        psnr = float("inf") if mse == 0 else 10.0 * np.log10(1.0 / mse)
        rows.append({"strategy": strat, "dilate_img_px": dilate_img_px,
                     "misassigned": count, "atlas_psnr": round(psnr, 3),
                     "nbf_dilate_px": nbf_dilate_px})
    return rows


def _texel_per_image_px(mesh, texels, view, image_res: int) -> float:
    """Atlas texels per image pixel for a unit-scale subject of this mesh."""
    import math

    total_area = float(mesh.face_areas().sum())
    texels_per_wu = math.sqrt(float(texels.valid.sum()) / max(total_area, 1e-12))
    subject_dist = float(np.linalg.norm(view.position))
    px_per_wu = image_res / (2.0 * subject_dist * math.tan(view.fov_y / 2.0))
    return texels_per_wu / px_per_wu


if __name__ == "__main__":
    sys.exit(main())
