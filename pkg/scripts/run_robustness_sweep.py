#!/usr/bin/env python3
"""Degraded-input sweep on the textured-cube round trip: noise levels x point
counts x unprojection strategies, one CSV row per cell.

Usage: python scripts/run_robustness_sweep.py [--out CSV] [--strategies a,b]
"""

import argparse
import csv
import dataclasses
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from cloudtex import pcio
from cloudtex.metrics import render_report
from cloudtex.pipeline import PipelineConfig, reconstruct
from conftest import make_textured_cube


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="robustness.csv")
    ap.add_argument("--noises", default="0,0.005")
    ap.add_argument("--points", default="30000,25000,20000,10000")
    ap.add_argument("--strategies", default="naive,opt-naive,nbf,opt-nbf,opt-scratch")
    ap.add_argument("--inpainter", default="linear")
    args = ap.parse_args()

    mesh, atlas, _, _ = make_textured_cube(atlas_res=512)
    base = pcio.sample_points(mesh, atlas, 30000, seed=0)
    cfg = PipelineConfig(inpainter=args.inpainter, atlas_res=512, seed=0)
    rows = []
    for sigma in (float(s) for s in args.noises.split(",")):
        for npts in (int(s) for s in args.points.split(",")):
            cloud = pcio.subsample(base, npts, seed=1) if npts < len(base) else base
            if sigma > 0:
                cloud = pcio.add_gaussian_noise(cloud, sigma, seed=2)
            for strat in args.strategies.split(","):
                t0 = time.time()
                result = reconstruct(dataclasses.replace(cfg, unproject=strat), cloud, mesh)
                rep = render_report((result["mesh"], result["atlas"]), (mesh, atlas),
                                    resolution=256)
                rows.append({
                    "noise_sigma": sigma, "n_points": npts, "strategy": strat,
                    "psnr": round(rep["psnr"], 3), "ssim": round(rep["ssim"], 5),
                    "seconds": round(time.time() - t0, 1),
                })
                print(rows[-1])
    with open(args.out, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
