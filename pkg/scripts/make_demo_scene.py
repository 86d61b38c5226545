#!/usr/bin/env python3
"""Generate demo assets: a 6-color textured cube (GT mesh + atlas + 30k-point
cloud) and the stacked-slabs benchmark scene, written under data/.

Usage: python scripts/make_demo_scene.py [out_dir]
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from cloudtex import pcio
from cloudtex.synthbench import make_stacked_slabs
from conftest import make_textured_cube


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data")
    out.mkdir(parents=True, exist_ok=True)

    mesh, atlas, _, _ = make_textured_cube(atlas_res=512)
    paths = pcio.write_textured_mesh(mesh, atlas, out, name="gt_cube")
    cloud = pcio.sample_points(mesh, atlas, 30000, seed=0)
    pcio.write_point_cloud(cloud, out / "cube_30k.ply")
    print(f"cube: {paths['obj']} + {out / 'cube_30k.ply'}")

    scene = make_stacked_slabs(atlas_res=1024)
    paths = pcio.write_textured_mesh(scene.mesh, scene.atlas, out, name="gt_slabs")
    pcio.write_point_cloud(scene.cloud, out / "slabs_30k.ply")
    print(f"slabs: {paths['obj']} + {out / 'slabs_30k.ply'}")


if __name__ == "__main__":
    main()
