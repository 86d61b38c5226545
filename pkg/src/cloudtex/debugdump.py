"""Debug artifact dumps: chart maps, per-view visibility/border masks, and the
chosen-view index map, all as PNGs with a fixed palette."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .uvatlas import TexelTable

# fixed 16-color palette; view/chart index k -> PALETTE[k % 16]
PALETTE = np.array([
    [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200],
    [245, 130, 48], [145, 30, 180], [70, 240, 240], [240, 50, 230],
    [210, 245, 60], [250, 190, 212], [0, 128, 128], [220, 190, 255],
    [170, 110, 40], [255, 250, 200], [128, 0, 0], [170, 255, 195],
], dtype=np.uint8)


def index_map_png(indices: np.ndarray, path) -> Path:
    """Color-code an index map (-1 = black) with the fixed palette."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = np.zeros(indices.shape + (3,), dtype=np.uint8)
    ok = indices >= 0
    out[ok] = PALETTE[indices[ok] % len(PALETTE)]
    Image.fromarray(out, mode="RGB").save(path)
    return path


def dump_texel_debug(texels: TexelTable, choice: np.ndarray, out_dir) -> list[Path]:
    """Write charts.png, per-view visible/border masks, and the chosen-view map."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [index_map_png(texels.chart_id, out_dir / "charts.png"),
             index_map_png(choice, out_dir / "chosen_view.png")]
    for k in range(texels.n_views):
        vis = np.where(texels.visible[k], 255, 0).astype(np.uint8)
        paths.append(out_dir / f"visible_{k:02d}.png")
        Image.fromarray(vis, mode="L").save(paths[-1])
        if texels.border is not None:
            brd = np.where(texels.border[k], 255, 0).astype(np.uint8)
            paths.append(out_dir / f"border_{k:02d}.png")
            Image.fromarray(brd, mode="L").save(paths[-1])
    return paths
