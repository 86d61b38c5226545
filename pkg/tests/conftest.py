import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cloudtex.pcio import TextureAtlas, TriangleMesh
from cloudtex.unproject import seam_bleed
from cloudtex.uvatlas import rasterize_texels, unwrap


def make_uv_sphere(radius=0.4, rings=16, segments=24, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    cx, cy, cz = center
    verts = [[cx, cy + radius, cz]]
    for r in range(1, rings):
        phi = math.pi * r / rings
        for s in range(segments):
            th = 2 * math.pi * s / segments
            verts.append([
                cx + radius * math.sin(phi) * math.cos(th),
                cy + radius * math.cos(phi),
                cz + radius * math.sin(phi) * math.sin(th),
            ])
    verts.append([cx, cy - radius, cz])
    bottom = len(verts) - 1
    faces = []
    for s in range(segments):
        faces.append([0, 1 + (s + 1) % segments, 1 + s])
    for r in range(rings - 2):
        a0 = 1 + r * segments
        b0 = 1 + (r + 1) * segments
        for s in range(segments):
            s1 = (s + 1) % segments
            faces.append([a0 + s, a0 + s1, b0 + s])
            faces.append([a0 + s1, b0 + s1, b0 + s])
    last = 1 + (rings - 2) * segments
    for s in range(segments):
        faces.append([bottom, last + s, last + (s + 1) % segments])
    return TriangleMesh(np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64))


CUBE_FACE_COLORS = np.array([
    [0.75, 0.30, 0.30],
    [0.30, 0.70, 0.35],
    [0.32, 0.40, 0.75],
    [0.78, 0.70, 0.30],
    [0.35, 0.68, 0.70],
    [0.70, 0.40, 0.68],
])


def make_cube(half=0.5) -> TriangleMesh:
    s = half
    verts = np.array([
        [-s, -s, -s], [s, -s, -s], [s, s, -s], [-s, s, -s],
        [-s, -s, s], [s, -s, s], [s, s, s], [-s, s, s],
    ], dtype=np.float64)
    # outward-wound quads: -z, +z, -y, +y, -x, +x
    quads = [
        (0, 3, 2, 1), (4, 5, 6, 7),
        (0, 1, 5, 4), (3, 7, 6, 2),
        (0, 4, 7, 3), (1, 2, 6, 5),
    ]
    faces = []
    for q in quads:
        faces.append([q[0], q[1], q[2]])
        faces.append([q[0], q[2], q[3]])
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))


def make_textured_cube(atlas_res=1024, half=0.5):
    """Unwrapped cube whose 6 faces carry 6 flat colors."""
    mesh = make_cube(half)
    mesh, charts = unwrap(mesh, atlas_res=atlas_res)
    texels = rasterize_texels(mesh, charts, atlas_res)
    data = np.zeros((atlas_res, atlas_res, 3), dtype=np.float64)
    for fi in range(12):
        sel = texels.face_id == fi
        data[sel] = CUBE_FACE_COLORS[fi // 2]
    seam_bleed(data, texels.valid.copy())
    return mesh, TextureAtlas(data), charts, texels


@pytest.fixture(scope="session")
def sphere_mesh():
    return make_uv_sphere()


@pytest.fixture(scope="session")
def cube_mesh():
    return make_cube()


@pytest.fixture(scope="session")
def textured_cube():
    return make_textured_cube(atlas_res=512)
