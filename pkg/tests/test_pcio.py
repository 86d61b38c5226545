import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudtex import pcio
from cloudtex.pcio import (
    ColoredPointCloud,
    FormatError,
    InputError,
    TriangleMesh,
    add_gaussian_noise,
    normalize_cloud,
    read_mesh,
    read_point_cloud,
    sample_points,
    sample_surface,
    subsample,
    write_point_cloud,
    write_textured_mesh,
)

from conftest import make_textured_cube


def test_ascii_ply_color_normalization(tmp_path):
    p = tmp_path / "tri.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 3\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
        "0 0 0 255 0 0\n1 0 0 0 255 0\n0 1 0 0 0 255\n"
    )
    cloud = read_point_cloud(p)
    assert len(cloud) == 3
    np.testing.assert_allclose(cloud.colors, np.eye(3))


def test_xyzrgb_single_line(tmp_path):
    p = tmp_path / "one.xyz"
    p.write_text("0 0 0 128 128 128\n")
    cloud = read_point_cloud(p, format="xyz-rgb")
    assert len(cloud) == 1
    # 128/255 by direct arithmetic
    np.testing.assert_allclose(cloud.colors[0], [128 / 255] * 3, atol=1e-12)
    assert abs(cloud.colors[0, 0] - 0.50196) < 1e-5


def test_empty_file_is_input_error(tmp_path):
    p = tmp_path / "empty.ply"
    p.write_text("")
    with pytest.raises(InputError):
        read_point_cloud(p)


def test_ply_missing_colors_is_input_error(tmp_path):
    p = tmp_path / "nocolor.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n"
    )
    with pytest.raises(InputError):
        read_point_cloud(p)


def test_ply_parse_error_names_byte_offset(tmp_path):
    p = tmp_path / "broken.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n0 0 0 1 2 3\nnot numbers here x\n"
    )
    with pytest.raises(FormatError, match="byte offset"):
        read_point_cloud(p)


def test_binary_ply_roundtrip_values(tmp_path):
    import struct

    p = tmp_path / "bin.ply"
    header = (
        "ply\nformat binary_little_endian 1.0\nelement vertex 2\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
    ).encode()
    body = struct.pack("<fffBBB", 1.0, 2.0, 3.0, 255, 0, 10) + struct.pack(
        "<fffBBB", -1.0, 0.5, 0.0, 0, 128, 255)
    p.write_bytes(header + body)
    cloud = read_point_cloud(p)
    np.testing.assert_allclose(cloud.positions, [[1, 2, 3], [-1, 0.5, 0]])
    np.testing.assert_allclose(cloud.colors[1], [0, 128 / 255, 1.0])


def test_point_cloud_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(3)
    cloud = ColoredPointCloud(rng.normal(size=(50, 3)), rng.random((50, 3)))
    path = write_point_cloud(cloud, tmp_path / "out.ply")
    back = read_point_cloud(path)
    np.testing.assert_array_equal(back.positions, cloud.positions)
    assert np.abs(back.colors - cloud.colors).max() <= 0.5 / 255 + 1e-12


def test_obj_cube_no_uv(tmp_path):
    lines = ["v -1 -1 -1", "v 1 -1 -1", "v 1 1 -1", "v -1 1 -1",
             "v -1 -1 1", "v 1 -1 1", "v 1 1 1", "v -1 1 1"]
    quads = [(1, 4, 3, 2), (5, 6, 7, 8), (1, 2, 6, 5), (4, 8, 7, 3), (1, 5, 8, 4), (2, 3, 7, 6)]
    for q in quads:
        lines.append("f " + " ".join(str(i) for i in q))
    p = tmp_path / "cube.obj"
    p.write_text("\n".join(lines) + "\n")
    mesh = read_mesh(p)
    assert len(mesh.vertices) == 8
    assert len(mesh.faces) == 12  # fan triangulation of 6 quads
    assert mesh.uv_corners is None


def test_obj_quad_face_fan(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = read_mesh(p)
    assert len(mesh.faces) == 2


def test_obj_zero_index_is_format_error(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n")
    with pytest.raises(FormatError):
        read_mesh(p)


def test_obj_out_of_range_index(tmp_path):
    p = tmp_path / "oob.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(FormatError):
        read_mesh(p)


def test_textured_mesh_roundtrip(tmp_path):
    mesh, atlas, _, _ = make_textured_cube(atlas_res=128)
    paths = write_textured_mesh(mesh, atlas, tmp_path, name="cube")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["cube.mtl", "cube.obj", "cube.png"]
    back, back_atlas = pcio.read_textured_mesh(paths["obj"])
    assert len(back.vertices) == len(mesh.vertices)
    assert len(back.faces) == len(mesh.faces)
    # UVs reproduce the written 6-decimal values bit-exactly
    np.testing.assert_array_equal(back.uv_corners, np.round(mesh.uv_corners, 6))
    assert np.abs(back_atlas.data - atlas.data).max() <= 0.5 / 255 + 1e-12


def test_write_textured_mesh_requires_uvs(tmp_path, cube_mesh):
    from cloudtex.pcio import TextureAtlas

    atlas = TextureAtlas(np.zeros((8, 8, 3)))
    with pytest.raises(InputError):
        write_textured_mesh(cube_mesh, atlas, tmp_path)


def test_uniform_atlas_renders_uniform(tmp_path):
    from cloudtex.camera import make_rig
    from cloudtex.metrics import render_textured
    from cloudtex.pcio import TextureAtlas, quantize_colors

    mesh, _, _, texels = make_textured_cube(atlas_res=128)
    c = np.array([0.32, 0.55, 0.81])
    atlas = TextureAtlas(np.broadcast_to(c, (128, 128, 3)).copy())
    paths = write_textured_mesh(mesh, atlas, tmp_path, name="uni")
    back, back_atlas = pcio.read_textured_mesh(paths["obj"])
    view = make_rig("fib8", resolution=96).views[0]
    img = render_textured(back, back_atlas, view)
    covered = ~np.all(img.data == 1.0, axis=2)
    assert covered.sum() > 200
    want = quantize_colors(c).astype(np.float64) / 255.0
    np.testing.assert_allclose(img.data[covered], np.broadcast_to(want, (covered.sum(), 3)),
                               atol=1e-12)


def test_sample_points_count_and_containment():
    mesh, atlas, _, _ = make_textured_cube(atlas_res=128)
    cloud = sample_points(mesh, atlas, 30000, seed=1)
    assert len(cloud) == 30000
    assert np.abs(cloud.positions).max() <= 0.5 + 1e-12


def test_sample_points_single_triangle_inside():
    tri = TriangleMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))
    pts, _, _, bary = sample_surface(tri, 1000, seed=0)
    assert bary.min() >= 0
    assert np.all(pts[:, 2] == 0)
    assert np.all(pts[:, 0] + pts[:, 1] <= 1 + 1e-12)


def test_sample_area_weighting_binomial():
    # two triangles with areas 1 and 3: expect n1/n ~ 1/4 within 3 sigma
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0], [10, 0, 0], [13, 0, 0], [10, 2, 0]],
                     dtype=np.float64)
    faces = np.array([[0, 1, 2], [3, 4, 5]])
    mesh = TriangleMesh(verts, faces)
    n = 40000
    _, _, fids, _ = sample_surface(mesh, n, seed=7)
    n1 = int((fids == 0).sum())
    p = 0.25
    sigma = np.sqrt(n * p * (1 - p))
    assert abs(n1 - n * p) <= 3 * sigma


def test_sample_seed_determinism():
    mesh, atlas, _, _ = make_textured_cube(atlas_res=128)
    a = sample_points(mesh, atlas, 500, seed=5)
    b = sample_points(mesh, atlas, 500, seed=5)
    c = sample_points(mesh, atlas, 500, seed=6)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, c.positions)


def test_noise_sigma_zero_identity():
    cloud = ColoredPointCloud(np.random.default_rng(0).normal(size=(100, 3)),
                              np.full((100, 3), 0.5))
    out = add_gaussian_noise(cloud, 0.0, seed=1)
    np.testing.assert_array_equal(out.positions, cloud.positions)


def test_noise_sample_std():
    rng = np.random.default_rng(0)
    cloud = ColoredPointCloud(rng.normal(size=(30000, 3)), np.full((30000, 3), 0.5))
    out = add_gaussian_noise(cloud, 0.005, seed=2)
    disp = out.positions - cloud.positions
    std = disp.std()
    assert abs(std - 0.005) / 0.005 < 0.02
    np.testing.assert_array_equal(out.colors, cloud.colors)


def test_noise_determinism():
    cloud = ColoredPointCloud(np.zeros((10, 3)), np.full((10, 3), 0.5))
    a = add_gaussian_noise(cloud, 0.005, seed=3)
    b = add_gaussian_noise(cloud, 0.005, seed=3)
    np.testing.assert_array_equal(a.positions, b.positions)


def test_subsample_full_and_counts():
    rng = np.random.default_rng(1)
    cloud = ColoredPointCloud(rng.normal(size=(30000, 3)), rng.random((30000, 3)))
    same = subsample(cloud, 30000, seed=0)
    np.testing.assert_array_equal(np.sort(same.positions, axis=0), np.sort(cloud.positions, axis=0))
    small = subsample(cloud, 10000, seed=0)
    assert len(small) == 10000
    with pytest.raises(InputError):
        subsample(cloud, 0, seed=0)
    with pytest.raises(InputError):
        subsample(cloud, 30001, seed=0)


@given(st.integers(min_value=1, max_value=50), st.integers(min_value=0, max_value=2 ** 31))
@settings(max_examples=25, deadline=None)
def test_normalization_property(n, seed):
    rng = np.random.default_rng(seed)
    pos = rng.normal(scale=rng.uniform(0.01, 100.0), size=(n, 3)) + rng.normal(scale=50, size=3)
    if n > 1 and np.ptp(pos, axis=0).max() == 0:
        pos[0] += 1.0
    cloud = ColoredPointCloud(pos, np.full((n, 3), 0.5))
    out, tf = normalize_cloud(cloud)
    assert out.positions.min() >= -0.5 - 1e-9
    assert out.positions.max() <= 0.5 + 1e-9
    if n > 1 and np.ptp(pos, axis=0).max() > 0:
        assert np.isclose(np.abs(out.positions).max(), 0.5)
    np.testing.assert_allclose(tf.invert(out.positions), pos, rtol=1e-12, atol=1e-9)
