import io
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from PIL import Image
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudtex.inpaint import (
    RemoteInpaintError,
    inpaint_linear,
    inpaint_nearest,
    inpaint_remote,
)
from cloudtex.projection import Raster


def sparse_raster(w, h, known_pixels, colors):
    r = Raster.empty_rgb(w, h)
    for (row, col), c in zip(known_pixels, colors):
        r.data[row, col] = c
        r.known[row, col] = True
    return r


def full_mask(w, h):
    return np.ones((h, w), dtype=bool)


def test_fully_known_identity():
    rng = np.random.default_rng(0)
    data = rng.random((8, 8, 3))
    r = Raster(8, 8, "rgb", data.copy(), np.ones((8, 8), dtype=bool))
    out = inpaint_nearest(r, full_mask(8, 8))
    np.testing.assert_array_equal(out.data, data)


def test_nearest_tie_break_row_then_col():
    r = sparse_raster(16, 1, [(0, 0), (0, 10)], [[1, 0, 0], [0, 0, 1]])
    out = inpaint_nearest(r, full_mask(16, 1))
    np.testing.assert_array_equal(out.data[0, 4], [1, 0, 0])
    np.testing.assert_array_equal(out.data[0, 6], [0, 0, 1])
    # (0,5) ties between columns 0 and 10: smaller column wins
    np.testing.assert_array_equal(out.data[0, 5], [1, 0, 0])


def test_nearest_checkerboard_uniform():
    r = Raster.empty_rgb(10, 10)
    ys, xs = np.mgrid[0:10, 0:10]
    board = (ys + xs) % 2 == 0
    r.known = board
    r.data[board] = [0.2, 0.6, 0.4]
    out = inpaint_nearest(r, full_mask(10, 10))
    np.testing.assert_allclose(out.data, np.broadcast_to([0.2, 0.6, 0.4], (10, 10, 3)))


def test_nearest_matches_bruteforce_oracle():
    rng = np.random.default_rng(5)
    w = h = 24
    r = Raster.empty_rgb(w, h)
    n = 30
    rows = rng.integers(0, h, n)
    cols = rng.integers(0, w, n)
    for i, (a, b) in enumerate(zip(rows, cols)):
        r.known[a, b] = True
        r.data[a, b] = [i / n, (i * 7 % n) / n, (i * 3 % n) / n]
    out = inpaint_nearest(r, full_mask(w, h))
    krc = np.argwhere(r.known)
    for row in range(h):
        for col in range(w):
            d2 = (krc[:, 0] - row) ** 2 + (krc[:, 1] - col) ** 2
            best = min(zip(d2.tolist(), krc[:, 0].tolist(), krc[:, 1].tolist()))
            np.testing.assert_array_equal(out.data[row, col], r.data[best[1], best[2]],
                                          err_msg=f"pixel {(row, col)}")


def test_nearest_mask_background_and_errors():
    r = sparse_raster(8, 8, [(2, 2)], [[0.5, 0.5, 0.5]])
    mask = np.zeros((8, 8), dtype=bool)
    mask[1:5, 1:5] = True
    out = inpaint_nearest(r, mask)
    assert np.all(out.data[~mask] == 1.0)  # white background
    assert np.all(out.data[mask] == 0.5)
    assert out.known.all()
    empty = Raster.empty_rgb(8, 8)
    with pytest.raises(ValueError):
        inpaint_nearest(empty, full_mask(8, 8))


def test_nearest_depth_background_infinity():
    r = Raster.empty_depth(8, 8)
    r.data[3, 3] = 1.25
    r.known[3, 3] = True
    mask = np.zeros((8, 8), dtype=bool)
    mask[2:6, 2:6] = True
    out = inpaint_nearest(r, mask)
    assert np.all(out.data[mask] == np.float32(1.25))
    assert np.all(np.isinf(out.data[~mask]))


def test_linear_constant_and_barycentric():
    corners = [(1, 1), (1, 20), (20, 5)]
    e = np.eye(3)
    r = sparse_raster(24, 24, corners, e)
    out = inpaint_linear(r, full_mask(24, 24))
    # interior pixel: barycentric mix of corner colors
    probe = (8, 9)  # (row, col)
    p = np.array([probe[0], probe[1]], dtype=np.float64)
    a, b, c = (np.array(x, dtype=np.float64) for x in corners)
    det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
    w0 = ((b[0] - p[0]) * (c[1] - p[1]) - (c[0] - p[0]) * (b[1] - p[1])) / det
    w1 = ((c[0] - p[0]) * (a[1] - p[1]) - (a[0] - p[0]) * (c[1] - p[1])) / det
    w2 = 1 - w0 - w1
    want = w0 * e[0] + w1 * e[1] + w2 * e[2]
    np.testing.assert_allclose(out.data[probe], want, atol=1 / 255)

    ru = sparse_raster(16, 16, [(0, 0), (0, 12), (12, 4)],
                       [[0.3, 0.3, 0.3]] * 3)
    outu = inpaint_linear(ru, full_mask(16, 16))
    np.testing.assert_allclose(outu.data, 0.3, atol=1e-12)


def test_linear_reproduces_linear_ramp():
    w = h = 33
    r = Raster.empty_rgb(w, h)
    ys, xs = np.mgrid[0:h, 0:w]
    ramp = np.stack([xs / (w - 1), ys / (h - 1), (xs + ys) / (w + h - 2)], axis=2)
    known = (ys % 8 == 0) & (xs % 8 == 0)
    r.known = known
    r.data[known] = ramp[known]
    out = inpaint_linear(r, full_mask(w, h))
    # inside the hull of known pixels barycentric interpolation is exact on
    # linear functions
    np.testing.assert_allclose(out.data, ramp, atol=1 / 255)


def test_linear_fallback_warns():
    r = sparse_raster(8, 8, [(0, 0), (7, 7)], [[1, 0, 0], [0, 1, 0]])
    with pytest.warns(UserWarning):
        out = inpaint_linear(r, full_mask(8, 8))
    ref = inpaint_nearest(r, full_mask(8, 8))
    np.testing.assert_array_equal(out.data, ref.data)
    collinear = sparse_raster(8, 8, [(0, 0), (0, 3), (0, 7)], [[1, 0, 0]] * 3)
    with pytest.warns(UserWarning):
        inpaint_linear(collinear, full_mask(8, 8))


@given(st.integers(min_value=0, max_value=10 ** 6))
@settings(max_examples=15, deadline=None)
def test_builtin_determinism_and_coverage(seed):
    rng = np.random.default_rng(seed)
    w = h = 16
    r = Raster.empty_rgb(w, h)
    n = int(rng.integers(1, 40))
    rows = rng.integers(0, h, n)
    cols = rng.integers(0, w, n)
    r.known[rows, cols] = True
    r.data[rows, cols] = rng.random((n, 3))
    mask = np.zeros((h, w), dtype=bool)
    mask[rng.integers(0, 4):rng.integers(8, 16), :] = True
    a = inpaint_nearest(r, mask)
    b = inpaint_nearest(r.copy(), mask.copy())
    np.testing.assert_array_equal(a.data, b.data)
    # known pixels inside the mask preserved exactly
    keep = r.known & mask
    np.testing.assert_array_equal(a.data[keep], r.data[keep])
    assert a.known.all()


class _Handler(BaseHTTPRequestHandler):
    mode = "echo"

    def do_POST(self):
        if self.path != "/inpaint":
            self.send_response(404)
            self.end_headers()
            return
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        if self.mode == "error":
            payload = b'{"code": "boom", "message": "backend exploded"}'
            self.send_response(500)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(payload)
            return
        # crude multipart scan: pull the first PNG out of the body
        start = body.find(b"\x89PNG")
        end = body.find(b"IEND", start) + 8
        img = Image.open(io.BytesIO(body[start:end])).convert("RGB")
        if self.mode == "wrong-dims":
            img = img.resize((img.width + 2, img.height + 2))
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        self.send_response(200)
        self.send_header("Content-Type", "image/png")
        self.end_headers()
        self.wfile.write(buf.getvalue())

    def log_message(self, *args):
        pass


@pytest.fixture
def http_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server, f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


def test_remote_echo_strict_reimposes(http_server):
    _Handler.mode = "echo"
    _, url = http_server
    r = sparse_raster(12, 12, [(3, 3), (8, 9)], [[0.25, 0.5, 0.75], [1, 0, 0]])
    out = inpaint_remote(r, full_mask(12, 12), url, strict=True)
    np.testing.assert_allclose(out.data[3, 3], [0.25, 0.5, 0.75])
    np.testing.assert_allclose(out.data[8, 9], [1, 0, 0])
    assert out.known.all()


def test_remote_wrong_dims_raises(http_server):
    _Handler.mode = "wrong-dims"
    _, url = http_server
    r = sparse_raster(12, 12, [(3, 3)], [[0.5, 0.5, 0.5]])
    with pytest.raises(RemoteInpaintError):
        inpaint_remote(r, full_mask(12, 12), url)


def test_remote_error_status_raises(http_server):
    _Handler.mode = "error"
    _, url = http_server
    r = sparse_raster(12, 12, [(3, 3)], [[0.5, 0.5, 0.5]])
    with pytest.raises(RemoteInpaintError) as exc:
        inpaint_remote(r, full_mask(12, 12), url)
    assert exc.value.status == 500


def test_remote_unreachable_fallback_nearest():
    r = sparse_raster(12, 12, [(3, 3), (9, 2)], [[0.5, 0.5, 0.5], [0.1, 0.9, 0.3]])
    mask = full_mask(12, 12)
    with pytest.warns(UserWarning):
        out = inpaint_remote(r, mask, "http://127.0.0.1:1", timeout=0.5, fallback="nearest")
    ref = inpaint_nearest(r, mask)
    np.testing.assert_array_equal(out.data, ref.data)
