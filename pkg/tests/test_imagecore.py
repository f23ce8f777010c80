import numpy as np
import pytest
from PIL import Image as PilImage

from hazeattack import imagecore as ic


# ---------------------------------------------------------------------------
# PNG I/O
# ---------------------------------------------------------------------------

def test_load_black_and_white_png(tmp_path):
    black = np.zeros((4, 5, 3))
    white = np.ones((4, 5, 3))
    ic.save_image(black, tmp_path / "black.png")
    ic.save_image(white, tmp_path / "white.png")
    assert np.all(ic.load_image(tmp_path / "black.png") == 0.0)
    assert np.all(ic.load_image(tmp_path / "white.png") == 1.0)


def test_load_byte_128_maps_to_128_over_255(tmp_path):
    PilImage.fromarray(np.full((2, 2, 3), 128, dtype=np.uint8), "RGB").save(
        tmp_path / "gray.png")
    img = ic.load_image(tmp_path / "gray.png")
    assert np.allclose(img, 128.0 / 255.0)


def test_png_round_trip_quantization_bound(tmp_path, rng):
    img = rng.random((11, 7, 3))
    ic.save_image(img, tmp_path / "x.png")
    back = ic.load_image(tmp_path / "x.png")
    assert np.max(np.abs(back - img)) <= 0.5 / 255.0 + 1e-12


def test_save_rounds_half_up(tmp_path):
    # 0.5*255 = 127.5 must become byte 128; 1.0 must become 255
    img = np.full((1, 2, 3), 0.5)
    img[0, 1] = 1.0
    ic.save_image(img, tmp_path / "r.png")
    raw = np.asarray(PilImage.open(tmp_path / "r.png"))
    assert raw[0, 0, 0] == 128
    assert raw[0, 1, 0] == 255


def test_load_image_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        ic.load_image(tmp_path / "missing.png")
    PilImage.fromarray(np.zeros((3, 3), dtype=np.uint8), "L").save(tmp_path / "gray.png")
    with pytest.raises(ValueError, match="RGB"):
        ic.load_image(tmp_path / "gray.png")
    PilImage.fromarray(np.zeros((3, 3, 3), dtype=np.uint8), "RGB").save(
        tmp_path / "img.jpg", format="JPEG")
    with pytest.raises(ValueError, match="format"):
        ic.load_image(tmp_path / "img.jpg")


def test_save_image_validates_range(tmp_path):
    with pytest.raises(ValueError):
        ic.save_image(np.full((2, 2, 3), 1.5), tmp_path / "bad.png")


# ---------------------------------------------------------------------------
# PFM I/O
# ---------------------------------------------------------------------------

def test_pfm_round_trip_bit_exact(tmp_path, rng):
    field = rng.standard_normal((9, 5)).astype(np.float32).astype(np.float64)
    ic.save_depth(field, tmp_path / "f.pfm")
    back = ic.load_depth(tmp_path / "f.pfm")
    assert back.dtype == np.float64
    assert np.array_equal(back, field)


def test_pfm_save_load_save_byte_identical(tmp_path, rng):
    field = rng.random((6, 8)).astype(np.float32).astype(np.float64)
    p1 = tmp_path / "a.pfm"
    p2 = tmp_path / "b.pfm"
    ic.save_depth(field, p1)
    ic.save_depth(ic.load_depth(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_pfm_2x2_values(tmp_path):
    field = np.array([[0.0, 0.5], [0.5, 1.0]])
    ic.save_depth(field, tmp_path / "q.pfm")
    assert np.array_equal(ic.load_depth(tmp_path / "q.pfm"), field)


def test_pfm_rejects_nan(tmp_path):
    payload = np.array([np.nan, 1.0, 2.0, 3.0], dtype="<f4").tobytes()
    (tmp_path / "nan.pfm").write_bytes(b"Pf\n2 2\n-1.0\n" + payload)
    with pytest.raises(ic.PfmFormatError, match="NaN"):
        ic.load_depth(tmp_path / "nan.pfm")
    with pytest.raises(ValueError):
        ic.save_depth(np.array([[np.inf, 0.0]]), tmp_path / "inf.pfm")


def test_pfm_malformed_headers(tmp_path):
    cases = [b"PF\n2 2\n-1.0\n" + b"\x00" * 48,     # color variant
             b"Px\n2 2\n-1.0\n" + b"\x00" * 16,     # bad magic
             b"Pf\n2\n-1.0\n" + b"\x00" * 16,       # missing dim token
             b"Pf\n2 2\n-1.0\n" + b"\x00" * 8]      # truncated payload
    for i, blob in enumerate(cases):
        path = tmp_path / f"bad{i}.pfm"
        path.write_bytes(blob)
        with pytest.raises(ic.PfmFormatError):
            ic.load_depth(path)


def test_pfm_big_endian_read(tmp_path):
    field = np.array([[1.5, -2.0], [0.25, 8.0]])
    rows_bottom_up = field[::-1].astype(">f4").tobytes()
    (tmp_path / "be.pfm").write_bytes(b"Pf\n2 2\n1.0\n" + rows_bottom_up)
    assert np.array_equal(ic.load_depth(tmp_path / "be.pfm"), field)


# ---------------------------------------------------------------------------
# Depth normalization and synthetic depth
# ---------------------------------------------------------------------------

def test_normalize_depth_affine_map():
    raw = np.array([[2.0, 4.0], [6.0, 8.0]])
    out = ic.normalize_depth(raw)
    assert np.allclose(out, [[0.0, 1.0 / 3.0], [2.0 / 3.0, 1.0]])
    inv = ic.normalize_depth(raw, invert=True)
    assert np.allclose(inv, [[1.0, 2.0 / 3.0], [1.0 / 3.0, 0.0]])


def test_normalize_depth_constant_rejected():
    with pytest.raises(ValueError):
        ic.normalize_depth(np.full((3, 3), 7.0))


def test_normalize_depth_attains_bounds(rng):
    for _ in range(10):
        raw = rng.standard_normal((6, 4)) * rng.uniform(0.1, 100)
        out = ic.normalize_depth(raw)
        assert out.min() == 0.0 and out.max() == 1.0


def test_synthetic_depth_kinds():
    assert np.allclose(ic.synthetic_depth("h-ramp", 2, 3)[0], [0.0, 0.5, 1.0])
    assert np.all(ic.synthetic_depth("constant", 4, 4, c=0.0) == 0.0)
    radial = ic.synthetic_depth("radial", 3, 3)
    assert radial[1, 1] == 0.0
    assert radial[0, 0] == 1.0 and radial[2, 2] == 1.0
    v = ic.synthetic_depth("v-ramp", 3, 2)
    assert np.allclose(v[:, 0], [0.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        ic.synthetic_depth("constant", 2, 2, c=1.5)
    with pytest.raises(ValueError):
        ic.synthetic_depth("spiral", 2, 2)


# ---------------------------------------------------------------------------
# Gaussian kernel and replicate-padded convolution
# ---------------------------------------------------------------------------

def test_kernel_radius_and_normalization():
    k1 = ic.gaussian_kernel(1.0)
    assert k1.radius == 3
    w2 = k1.weights2d
    assert abs(w2.sum() - 1.0) <= 1e-9
    center = w2[k1.radius, k1.radius]
    assert center == w2.max()
    k3 = ic.gaussian_kernel(3.0)
    assert k3.radius == 9
    assert k3.weights2d.shape == (19, 19)
    with pytest.raises(ValueError):
        ic.gaussian_kernel(0.0)


def test_kernel_symmetry():
    k = ic.gaussian_kernel(1.7)
    w2 = k.weights2d
    assert np.array_equal(w2, w2[::-1, :])
    assert np.array_equal(w2, w2[:, ::-1])


def _conv_brute_force(field, kernel):
    """Direct double-loop replicate-padded convolution (oracle)."""
    h, w = field.shape
    r = kernel.radius
    k2 = kernel.weights2d
    out = np.zeros_like(field)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    sy = min(max(y - dy, 0), h - 1)
                    sx = min(max(x - dx, 0), w - 1)
                    acc += k2[dy + r, dx + r] * field[sy, sx]
            out[y, x] = acc
    return out


def test_convolve_matches_brute_force_on_impulse():
    field = np.zeros((5, 5))
    field[2, 2] = 1.0
    k = ic.gaussian_kernel(1.0)
    assert np.allclose(ic.convolve_replicate(field, k),
                       _conv_brute_force(field, k), atol=1e-12)


def test_convolve_matches_brute_force_random(rng):
    field = rng.random((6, 9))
    k = ic.gaussian_kernel(1.4)
    assert np.allclose(ic.convolve_replicate(field, k),
                       _conv_brute_force(field, k), atol=1e-12)


def test_convolve_preserves_constants_and_range(rng):
    k = ic.gaussian_kernel(2.0)
    const = np.full((7, 5), 0.37)
    assert np.allclose(ic.convolve_replicate(const, k), 0.37, atol=1e-12)
    for _ in range(5):
        field = rng.standard_normal((8, 6))
        out = ic.convolve_replicate(field, k)
        assert out.min() >= field.min() - 1e-12
        assert out.max() <= field.max() + 1e-12


def test_adjoint_identity_across_grid(rng):
    for shape in ((1, 1), (3, 7), (16, 16)):
        for sigma in (0.5, 1.0, 3.0):
            k = ic.gaussian_kernel(sigma)
            u = rng.standard_normal(shape)
            v = rng.standard_normal(shape)
            lhs = float(np.sum(ic.convolve_replicate(u, k) * v))
            rhs = float(np.sum(u * ic.convolve_adjoint_replicate(v, k)))
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_adjoint_equals_convolution_in_interior(rng):
    # symmetric kernel + interior support: adjoint == convolution
    k = ic.gaussian_kernel(1.0)
    field = np.zeros((16, 16))
    field[6:10, 6:10] = rng.random((4, 4))
    conv = ic.convolve_replicate(field, k)
    adj = ic.convolve_adjoint_replicate(field, k)
    interior = (slice(4, 12), slice(4, 12))
    assert np.allclose(conv[interior], adj[interior], atol=1e-12)


def test_adjoint_on_single_pixel():
    k = ic.gaussian_kernel(1.0)
    one = np.array([[3.7]])
    assert np.allclose(ic.convolve_adjoint_replicate(one, k), 3.7, atol=1e-12)
    assert np.allclose(ic.convolve_replicate(one, k), 3.7, atol=1e-12)
