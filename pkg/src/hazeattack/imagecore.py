"""Image / depth-map representation, file I/O and low-pass filtering.

Array conventions used across the package:

* images are ``float64`` arrays of shape ``(H, W, 3)``, channels-last
  (interleaved), every component in ``[0, 1]``;
* depth maps and scalar parameter fields are ``float64`` arrays of
  shape ``(H, W)``; depth values live in ``[0, 1]``.

All functions are pure; arrays are never mutated in place.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PilImage


class PfmFormatError(ValueError):
    """Raised for malformed or unsupported PFM files."""


def require_image(img: np.ndarray) -> None:
    """Validate the (H, W, 3) in-[0,1] image contract."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image components must lie in [0, 1]")


def require_field(field: np.ndarray, name: str = "field") -> None:
    """Validate the (H, W) scalar-field contract."""
    if field.ndim != 2:
        raise ValueError(f"expected 2-D {name}, got shape {field.shape}")
    if field.shape[0] < 1 or field.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1")
    if not np.all(np.isfinite(field)):
        raise ValueError(f"{name} contains non-finite values")


def require_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"dimension mismatch: {a.shape[:2]} vs {b.shape[:2]}")


# ---------------------------------------------------------------------------
# PNG I/O (8-bit RGB only)
# ---------------------------------------------------------------------------

def load_image(path: str | Path) -> np.ndarray:
    """Load an 8-bit RGB PNG as a float64 (H, W, 3) array in [0, 1].

    Byte value v maps to v/255.  Anything that is not an 8-bit RGB PNG
    is rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    with PilImage.open(path) as im:
        if im.format != "PNG":
            raise ValueError(f"unsupported format {im.format!r}, expected PNG: {path}")
        if im.mode != "RGB":
            raise ValueError(
                f"expected 8-bit RGB PNG, got mode {im.mode!r}: {path}"
            )
        data = np.asarray(im, dtype=np.uint8)
    return data.astype(np.float64) / 255.0


def save_image(img: np.ndarray, path: str | Path) -> None:
    """Write an image as 8-bit RGB PNG; v is stored as round-half-up(v*255)."""
    require_image(img)
    # round half up, then clamp (values are in [0,1] so the clamp is a no-op
    # guard against 1.0*255+0.5 -> 255.5 flooring to 255 exactly)
    quantized = np.floor(img * 255.0 + 0.5)
    quantized = np.clip(quantized, 0, 255).astype(np.uint8)
    PilImage.fromarray(quantized, mode="RGB").save(str(path), format="PNG")


# ---------------------------------------------------------------------------
# PFM I/O (grayscale "Pf" variant)
# ---------------------------------------------------------------------------
#
# Layout written by save_depth (the canonical form load_depth round-trips
# byte-exactly):
#
#   b"Pf\n<width> <height>\n-1.0\n"  followed by width*height little-endian
#   IEEE-754 32-bit floats, scanlines ordered bottom-to-top.
#
# Readers accept any negative scale (little-endian) or positive scale
# (big-endian); the scale magnitude is ignored.

def _read_pfm_token(f) -> bytes:
    token = b""
    while True:
        c = f.read(1)
        if not c:
            raise PfmFormatError("unexpected end of file in PFM header")
        if c in b" \t\r\n":
            if token:
                return token
            continue
        token += c


def load_depth(path: str | Path) -> np.ndarray:
    """Read a grayscale PFM file into a float64 (H, W) scalar field.

    Values are kept bit-exact (float32 widened to float64).  Files
    containing NaN or infinity are rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such depth file: {path}")
    with open(path, "rb") as f:
        magic = _read_pfm_token(f)
        if magic == b"PF":
            raise PfmFormatError("color PF files are not supported, expected grayscale Pf")
        if magic != b"Pf":
            raise PfmFormatError(f"bad PFM magic {magic!r}")
        try:
            width = int(_read_pfm_token(f))
            height = int(_read_pfm_token(f))
            scale = float(_read_pfm_token(f))
        except ValueError as exc:
            raise PfmFormatError(f"malformed PFM header in {path}") from exc
        if width < 1 or height < 1:
            raise PfmFormatError(f"bad PFM dimensions {width}x{height}")
        if scale == 0.0:
            raise PfmFormatError("PFM scale must be non-zero")
        endian = "<" if scale < 0 else ">"
        raw = f.read(4 * width * height)
        if len(raw) != 4 * width * height:
            raise PfmFormatError(f"truncated PFM payload in {path}")
    data = np.frombuffer(raw, dtype=np.dtype(endian + "f4")).reshape(height, width)
    if not np.all(np.isfinite(data)):
        raise PfmFormatError(f"PFM file contains NaN/Inf values: {path}")
    # scanlines are stored bottom-to-top
    return data[::-1].astype(np.float64)


def save_depth(field: np.ndarray, path: str | Path) -> None:
    """Write a scalar field as a grayscale little-endian PFM file."""
    require_field(field)
    data = field.astype(np.float32)
    if not np.all(np.isfinite(data)):
        raise ValueError("cannot save NaN/Inf values to PFM")
    height, width = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{width} {height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(data[::-1].astype("<f4").tobytes())


def normalize_depth(raw: np.ndarray, invert: bool = False) -> np.ndarray:
    """Min-max normalize a raw estimator field to a [0, 1] depth map.

    With ``invert`` the output is ``1 - normalized``, for estimators that
    emit inverse depth / disparity (large = near).  The output always
    attains both 0 and 1.  Constant fields are rejected: their
    normalization is undefined.
    """
    require_field(raw, "raw depth")
    lo = float(raw.min())
    hi = float(raw.max())
    if hi == lo:
        raise ValueError("cannot normalize a constant depth field")
    normalized = (raw - lo) / (hi - lo)
    if invert:
        normalized = 1.0 - normalized
    return normalized


# ---------------------------------------------------------------------------
# Gaussian low-pass filtering with replicate (clamp-to-edge) padding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianKernel:
    """Truncated, renormalized 2-D Gaussian held in separable form.

    ``weights1d`` has length ``2*radius + 1`` with ``radius =
    ceil(3*sigma)``; the full kernel is the outer product, so weights are
    non-negative, symmetric and sum to 1.
    """

    sigma: float
    radius: int
    weights1d: np.ndarray

    @property
    def weights2d(self) -> np.ndarray:
        return np.outer(self.weights1d, self.weights1d)


def gaussian_kernel(sigma: float) -> GaussianKernel:
    """Build the truncated 2-D Gaussian filter for a given width in pixels."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(np.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    w /= w.sum()
    return GaussianKernel(sigma=float(sigma), radius=radius, weights1d=w)


def _convolve_axis_replicate(field: np.ndarray, w: np.ndarray, radius: int,
                             axis: int) -> np.ndarray:
    """1-D correlation along one axis with clamp-to-edge indexing."""
    n = field.shape[axis]
    out = np.zeros_like(field)
    idx = np.arange(n)
    for tap in range(-radius, radius + 1):
        src = np.clip(idx - tap, 0, n - 1)
        out += w[tap + radius] * np.take(field, src, axis=axis)
    return out


def _adjoint_axis_replicate(grad: np.ndarray, w: np.ndarray, radius: int,
                            axis: int) -> np.ndarray:
    """Exact transpose of :func:`_convolve_axis_replicate` along one axis."""
    n = grad.shape[axis]
    moved = np.moveaxis(grad, axis, 0)
    out = np.zeros_like(moved)
    idx = np.arange(n)
    for tap in range(-radius, radius + 1):
        src = np.clip(idx - tap, 0, n - 1)
        np.add.at(out, src, w[tap + radius] * moved)
    return np.moveaxis(out, 0, axis)


def convolve_replicate(field: np.ndarray, kernel: GaussianKernel) -> np.ndarray:
    """Low-pass filter a scalar field with replicate-padded convolution.

    out(x) = sum_u k(u) * field(clamp(x - u)).  Weights are a convex
    combination, so constants are preserved and the output range never
    expands beyond [min(field), max(field)].
    """
    require_field(field)
    tmp = _convolve_axis_replicate(field, kernel.weights1d, kernel.radius, axis=0)
    return _convolve_axis_replicate(tmp, kernel.weights1d, kernel.radius, axis=1)


def convolve_adjoint_replicate(grad: np.ndarray, kernel: GaussianKernel) -> np.ndarray:
    """Adjoint of :func:`convolve_replicate` as a linear map.

    Satisfies <convolve(u), v> == <u, adjoint(v)> for all fields u, v; the
    clamped border indices turn into scatter-adds onto edge pixels.
    """
    require_field(grad)
    tmp = _adjoint_axis_replicate(grad, kernel.weights1d, kernel.radius, axis=1)
    return _adjoint_axis_replicate(tmp, kernel.weights1d, kernel.radius, axis=0)


# ---------------------------------------------------------------------------
# Synthetic depth fixtures
# ---------------------------------------------------------------------------

SYNTHETIC_DEPTH_KINDS = ("h-ramp", "v-ramp", "radial", "constant")


def synthetic_depth(kind: str, h: int, w: int, c: float = 0.5) -> np.ndarray:
    """Deterministic depth fixtures standing in for an external estimator.

    ``h-ramp``: d = col/(w-1); ``v-ramp``: d = row/(h-1); ``radial``:
    distance from the image center normalized by the farthest corner;
    ``constant``: every pixel equals ``c``.  Degenerate single-row/column
    ramps are all zeros.
    """
    if h < 1 or w < 1:
        raise ValueError("depth dimensions must be at least 1x1")
    if kind == "h-ramp":
        cols = np.arange(w, dtype=np.float64)
        row = cols / (w - 1) if w > 1 else np.zeros(w)
        return np.tile(row, (h, 1))
    if kind == "v-ramp":
        rows = np.arange(h, dtype=np.float64)
        col = rows / (h - 1) if h > 1 else np.zeros(h)
        return np.tile(col[:, None], (1, w))
    if kind == "radial":
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        dist = np.hypot(yy - cy, xx - cx)
        dmax = dist.max()
        return dist / dmax if dmax > 0 else np.zeros((h, w))
    if kind == "constant":
        if not 0.0 <= c <= 1.0:
            raise ValueError(f"constant depth must lie in [0, 1], got {c}")
        return np.full((h, w), float(c))
    raise ValueError(f"unknown synthetic depth kind {kind!r}, "
                     f"expected one of {SYNTHETIC_DEPTH_KINDS}")
