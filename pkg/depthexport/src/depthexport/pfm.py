"""Grayscale PFM writing, matching the hazeattack on-disk convention:

    b"Pf\\n<width> <height>\\n-1.0\\n" + width*height little-endian
    float32, scanlines ordered bottom-to-top.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def write_pfm(field: np.ndarray, path: str | Path) -> None:
    if field.ndim != 2:
        raise ValueError(f"expected a 2-D field, got shape {field.shape}")
    data = np.asarray(field, dtype=np.float32)
    if not np.all(np.isfinite(data)):
        raise ValueError("cannot write NaN/Inf values to PFM")
    height, width = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{width} {height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(data[::-1].astype("<f4").tobytes())


def read_pfm(path: str | Path) -> np.ndarray:
    """Reader for round-trip checks (canonical little-endian form only)."""
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise ValueError(f"not a grayscale PFM file: {path}")
        width, height = map(int, f.readline().split())
        scale = float(f.readline())
        if scale >= 0:
            raise ValueError("expected little-endian PFM (negative scale)")
        data = np.frombuffer(f.read(4 * width * height), dtype="<f4")
    return data.reshape(height, width)[::-1].astype(np.float64)
