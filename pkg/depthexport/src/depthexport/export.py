"""Batch conversion of an image directory into normalized PFM depth maps."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PilImage

from .estimators import make_estimator
from .pfm import write_pfm

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class DepthExportConfig:
    input_dir: str
    output_dir: str
    model_variant: str = "dark-channel"
    invert: bool | None = None   # None: follow the estimator's convention
    device: str = "cpu"


def _load_rgb(path: Path) -> np.ndarray:
    with PilImage.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def _resize_field(field: np.ndarray, height: int, width: int) -> np.ndarray:
    if field.shape == (height, width):
        return field
    resized = PilImage.fromarray(field.astype(np.float32), mode="F").resize(
        (width, height), resample=PilImage.BILINEAR)
    return np.asarray(resized, dtype=np.float64)


def _normalize(raw: np.ndarray) -> np.ndarray:
    lo, hi = float(raw.min()), float(raw.max())
    if hi == lo:
        raise ValueError("estimator produced a constant field")
    return (raw - lo) / (hi - lo)


def export_depth(cfg: DepthExportConfig) -> dict:
    """Estimate, normalize, and write one PFM per input image.

    Per-image failures are logged and skipped; the manifest's ``entries``
    list covers exactly the files that were written.
    """
    input_dir = Path(cfg.input_dir)
    output_dir = Path(cfg.output_dir)
    if not input_dir.is_dir():
        raise FileNotFoundError(f"input directory does not exist: {input_dir}")
    output_dir.mkdir(parents=True, exist_ok=True)

    estimator = make_estimator(cfg.model_variant, device=cfg.device)
    invert_output = (estimator.emits_inverse_depth if cfg.invert is None
                     else cfg.invert)

    entries = []
    failures = []
    images = sorted(p for p in input_dir.iterdir()
                    if p.suffix.lower() == ".png")
    for path in images:
        try:
            img = _load_rgb(path)
            raw = estimator.estimate(img)
            raw = _resize_field(raw, img.shape[0], img.shape[1])
            depth = _normalize(raw)
            if invert_output:
                depth = 1.0 - depth
            out_path = output_dir / (path.stem + ".pfm")
            write_pfm(depth, out_path)
            entries.append({"image": path.name, "depth": out_path.name,
                            "estimator-variant": cfg.model_variant,
                            "invert": invert_output})
        except Exception as exc:
            log.warning("skipping %s: %s", path.name, exc)
            failures.append({"image": path.name, "error": str(exc)})

    manifest = {
        "version": 1,
        "variant": cfg.model_variant,
        "invert": invert_output,
        "entries": entries,
        "failures": failures,
    }
    (output_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2))
    return manifest
