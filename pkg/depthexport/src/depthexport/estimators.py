"""Monocular depth estimators.

Every estimator maps an RGB image in [0, 1] to a raw 2-D field of
relative depth scores and declares whether its raw output is inverse
depth (large = near) or direct depth (large = far).  The export step
min-max normalizes per image and flips inverse outputs, so downstream
consumers always see direct normalized depth in [0, 1].
"""

from __future__ import annotations

import numpy as np


class EstimatorError(RuntimeError):
    """Raised when an estimator cannot be loaded or evaluated."""


def _dark_channel(img: np.ndarray, patch: int) -> np.ndarray:
    """Per-pixel channel minimum, eroded over a patch neighborhood."""
    dark = img.min(axis=2)
    h, w = dark.shape
    r = patch // 2
    padded = np.pad(dark, r, mode="edge")
    out = np.full((h, w), np.inf)
    for dy in range(patch):
        for dx in range(patch):
            out = np.minimum(out, padded[dy:dy + h, dx:dx + w])
    return out


class DarkChannelEstimator:
    """Classical single-image haze prior turned into a depth proxy.

    The dark channel estimates transmission t ~ 1 - omega * dark/A
    (A = atmospheric light from the brightest dark-channel region);
    depth then follows from t = exp(-beta * d) as d ~ -log t.  Emits
    direct relative depth.
    """

    name = "dark-channel"
    emits_inverse_depth = False

    def __init__(self, patch: int = 7, omega: float = 0.95, t_floor: float = 0.05):
        self.patch = patch
        self.omega = omega
        self.t_floor = t_floor

    def estimate(self, img: np.ndarray) -> np.ndarray:
        dark = _dark_channel(img, self.patch)
        # atmospheric light: mean color over the brightest dark-channel percentile
        flat = dark.ravel()
        count = max(1, flat.size // 1000)
        idx = np.argpartition(flat, -count)[-count:]
        brightest = img.reshape(-1, 3)[idx]
        atmosphere = max(float(brightest.mean()), 1e-3)
        transmission = 1.0 - self.omega * dark / atmosphere
        transmission = np.clip(transmission, self.t_floor, 1.0)
        return -np.log(transmission)


class LuminanceEstimator:
    """Crude aerial-perspective heuristic: hazier (brighter, flatter)
    regions read as farther away.  Emits direct relative depth."""

    name = "luminance"
    emits_inverse_depth = False

    def __init__(self, smooth: int = 9):
        self.smooth = smooth

    def estimate(self, img: np.ndarray) -> np.ndarray:
        luma = img @ np.array([0.299, 0.587, 0.114])
        h, w = luma.shape
        r = self.smooth // 2
        padded = np.pad(luma, r, mode="edge")
        acc = np.zeros((h, w))
        for dy in range(self.smooth):
            for dx in range(self.smooth):
                acc += padded[dy:dy + h, dx:dx + w]
        return acc / (self.smooth * self.smooth)


class MidasEstimator:
    """Pretrained monocular depth network via torch.hub.

    Needs torch plus network access (or a warm hub cache) to fetch the
    model weights; otherwise raises EstimatorError.  Emits inverse
    relative depth, as that model family does.
    """

    name = "midas"
    emits_inverse_depth = True

    def __init__(self, device: str = "cpu", variant: str = "MiDaS_small"):
        self.device = device
        try:
            import torch  # noqa: F401  (lazy; only this estimator needs it)
        except ImportError as exc:
            raise EstimatorError("midas estimator requires torch") from exc
        import torch
        try:
            self._model = torch.hub.load("intel-isl/MiDaS", variant,
                                         trust_repo=True)
            transforms = torch.hub.load("intel-isl/MiDaS", "transforms",
                                        trust_repo=True)
        except Exception as exc:
            raise EstimatorError(
                f"could not load the pretrained depth model: {exc}") from exc
        self._transform = transforms.small_transform
        self._model.to(device).eval()
        self._torch = torch

    def estimate(self, img: np.ndarray) -> np.ndarray:
        torch = self._torch
        batch = self._transform((img * 255).astype(np.uint8)).to(self.device)
        with torch.no_grad():
            pred = self._model(batch)
        return pred.squeeze().cpu().numpy().astype(np.float64)


_ESTIMATORS = {
    "dark-channel": DarkChannelEstimator,
    "luminance": LuminanceEstimator,
    "midas": MidasEstimator,
}

SUPPORTED_VARIANTS = tuple(_ESTIMATORS)


def make_estimator(variant: str, device: str = "cpu"):
    if variant not in _ESTIMATORS:
        raise EstimatorError(
            f"unknown estimator variant {variant!r}; supported: {SUPPORTED_VARIANTS}")
    if variant == "midas":
        return MidasEstimator(device=device)
    return _ESTIMATORS[variant]()
