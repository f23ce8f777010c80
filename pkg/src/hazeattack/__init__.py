"""Physically-modeled haze synthesis and constrained haze-parameter
attacks against image classifiers, with an evaluation harness for
success rate, transferability, and attack-correlation studies."""

from .attack import (
    AttackConfig,
    AttackResult,
    attack_hadvhaze,
    attack_iadvhaze,
    baseline_fgsm,
    baseline_ifgsm,
    baseline_mifgsm,
)
from .hazemodel import HazeFields, HazeScalars, haze_forward, haze_homogeneous
from .imagecore import (
    gaussian_kernel,
    load_depth,
    load_image,
    normalize_depth,
    save_depth,
    save_image,
    synthetic_depth,
)

__all__ = [
    "AttackConfig",
    "AttackResult",
    "attack_hadvhaze",
    "attack_iadvhaze",
    "baseline_fgsm",
    "baseline_ifgsm",
    "baseline_mifgsm",
    "HazeFields",
    "HazeScalars",
    "haze_forward",
    "haze_homogeneous",
    "gaussian_kernel",
    "load_depth",
    "load_image",
    "normalize_depth",
    "save_depth",
    "save_image",
    "synthetic_depth",
]

__version__ = "0.1.0"
