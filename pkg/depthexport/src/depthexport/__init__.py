"""Offline batch tool converting images into normalized PFM depth maps
with an off-the-shelf monocular depth estimator."""

from .estimators import EstimatorError, SUPPORTED_VARIANTS, make_estimator
from .export import DepthExportConfig, export_depth

__all__ = [
    "DepthExportConfig",
    "EstimatorError",
    "SUPPORTED_VARIANTS",
    "export_depth",
    "make_estimator",
]

__version__ = "0.1.0"
