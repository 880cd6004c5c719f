"""Desk-scale infrared small-target detection laboratory.

Synthetic scene generation, mosaic/degradation/diffusion data
augmentation, classical and neural detectors, and segmentation metrics,
all deterministic under explicit seeds.
"""

from .rng import Rng, derive_seed
from .image_core import (
    GrayImage,
    BinaryMask,
    gaussian_blur,
    resize_bilinear,
    add_gaussian_noise,
    connected_components,
    quadrant_stats,
)
from .synth import SceneSpec, Sample, synth_background, inject_targets, make_dataset
from .metrics import MetricSet, pixel_iou, pd_fa, evaluate_set

__version__ = "0.1.0"

__all__ = [
    "Rng", "derive_seed",
    "GrayImage", "BinaryMask", "gaussian_blur", "resize_bilinear",
    "add_gaussian_noise", "connected_components", "quadrant_stats",
    "SceneSpec", "Sample", "synth_background", "inject_targets", "make_dataset",
    "MetricSet", "pixel_iou", "pd_fa", "evaluate_set",
    "__version__",
]
