"""Trajectory alignment, error metrics and synthetic ground truth."""

from .ate import AlignmentError, AteReport, Trajectory, associate, compute_ate, umeyama_align
from .synthetic import (
    PRESETS,
    SyntheticDataset,
    SyntheticScene,
    default_camera,
    drift_corrections,
    generate_synthetic,
    render_image,
)

__all__ = [
    "AlignmentError",
    "AteReport",
    "PRESETS",
    "SyntheticDataset",
    "SyntheticScene",
    "Trajectory",
    "associate",
    "compute_ate",
    "default_camera",
    "drift_corrections",
    "generate_synthetic",
    "render_image",
    "umeyama_align",
]
