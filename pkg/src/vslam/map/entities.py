"""Keyframes and landmarks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..features.matching import hamming_matrix
from ..features.orb import FeatureFrame
from ..geometry.transforms import SE3Pose


@dataclass(eq=False)
class Keyframe:
    id: int
    timestamp: float
    pose: SE3Pose  # world -> camera
    features: FeatureFrame
    landmark_ids: np.ndarray = None  # per keypoint, -1 when unlinked
    camera_id: int = 0
    bow: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.landmark_ids is None:
            self.landmark_ids = np.full(len(self.features), -1, dtype=np.int64)
        self.landmark_ids = np.array(self.landmark_ids, dtype=np.int64).reshape(-1)
        if len(self.landmark_ids) != len(self.features):
            raise ValueError("landmark links must match the keypoint count")

    @property
    def center(self):
        return self.pose.center

    def linked(self):
        """(keypoint indices, landmark ids) of linked keypoints."""
        idx = np.nonzero(self.landmark_ids >= 0)[0]
        return idx, self.landmark_ids[idx]

    def sigmas(self, pixel_angle, idx=None):
        octv = self.features.octave if idx is None else self.features.octave[idx]
        return pixel_angle * self.features.scale_factor ** octv.astype(float)


@dataclass(eq=False)
class Landmark:
    id: int
    position: np.ndarray
    descriptor: np.ndarray
    ref_keyframe: int
    first_keyframe: int
    observations: dict = field(default_factory=dict)  # keyframe id -> keypoint index
    found: int = 1
    visible: int = 1

    def __post_init__(self):
        self.position = np.array(self.position, dtype=float).reshape(3)
        self.descriptor = np.array(self.descriptor, dtype=np.uint8).reshape(32)

    @property
    def found_ratio(self):
        return self.found / max(self.visible, 1)


def representative_descriptor(descs):
    """Member with the smallest median Hamming distance to the others."""
    descs = np.asarray(descs, dtype=np.uint8).reshape(-1, 32)
    if len(descs) <= 2:
        return descs[0].copy()
    d = hamming_matrix(descs, descs)
    return descs[int(np.argmin(np.median(d, axis=1)))].copy()
