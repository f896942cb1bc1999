"""Pipeline settings, tracking states and per-frame results."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..features.matching import MatchParams
from ..features.orb import FeatureParams
from ..geometry.multiview import PnPParams, Sim3RansacParams, TwoViewParams
from ..geometry.transforms import SE3Pose
from ..io.config import Config


class TrackingState(Enum):
    NOT_INITIALIZED = "NotInitialized"
    TRACKING = "Tracking"
    LOST = "Lost"


class Mode(Enum):
    MAPPING = "mapping"
    LOCALIZATION_ONLY = "localization_only"


@dataclass
class FrameResult:
    timestamp: float
    pose: SE3Pose | None
    state: TrackingState
    matches: int = 0
    inliers: int = 0
    keyframe_inserted: bool = False
    keyframe_id: int | None = None
    landmark_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64), repr=False)
    map_version: int = 0

    @property
    def tracked(self):
        return self.state is TrackingState.TRACKING


@dataclass(frozen=True)
class PipelineParams:
    feature: FeatureParams = FeatureParams()
    match: MatchParams = MatchParams()
    two_view: TwoViewParams = TwoViewParams()
    seed: int = 0
    ransac_iterations: int = 200
    ba_iterations: int = 20
    posegraph_iterations: int = 20
    huber_delta_deg: float | None = None
    kf_max_interval: int = 30
    kf_tracked_ratio: float = 0.9
    kf_min_tracked: int = 15
    tracking_min_inliers: int = 30
    local_map_cap: int = 60
    loop_enabled: bool = True
    loop_min_inliers: int = 20
    essential_min_weight: int = 100

    @classmethod
    def from_config(cls, cfg: Config) -> "PipelineParams":
        return cls(
            feature=FeatureParams(
                max_keypoints=cfg["feature.max_keypoints"],
                scale_factor=cfg["feature.scale_factor"],
                num_levels=cfg["feature.num_levels"],
                fast_threshold=cfg["feature.fast_threshold"],
            ),
            match=MatchParams(ratio=cfg["matching.ratio"], max_hamming=cfg["matching.max_hamming"]),
            two_view=TwoViewParams(
                iterations=cfg["ransac.iterations"],
                epipolar_threshold_deg=cfg["init.epipolar_threshold_deg"],
                min_inliers=cfg["init.min_inliers"],
                min_parallax_deg=cfg["init.min_parallax_deg"],
            ),
            seed=cfg["ransac.seed"],
            ransac_iterations=cfg["ransac.iterations"],
            ba_iterations=cfg["ba.max_iterations"],
            posegraph_iterations=cfg["posegraph.max_iterations"],
            huber_delta_deg=cfg["ba.huber_delta_deg"],
            kf_max_interval=cfg["keyframe.max_interval"],
            kf_tracked_ratio=cfg["keyframe.tracked_ratio"],
            kf_min_tracked=cfg["keyframe.min_tracked"],
            tracking_min_inliers=cfg["tracking.min_inliers"],
            local_map_cap=cfg["localmap.max_keyframes"],
            loop_enabled=cfg["loop.enabled"],
            loop_min_inliers=cfg["loop.min_inliers"],
            essential_min_weight=cfg["loop.essential_min_weight"],
        )

    def huber_delta(self, pixel_angle) -> float:
        """Huber width in whitened units (multiples of the base sigma)."""
        if self.huber_delta_deg is None:
            return 1.5
        return self.huber_delta_deg / np.rad2deg(pixel_angle)

    def pnp(self, pixel_angle) -> PnPParams:
        return PnPParams(iterations=self.ransac_iterations, threshold_deg=float(np.rad2deg(4.0 * pixel_angle)))

    def sim3(self, pixel_angle) -> Sim3RansacParams:
        return Sim3RansacParams(
            iterations=self.ransac_iterations,
            threshold_deg=float(np.rad2deg(4.0 * pixel_angle)),
            min_inliers=self.loop_min_inliers,
        )
