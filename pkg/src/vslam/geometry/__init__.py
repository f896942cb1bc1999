"""Rigid and similarity transforms plus multi-view solvers on bearing vectors."""

from .multiview import (
    DegenerateMotionError,
    InitializationError,
    PnPParams,
    RelocalizationError,
    Sim3RansacParams,
    TwoViewParams,
    TwoViewResult,
    angular_errors,
    decompose_essential,
    epipolar_angles,
    essential_8point,
    estimate_relative_pose_ransac,
    estimate_sim3_ransac,
    p3p_grunert,
    parallax_deg,
    solve_pnp_ransac,
    triangulate,
    triangulate_many,
    umeyama,
)
from .transforms import SE3Pose, Sim3Transform, hat, quat_to_matrix, matrix_to_quat, rotation_distance, so3_exp, so3_log

__all__ = [
    "DegenerateMotionError",
    "InitializationError",
    "PnPParams",
    "RelocalizationError",
    "SE3Pose",
    "Sim3RansacParams",
    "Sim3Transform",
    "TwoViewParams",
    "TwoViewResult",
    "angular_errors",
    "decompose_essential",
    "epipolar_angles",
    "essential_8point",
    "estimate_relative_pose_ransac",
    "estimate_sim3_ransac",
    "hat",
    "matrix_to_quat",
    "p3p_grunert",
    "parallax_deg",
    "quat_to_matrix",
    "rotation_distance",
    "so3_exp",
    "so3_log",
    "solve_pnp_ransac",
    "triangulate",
    "triangulate_many",
    "umeyama",
]
