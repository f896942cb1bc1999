"""Least-squares back-end: motion-only, local and global BA, Sim3 pose graph."""

from .ba import BAProblem, BAResult, rms_angular_error, solve_ba_dense, solve_global_ba, solve_local_ba
from .common import LMHistory, OptimizationError, SolverConfig, huber, levenberg_marquardt
from .motion import MOTION_CONFIG, MotionResult, refine_pose_angular, solve_motion_only
from .posegraph import (
    POSEGRAPH_CONFIG,
    DisconnectedGraphError,
    PoseGraphResult,
    Sim3Edge,
    check_connected,
    edge_residual,
    loop_composition_error,
    solve_pose_graph_sim3,
)

__all__ = [
    "BAProblem",
    "BAResult",
    "DisconnectedGraphError",
    "LMHistory",
    "MOTION_CONFIG",
    "MotionResult",
    "OptimizationError",
    "POSEGRAPH_CONFIG",
    "PoseGraphResult",
    "Sim3Edge",
    "SolverConfig",
    "check_connected",
    "edge_residual",
    "huber",
    "levenberg_marquardt",
    "loop_composition_error",
    "refine_pose_angular",
    "rms_angular_error",
    "solve_ba_dense",
    "solve_global_ba",
    "solve_local_ba",
    "solve_motion_only",
    "solve_pose_graph_sim3",
]
