"""Motion-only bundle adjustment: one camera pose against fixed landmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry.transforms import SE3Pose
from .common import (
    OptimizationError,
    SolverConfig,
    bearing_residuals,
    diverged,
    huber,
    levenberg_marquardt,
    observed_front,
    pose_jacobian,
    tangent_basis,
)

MOTION_CONFIG = SolverConfig(max_iterations=10)


@dataclass
class MotionResult:
    pose: SE3Pose
    inliers: np.ndarray
    errors: np.ndarray
    costs: list


def _make_problem(points, bearings, inv_sigma, active, delta, robust=True):
    basis = tangent_basis(bearings)
    pts, B, isg = points[active], basis[active], inv_sigma[active]

    def evaluate(pose):
        pc = pose.apply(pts)
        r, _ = bearing_residuals(pc, B, isg)
        e2 = np.sum(r * r, axis=1)
        if robust:
            e2, _ = huber(e2, delta)
        return float(e2.sum())

    def linearize(pose):
        pc = pose.apply(pts)
        r, dr_dp = bearing_residuals(pc, B, isg)
        e2 = np.sum(r * r, axis=1)
        if robust:
            cost, w = huber(e2, delta)
        else:
            cost, w = e2, np.ones_like(e2)
        J = pose_jacobian(pc, dr_dp)
        H = np.einsum("kai,k,kaj->ij", J, w, J)
        g = np.einsum("kai,k,ka->i", J, w, r)
        return H, g, float(cost.sum())

    return linearize, evaluate


def whitened_errors(pose, points, bearings, inv_sigma):
    pc = pose.apply(points)
    r, _ = bearing_residuals(pc, tangent_basis(bearings), inv_sigma)
    e = np.linalg.norm(r, axis=1)
    return np.where(observed_front(pc, bearings), e, np.inf)


def solve_motion_only(
    pose0: SE3Pose,
    points,
    bearings,
    sigmas,
    cfg: SolverConfig = MOTION_CONFIG,
    rounds: int = 4,
    outlier_threshold: float | None = None,
) -> MotionResult:
    """Optimize one world->camera pose against fixed landmarks.

    ``sigmas`` are per-observation angular standard deviations (radians).
    Each round runs LM on the current inlier set, then every observation is
    re-classified; those with whitened error above ``outlier_threshold``
    (default: the Huber width) or behind the camera are outliers.
    """
    points = np.asarray(points, dtype=float)
    bearings = np.asarray(bearings, dtype=float)
    inv_sigma = 1.0 / np.asarray(sigmas, dtype=float) * np.ones(len(points))
    if len(points) < 3:
        raise OptimizationError("motion-only BA needs at least 3 observations")
    thr = cfg.huber_delta if outlier_threshold is None else outlier_threshold

    pose = pose0
    inliers = np.ones(len(points), dtype=bool)
    costs = []
    for _ in range(max(1, rounds)):
        if inliers.sum() < 3:
            break
        linearize, evaluate = _make_problem(points, bearings, inv_sigma, inliers, cfg.huber_delta)
        pose, hist = levenberg_marquardt(pose, linearize, evaluate, SE3Pose.left_perturb, cfg)
        costs.extend(hist.costs)
        if diverged(hist):
            raise OptimizationError("motion-only optimization diverged")
        errors = whitened_errors(pose, points, bearings, inv_sigma)
        new = errors <= thr
        if np.array_equal(new, inliers):
            break
        inliers = new
    errors = whitened_errors(pose, points, bearings, inv_sigma)
    return MotionResult(pose, errors <= thr, errors, costs)


def refine_pose_angular(pose0: SE3Pose, bearings, points, iterations=10) -> SE3Pose:
    """Plain (non-robust) angular least squares on a trusted inlier set."""
    bearings = np.asarray(bearings, dtype=float)
    points = np.asarray(points, dtype=float)
    inv_sigma = np.ones(len(points))
    active = np.ones(len(points), dtype=bool)
    linearize, evaluate = _make_problem(points, bearings, inv_sigma, active, 1.0, robust=False)
    cfg = SolverConfig(max_iterations=iterations, gradient_tol=1e-15, cost_tol=1e-15)
    pose, _ = levenberg_marquardt(pose0, linearize, evaluate, SE3Pose.left_perturb, cfg)
    return pose
