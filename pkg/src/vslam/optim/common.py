"""Shared pieces of the least-squares back-end: config, kernels, bearing residuals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry.transforms import hat_many


class OptimizationError(RuntimeError):
    """Solver could not produce a valid step (singular system or divergence)."""


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 20
    initial_damping: float = 1e-4
    gradient_tol: float = 1e-12
    cost_tol: float = 1e-12
    step_tol: float = 1e-14
    huber_delta: float = 1.5
    max_damping: float = 1e16

    def __post_init__(self):
        for name in ("max_iterations", "initial_damping", "gradient_tol", "cost_tol", "huber_delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class LMHistory:
    costs: list = field(default_factory=list)
    accepted: int = 0
    rejected: int = 0
    stalled: bool = False
    final_gradient: float = 0.0
    predicted_decrease: float = 0.0  # Gauss-Newton model decrease at the stall point


def huber(e2, delta):
    """Robust cost and IRLS weight for squared whitened errors."""
    e = np.sqrt(e2)
    inside = e <= delta
    cost = np.where(inside, e2, 2.0 * delta * e - delta * delta)
    weight = np.where(inside, 1.0, delta / np.maximum(e, 1e-300))
    return cost, weight


def tangent_basis(b):
    """Orthonormal (..., 3, 2) bases of the planes orthogonal to unit vectors ``b``."""
    b = np.asarray(b, dtype=float)
    helper = np.zeros_like(b)
    ax = np.argmin(np.abs(b), axis=-1)
    np.put_along_axis(helper, ax[..., None], 1.0, axis=-1)
    e1 = np.cross(b, helper)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(b, e1)
    return np.stack([e1, e2], axis=-1)


def bearing_residuals(pc, basis, inv_sigma):
    """Whitened angular residuals of camera-frame points against observed bearings.

    Returns r (K, 2) and dr_dp (K, 2, 3). The residual is the observed
    tangent-plane component of the predicted unit bearing, about the angle
    for small errors.
    """
    norm = np.linalg.norm(pc, axis=-1)
    n = pc / norm[:, None]
    Bt = np.swapaxes(basis, -1, -2)
    r = np.einsum("kij,kj->ki", Bt, n) * inv_sigma[:, None]
    P = (np.eye(3) - n[:, :, None] * n[:, None, :]) / norm[:, None, None]
    dr_dp = Bt @ P * inv_sigma[:, None, None]
    return r, dr_dp


def observed_front(pc, bearings):
    return np.sum(pc * bearings, axis=-1) > 0


def pose_jacobian(pc, dr_dp):
    """dr/d(rho, phi) for the left-perturbation pose update exp(delta) T."""
    J = np.empty(dr_dp.shape[:-1] + (6,))
    J[..., :3] = dr_dp
    J[..., 3:] = -dr_dp @ hat_many(pc)
    return J


def damped_solve(H, g, lam):
    """Solve (H + lam * diag(H)) dx = -g, raising on a singular system."""
    D = np.diag(H).copy()
    D = np.maximum(D, 1e-12 * max(1.0, float(D.max(initial=0.0))))
    A = H + lam * np.diag(D)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return None
    y = np.linalg.solve(L, -g)
    return np.linalg.solve(L.T, y)


def levenberg_marquardt(state, linearize, evaluate, retract, cfg: SolverConfig, solve=None):
    """Levenberg-Marquardt loop.

    ``linearize(state) -> (system, g, cost)``, ``evaluate(state) -> cost``,
    ``retract(state, dx) -> state``, ``solve(system, g, lam) -> dx | None``
    (default: ``system`` is the dense normal matrix). Damping grows x10 on a
    rejected step and shrinks x0.5 on an accepted one; accepted steps strictly
    decrease cost.
    """
    solve = solve or damped_solve
    H, g, cost = linearize(state)
    if not np.isfinite(cost):
        raise OptimizationError("non-finite initial cost")
    hist = LMHistory(costs=[cost])
    lam = cfg.initial_damping
    for _ in range(cfg.max_iterations):
        if np.max(np.abs(g), initial=0.0) < cfg.gradient_tol:
            break
        while True:
            dx = solve(H, g, lam)
            if dx is not None:
                cand = retract(state, dx)
                new_cost = evaluate(cand)
                if np.isfinite(new_cost) and new_cost < cost:
                    break
            hist.rejected += 1
            lam *= 10.0
            if lam > cfg.max_damping:
                hist.stalled = True
                hist.final_gradient = float(np.max(np.abs(g)))
                dx = solve(H, g, cfg.initial_damping)
                hist.predicted_decrease = float("inf") if dx is None else max(0.0, -0.5 * float(np.dot(g, dx)))
                return state, hist
        hist.accepted += 1
        rel = (cost - new_cost) / max(cost, 1e-300)
        state = cand
        lam = max(lam * 0.5, 1e-15)
        H, g, cost = linearize(state)
        hist.costs.append(cost)
        if rel < cfg.cost_tol or np.linalg.norm(dx) < cfg.step_tol:
            break
    hist.final_gradient = float(np.max(np.abs(g), initial=0.0))
    return state, hist


def diverged(hist: LMHistory) -> bool:
    """Damping hit its cap although the local model still promised real progress."""
    final = hist.costs[-1] if hist.costs else 0.0
    return hist.stalled and hist.predicted_decrease > 1e-8 * (1.0 + final)
