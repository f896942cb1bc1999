"""Bundle adjustment over keyframe poses and landmark positions.

The production path eliminates landmarks with the Schur complement and solves
the reduced camera system; :func:`solve_ba_dense` assembles the full normal
equations and exists as an independent reference for testing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

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


@dataclass
class BAProblem:
    """Poses are world->camera. Observation k says camera ``cam[k]`` sees
    point ``pt[k]`` along ``bearings[k]`` with angular std ``sigmas[k]``."""

    poses: list
    fixed: np.ndarray
    points: np.ndarray
    cam: np.ndarray
    pt: np.ndarray
    bearings: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        self.fixed = np.asarray(self.fixed, dtype=bool)
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.cam = np.asarray(self.cam, dtype=np.int64)
        self.pt = np.asarray(self.pt, dtype=np.int64)
        self.bearings = np.asarray(self.bearings, dtype=float).reshape(-1, 3)
        self.sigmas = np.asarray(self.sigmas, dtype=float) * np.ones(len(self.cam))
        if len(self.fixed) != len(self.poses):
            raise ValueError("fixed mask must match the pose list")
        if len(self.cam) and (self.cam.max() >= len(self.poses) or self.pt.max() >= len(self.points)):
            raise ValueError("observation references a missing pose or point")


@dataclass
class BAResult:
    poses: list
    points: np.ndarray
    costs: list
    errors: np.ndarray
    iterations: int = 0
    history: list = field(default_factory=list)


class _Layout:
    def __init__(self, prob: BAProblem):
        self.var_cams = np.nonzero(~prob.fixed)[0]
        self.n = len(self.var_cams)
        self.m = len(prob.points)
        self.slot = np.full(len(prob.poses), -1)
        self.slot[self.var_cams] = np.arange(self.n)
        self.basis = tangent_basis(prob.bearings)
        self.inv_sigma = 1.0 / prob.sigmas
        self.size = 6 * self.n + 3 * self.m

    def split(self, dx):
        return dx[: 6 * self.n].reshape(self.n, 6), dx[6 * self.n :].reshape(self.m, 3)


def _block_sum(index, blocks, count):
    """Sum (P, a, b) blocks into ``count`` bins, deterministic (bincount)."""
    P, a, b = blocks.shape
    flat = (index[:, None] * (a * b) + np.arange(a * b)[None, :]).ravel()
    out = np.bincount(flat, weights=blocks.reshape(P, a * b).ravel(), minlength=count * a * b)
    return out.reshape(count, a, b)


def _residuals(prob, lay, state):
    poses, points = state
    R = np.stack([p.R for p in poses])
    t = np.stack([p.t for p in poses])
    X = points[prob.pt]
    pc = np.einsum("kij,kj->ki", R[prob.cam], X) + t[prob.cam]
    r, dr_dp = bearing_residuals(pc, lay.basis, lay.inv_sigma)
    return pc, r, dr_dp, R


def _cost(prob, lay, state, delta):
    _, r, _, _ = _residuals(prob, lay, state)
    cost, _ = huber(np.sum(r * r, axis=1), delta)
    return float(cost.sum())


def _retract(lay):
    def retract(state, dx):
        poses, points = state
        dp, dl = lay.split(dx)
        new = list(poses)
        for i, c in enumerate(lay.var_cams):
            new[c] = poses[c].left_perturb(dp[i])
        return new, points + dl

    return retract


def _jacobians(prob, lay, state, delta):
    pc, r, dr_dp, R = _residuals(prob, lay, state)
    cost, w = huber(np.sum(r * r, axis=1), delta)
    Jc = pose_jacobian(pc, dr_dp)
    Jl = dr_dp @ R[prob.cam]
    return r, w, Jc, Jl, float(cost.sum())


def _diag_floor(Hpp, Hll):
    d = np.concatenate([np.diagonal(Hpp, axis1=1, axis2=2).ravel(), np.diagonal(Hll, axis1=1, axis2=2).ravel()])
    return 1e-12 * max(1.0, float(d.max(initial=0.0)))


def solve_local_ba(prob: BAProblem, cfg: SolverConfig | None = None) -> BAResult:
    """Joint LM over the non-fixed poses and all points, Schur-eliminating points.

    Fixed poses are never touched. Returns new poses/points; the problem is
    not modified. Raises :class:`OptimizationError` if the reduced system
    stays singular at the damping cap.
    """
    cfg = cfg or SolverConfig()
    if not prob.fixed.any():
        raise OptimizationError("at least one pose must be fixed to set the gauge")
    lay = _Layout(prob)
    delta = cfg.huber_delta
    var_obs = lay.slot[prob.cam] >= 0

    # ordered pairs of variable-camera observations sharing a point
    vf = np.nonzero(var_obs)[0]
    order = vf[np.argsort(prob.pt[vf], kind="stable")]
    counts = np.bincount(prob.pt[order], minlength=lay.m)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    k_of = counts[prob.pt[order]]
    I = np.repeat(np.arange(len(order)), k_of)
    block_start = np.repeat(np.cumsum(k_of) - k_of, k_of)
    J = starts[prob.pt[order]][I] + (np.arange(len(I)) - block_start)
    fI, fJ = order[I], order[J]
    pair_bin = lay.slot[prob.cam[fI]] * lay.n + lay.slot[prob.cam[fJ]]

    def linearize(state):
        r, w, Jc, Jl, cost = _jacobians(prob, lay, state, delta)
        wr = w[:, None] * r
        Hll = _block_sum(prob.pt, np.einsum("kai,k,kaj->kij", Jl, w, Jl), lay.m)
        gl = _block_sum(prob.pt, np.einsum("kai,ka->ki", Jl, wr)[:, :, None], lay.m)[:, :, 0]
        cs = lay.slot[prob.cam[vf]]
        Hpp = _block_sum(cs, np.einsum("kai,k,kaj->kij", Jc[vf], w[vf], Jc[vf]), lay.n)
        gp = _block_sum(cs, np.einsum("kai,ka->ki", Jc[vf], wr[vf])[:, :, None], lay.n)[:, :, 0]
        Hpl = np.zeros((len(prob.cam), 6, 3))
        Hpl[vf] = np.einsum("kai,k,kaj->kij", Jc[vf], w[vf], Jl[vf])
        g = np.concatenate([gp.ravel(), gl.ravel()])
        return (Hpp, Hll, Hpl, gp, gl), g, cost

    def solve(system, g, lam):
        Hpp, Hll, Hpl, gp, gl = system
        floor = _diag_floor(Hpp, Hll)
        eye3, eye6 = np.eye(3), np.eye(6)
        Dl = np.maximum(np.diagonal(Hll, axis1=1, axis2=2), floor)
        C = Hll + lam * Dl[:, :, None] * eye3
        try:
            Cinv = np.linalg.inv(C)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(Cinv)):
            return None
        Dp = np.maximum(np.diagonal(Hpp, axis1=1, axis2=2), floor)
        A = Hpp + lam * Dp[:, :, None] * eye6
        W = np.zeros_like(Hpl)
        W[vf] = Hpl[vf] @ Cinv[prob.pt[vf]]
        S = _block_sum(np.arange(lay.n) * lay.n + np.arange(lay.n), A, lay.n * lay.n)
        if len(fI):
            S -= _block_sum(pair_bin, W[fI] @ np.swapaxes(Hpl[fJ], 1, 2), lay.n * lay.n)
        S = S.reshape(lay.n, lay.n, 6, 6).transpose(0, 2, 1, 3).reshape(6 * lay.n, 6 * lay.n)
        rhs = -gp.copy()
        if len(vf):
            rhs += _block_sum(
                lay.slot[prob.cam[vf]], (W[vf] @ gl[prob.pt[vf]][:, :, None]), lay.n
            )[:, :, 0]
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            return None
        dp = np.linalg.solve(L.T, np.linalg.solve(L, rhs.ravel())).reshape(lay.n, 6)
        # back-substitution: C dl = -gl - Hpl^T dp
        bl = -gl.copy()
        if len(vf):
            contrib = np.swapaxes(Hpl[vf], 1, 2) @ dp[lay.slot[prob.cam[vf]]][:, :, None]
            bl -= _block_sum(prob.pt[vf], contrib, lay.m)[:, :, 0]
        dl = (Cinv @ bl[:, :, None])[:, :, 0]
        return np.concatenate([dp.ravel(), dl.ravel()])

    return _run(prob, lay, cfg, linearize, solve)


def solve_ba_dense(prob: BAProblem, cfg: SolverConfig | None = None) -> BAResult:
    """Reference BA: full dense Jacobian and normal equations, same LM policy."""
    cfg = cfg or SolverConfig()
    if not prob.fixed.any():
        raise OptimizationError("at least one pose must be fixed to set the gauge")
    lay = _Layout(prob)
    delta = cfg.huber_delta
    K = len(prob.cam)

    def linearize(state):
        r, w, Jc, Jl, cost = _jacobians(prob, lay, state, delta)
        Jfull = np.zeros((K, 2, lay.size))
        rows = np.arange(K)
        s = lay.slot[prob.cam]
        v = s >= 0
        pcols = 6 * s[v, None] + np.arange(6)
        Jfull[rows[v, None, None], np.arange(2)[None, :, None], pcols[:, None, :]] = Jc[v]
        lcols = 6 * lay.n + 3 * prob.pt[:, None] + np.arange(3)
        Jfull[rows[:, None, None], np.arange(2)[None, :, None], lcols[:, None, :]] = Jl
        Jm = Jfull.reshape(2 * K, lay.size)
        wv = np.repeat(w, 2)
        H = Jm.T @ (wv[:, None] * Jm)
        g = Jm.T @ (wv * r.ravel())
        return H, g, cost

    def solve(H, g, lam):
        D = np.maximum(np.diag(H), 1e-12 * max(1.0, float(np.diag(H).max(initial=0.0))))
        try:
            L = np.linalg.cholesky(H + lam * np.diag(D))
        except np.linalg.LinAlgError:
            return None
        return np.linalg.solve(L.T, np.linalg.solve(L, -g))

    return _run(prob, lay, cfg, linearize, solve)


def _run(prob, lay, cfg, linearize, solve):
    state = (list(prob.poses), prob.points.copy())
    if len(prob.cam) == 0 or lay.size == 0:
        return BAResult(list(prob.poses), prob.points.copy(), [0.0], np.zeros(len(prob.cam)))
    evaluate = lambda s: _cost(prob, lay, s, cfg.huber_delta)  # noqa: E731
    state, hist = levenberg_marquardt(state, linearize, evaluate, _retract(lay), cfg, solve=solve)
    if hist.accepted == 0 and diverged(hist):
        raise OptimizationError("bundle adjustment system singular at the damping cap")
    poses, points = state
    pc, r, _, _ = _residuals(prob, lay, state)
    errors = np.where(observed_front(pc, prob.bearings), np.linalg.norm(r, axis=1), np.inf)
    return BAResult(poses, points, hist.costs, errors, hist.accepted)


def solve_global_ba(poses, points, cam, pt, bearings, sigmas, cfg: SolverConfig | None = None, gauge=0):
    """BA over a whole map with pose ``gauge`` held fixed."""
    if len(poses) <= 1:
        return BAResult(list(poses), np.asarray(points, dtype=float).copy(), [0.0], np.zeros(len(cam)))
    fixed = np.zeros(len(poses), dtype=bool)
    fixed[gauge] = True
    return solve_local_ba(BAProblem(list(poses), fixed, points, cam, pt, bearings, sigmas), cfg)


def rms_angular_error(prob: BAProblem, poses, points):
    """Root-mean-square angle (radians) between observed and predicted bearings."""
    R = np.stack([p.R for p in poses])
    t = np.stack([p.t for p in poses])
    pc = np.einsum("kij,kj->ki", R[prob.cam], points[prob.pt]) + t[prob.cam]
    pc /= np.linalg.norm(pc, axis=1, keepdims=True)
    ang = np.arccos(np.clip(np.sum(pc * prob.bearings, axis=1), -1, 1))
    return float(np.sqrt(np.mean(ang**2)))
