"""Two-view initialization, triangulation and absolute pose on bearing vectors.

Poses are world->camera: a world point X is seen along ``R X + t``.
All residuals are angles between bearings, so the same code serves every
camera model, including full-sphere panoramas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transforms import SE3Pose, Sim3Transform


class InitializationError(RuntimeError):
    """Two-view bootstrap failed (too few inliers)."""


class DegenerateMotionError(InitializationError):
    """Not enough parallax to bootstrap: pure rotation or no motion."""


class RelocalizationError(RuntimeError):
    """Absolute pose could not be found."""


@dataclass(frozen=True)
class TwoViewParams:
    iterations: int = 200
    epipolar_threshold_deg: float = 0.2
    min_inliers: int = 50
    min_parallax_deg: float = 1.0


@dataclass(frozen=True)
class PnPParams:
    iterations: int = 300
    threshold_deg: float = 0.3
    min_inliers: int = 15
    confidence: float = 0.999


@dataclass
class TwoViewResult:
    pose: SE3Pose
    points: np.ndarray
    inliers: np.ndarray
    triangulated: np.ndarray
    median_parallax_deg: float


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def essential_8point(b1, b2):
    """Linear essential matrix from >= 8 bearing pairs, b2^T E b1 = 0."""
    A = np.einsum("ni,nj->nij", b2, b1).reshape(len(b1), 9)
    _, _, vt = np.linalg.svd(A)
    E = vt[-1].reshape(3, 3)
    u, _, vt = np.linalg.svd(E)
    return u @ np.diag([1.0, 1.0, 0.0]) @ vt


def epipolar_angles(E, b1, b2):
    """Angular distance of each bearing to the other view's epipolar plane
    (the larger of the two), in radians."""
    n2 = b1 @ E.T  # plane normals in view 2
    n1 = b2 @ E  # plane normals in view 1
    s2 = np.abs(np.sum(n2 * b2, axis=1)) / np.maximum(np.linalg.norm(n2, axis=1), 1e-300)
    s1 = np.abs(np.sum(n1 * b1, axis=1)) / np.maximum(np.linalg.norm(n1, axis=1), 1e-300)
    return np.arcsin(np.clip(np.maximum(s1, s2), 0.0, 1.0))


def decompose_essential(E):
    u, _, vt = np.linalg.svd(E)
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    t = u[:, 2]
    cands = []
    for R in (u @ W @ vt, u @ W.T @ vt):
        for sign in (1.0, -1.0):
            cands.append((R, sign * t))
    return cands


def triangulate_rays(centers, dirs):
    """Least-squares intersection of rays ``centers[i] + s dirs[i]``.

    Vectorized over a leading batch axis: centers, dirs shaped (N, V, 3).
    Returns (N, 3). Two rays give the classical midpoint.
    """
    dirs = _unit(dirs)
    P = np.eye(3) - dirs[..., :, None] * dirs[..., None, :]
    A = P.sum(axis=-3)
    b = np.einsum("...vij,...vj->...i", P, centers)
    det = np.linalg.det(A)
    A = np.where(np.abs(det)[..., None, None] > 1e-300, A, np.eye(3))
    return np.linalg.solve(A, b[..., None])[..., 0]


def triangulate_many(pose1: SE3Pose, pose2: SE3Pose, b1, b2, min_parallax_deg=1.0):
    """Vectorized two-view triangulation.

    Returns ``(points, ok)``: ``ok`` is False where parallax is below the
    threshold or the point is behind either camera.
    """
    b1, b2 = np.atleast_2d(b1), np.atleast_2d(b2)
    d1 = b1 @ pose1.R  # R^T b, rows
    d2 = b2 @ pose2.R
    c1, c2 = pose1.center, pose2.center
    cos_par = np.sum(_unit(d1) * _unit(d2), axis=1)
    centers = np.stack([np.broadcast_to(c1, d1.shape), np.broadcast_to(c2, d2.shape)], axis=1)
    X = triangulate_rays(centers, np.stack([d1, d2], axis=1))
    ok = cos_par < np.cos(np.deg2rad(min_parallax_deg))
    ok &= np.sum(pose1.apply(X) * b1, axis=1) > 0
    ok &= np.sum(pose2.apply(X) * b2, axis=1) > 0
    return X, ok


def triangulate(pose1: SE3Pose, pose2: SE3Pose, b1, b2, min_parallax_deg=1.0):
    """Intersect two bearings; None for low parallax or negative depth."""
    X, ok = triangulate_many(pose1, pose2, np.asarray(b1)[None], np.asarray(b2)[None], min_parallax_deg)
    return X[0] if ok[0] else None


def parallax_deg(pose1: SE3Pose, pose2: SE3Pose, X):
    r1 = _unit(np.atleast_2d(X) - pose1.center)
    r2 = _unit(np.atleast_2d(X) - pose2.center)
    return np.rad2deg(np.arccos(np.clip(np.sum(r1 * r2, axis=1), -1, 1)))


def _cheirality(R, t, b1, b2):
    pose1, pose2 = SE3Pose.identity(), SE3Pose.from_rt(R, t)
    X, ok = triangulate_many(pose1, pose2, b1, b2, min_parallax_deg=0.0)
    return X, ok


def estimate_relative_pose_ransac(b1, b2, params: TwoViewParams | None = None, rng=None) -> TwoViewResult:
    """Relative pose of view 2 w.r.t. view 1 from matched bearings.

    Returns the pose of view 2 (view 1 is the identity), with unit-norm
    translation, and the triangulated inliers. Raises
    :class:`DegenerateMotionError` when the median parallax is too small and
    :class:`InitializationError` on too few inliers.
    """
    params = params or TwoViewParams()
    rng = np.random.default_rng(rng)
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    n = len(b1)
    if n < 8:
        raise InitializationError(f"need at least 8 correspondences, got {n}")
    thr = np.deg2rad(params.epipolar_threshold_deg)

    # rotation-free test for zero motion: bearings already coincide
    raw = np.rad2deg(np.arccos(np.clip(np.sum(b1 * b2, axis=1), -1, 1)))
    if np.median(raw) < 1e-9:
        raise DegenerateMotionError("views are identical: no motion")

    best_inl, best_score = None, -1
    for _ in range(params.iterations):
        idx = rng.choice(n, 8, replace=False)
        E = essential_8point(b1[idx], b2[idx])
        inl = epipolar_angles(E, b1, b2) < thr
        score = int(inl.sum())
        if score > best_score:
            best_inl, best_score = inl, score
    if best_score < max(8, params.min_inliers):
        raise InitializationError(f"only {best_score} epipolar inliers")

    # refit on all inliers, once to convergence of the consensus set
    inl = best_inl
    for _ in range(3):
        E = essential_8point(b1[inl], b2[inl])
        new = epipolar_angles(E, b1, b2) < thr
        if new.sum() < 8 or np.array_equal(new, inl):
            break
        inl = new

    best = None
    for R, t in decompose_essential(E):
        X, ok = _cheirality(R, t, b1[inl], b2[inl])
        cnt = int(ok.sum())
        if best is None or cnt > best[0]:
            best = (cnt, R, t)
    _, R, t = best
    pose2 = SE3Pose.from_rt(R, t / np.linalg.norm(t))

    # parallax is measured on rotation-compensated rays
    d2 = b2[inl] @ R
    par = np.rad2deg(np.arccos(np.clip(np.sum(b1[inl] * d2, axis=1), -1, 1)))
    med = float(np.median(par))
    if med < params.min_parallax_deg:
        raise DegenerateMotionError(f"median parallax {med:.3f} deg below {params.min_parallax_deg}")

    X, ok = triangulate_many(SE3Pose.identity(), pose2, b1, b2, params.min_parallax_deg)
    ok &= inl
    if ok.sum() < params.min_inliers:
        raise InitializationError(f"only {int(ok.sum())} points triangulated")
    return TwoViewResult(pose2, X, inl, ok, med)


# ---------------------------------------------------------------- absolute pose


def rigid_from_points(src, dst):
    """Least-squares R, t with dst ~ R src + t (Kabsch)."""
    ms, md = src.mean(axis=0), dst.mean(axis=0)
    C = (dst - md).T @ (src - ms)
    u, _, vt = np.linalg.svd(C)
    S = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        S[2, 2] = -1
    R = u @ S @ vt
    return R, md - R @ ms


def p3p_grunert(bearings, points):
    """All camera poses consistent with three bearing/point pairs.

    Grunert's quartic as reviewed by Haralick et al. Returns a list of
    (R, t) world->camera candidates (up to four).
    """
    j1, j2, j3 = _unit(np.asarray(bearings, dtype=float))
    P1, P2, P3 = np.asarray(points, dtype=float)
    a = np.linalg.norm(P2 - P3)
    b = np.linalg.norm(P1 - P3)
    c = np.linalg.norm(P1 - P2)
    if min(a, b, c) < 1e-12:
        return []
    ca, cb, cg = j2 @ j3, j1 @ j3, j1 @ j2
    a2, b2, c2 = a * a, b * b, c * c
    amc = (a2 - c2) / b2
    apc = (a2 + c2) / b2
    A4 = (amc - 1) ** 2 - 4 * c2 / b2 * ca**2
    A3 = 4 * (amc * (1 - amc) * cb - (1 - apc) * ca * cg + 2 * c2 / b2 * ca**2 * cb)
    A2 = 2 * (
        amc**2 - 1 + 2 * amc**2 * cb**2 + 2 * (b2 - c2) / b2 * ca**2
        - 4 * apc * ca * cb * cg + 2 * (b2 - a2) / b2 * cg**2
    )  # fmt: skip
    A1 = 4 * (-amc * (1 + amc) * cb + 2 * a2 / b2 * cg**2 * cb - (1 - apc) * ca * cg)
    A0 = (1 + amc) ** 2 - 4 * a2 / b2 * cg**2
    roots = np.roots([A4, A3, A2, A1, A0])
    out = []
    for v in roots:
        if abs(v.imag) > 1e-6 * max(1.0, abs(v.real)):
            continue
        v = v.real
        den = 2 * (cg - v * ca)
        if abs(den) < 1e-12:
            continue
        u = ((-1 + amc) * v * v - 2 * amc * cb * v + 1 + amc) / den
        q = 1 + v * v - 2 * v * cb
        if q <= 0:
            continue
        s1 = np.sqrt(b2 / q)
        s2, s3 = u * s1, v * s1
        if s1 <= 0 or s2 <= 0 or s3 <= 0:
            continue
        cam = np.stack([s1 * j1, s2 * j2, s3 * j3])
        R, t = rigid_from_points(np.stack([P1, P2, P3]), cam)
        out.append((R, t))
    return out


def angular_errors(pose: SE3Pose, bearings, points):
    pc = pose.apply(points)
    c = np.sum(_unit(pc) * bearings, axis=1)
    return np.arccos(np.clip(c, -1.0, 1.0))


def solve_pnp_ransac(bearings, world_points, params: PnPParams | None = None, rng=None, refine=True):
    """Camera pose from bearing / world point correspondences.

    Minimal P3P hypotheses inside RANSAC, scored by angular error, then a
    motion-only refinement on the consensus set.
    Returns ``(pose, inlier_mask)``; raises :class:`RelocalizationError`.
    """
    params = params or PnPParams()
    rng = np.random.default_rng(rng)
    bearings = _unit(np.asarray(bearings, dtype=float))
    world_points = np.asarray(world_points, dtype=float)
    n = len(bearings)
    if n < 4:
        raise RelocalizationError(f"need at least 4 correspondences, got {n}")
    thr = np.deg2rad(params.threshold_deg)
    best_pose, best_inl, best_cnt = None, None, -1
    iters = params.iterations
    it = 0
    while it < iters:
        it += 1
        idx = rng.choice(n, 3, replace=False)
        for R, t in p3p_grunert(bearings[idx], world_points[idx]):
            pose = SE3Pose.from_rt(R, t)
            inl = angular_errors(pose, bearings, world_points) < thr
            cnt = int(inl.sum())
            if cnt > best_cnt:
                best_pose, best_inl, best_cnt = pose, inl, cnt
                w = cnt / n
                if w >= 1.0:
                    iters = 0
                else:
                    need = np.log(1 - params.confidence) / np.log(max(1e-12, 1 - w**3))
                    iters = min(iters, int(np.ceil(need)))
    if best_pose is None or best_cnt < min(params.min_inliers, n):
        raise RelocalizationError(f"only {max(best_cnt, 0)} PnP inliers")

    pose, inl = best_pose, best_inl
    if refine:
        from ..optim.motion import refine_pose_angular

        for _ in range(2):
            pose = refine_pose_angular(pose, bearings[inl], world_points[inl])
            inl = angular_errors(pose, bearings, world_points) < thr
    if inl.sum() < min(params.min_inliers, n):
        raise RelocalizationError(f"only {int(inl.sum())} PnP inliers after refinement")
    return pose, inl


# ------------------------------------------------------------ similarity RANSAC


def umeyama(src, dst, with_scale=True):
    """Closed-form least-squares similarity dst ~ s R src + t.

    Returns (R, t, s); raises ValueError on rank-deficient input.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    n = len(src)
    if n < 3 or src.shape != dst.shape:
        raise ValueError("need at least 3 matched point pairs of equal shape")
    ms, md = src.mean(axis=0), dst.mean(axis=0)
    xs, xd = src - ms, dst - md
    var_s = np.sum(xs * xs) / n
    C = xd.T @ xs / n
    u, d, vt = np.linalg.svd(C)
    if var_s <= 1e-300 or d[1] <= 1e-12 * d[0]:
        raise ValueError("degenerate point configuration (collinear or coincident)")
    S = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        S[2, 2] = -1
    R = u @ S @ vt
    s = float(np.trace(np.diag(d) @ S) / var_s) if with_scale else 1.0
    t = md - s * R @ ms
    return R, t, s


@dataclass(frozen=True)
class Sim3RansacParams:
    iterations: int = 300
    threshold_deg: float = 0.5
    min_inliers: int = 20


def estimate_sim3_ransac(X1, X2, b1, b2, params: Sim3RansacParams | None = None, rng=None):
    """Similarity S with X1 ~ S X2 between two camera frames.

    ``X1``/``X2`` are matched 3D points expressed in camera 1 and camera 2,
    ``b1``/``b2`` the bearings observed in each camera for the same pairs.
    A pair is an inlier when S X2 reprojects onto b1 and S^-1 X1 onto b2
    within the angular threshold. Returns (Sim3Transform, inliers) or None.
    """
    params = params or Sim3RansacParams()
    rng = np.random.default_rng(rng)
    X1, X2 = np.asarray(X1, float), np.asarray(X2, float)
    n = len(X1)
    if n < max(3, params.min_inliers):
        return None
    thr = np.cos(np.deg2rad(params.threshold_deg))

    def inliers(S):
        p1 = S.apply(X2)
        p2 = S.inverse().apply(X1)
        ok1 = np.sum(_unit(p1) * b1, axis=1) > thr
        ok2 = np.sum(_unit(p2) * b2, axis=1) > thr
        return ok1 & ok2

    best, best_inl = None, None
    for _ in range(params.iterations):
        idx = rng.choice(n, 3, replace=False)
        try:
            R, t, s = umeyama(X2[idx], X1[idx], with_scale=True)
        except ValueError:
            continue
        S = Sim3Transform.from_rts(R, t, s)
        inl = inliers(S)
        if best_inl is None or inl.sum() > best_inl.sum():
            best, best_inl = S, inl
    if best is None or best_inl.sum() < params.min_inliers:
        return None
    for _ in range(3):
        try:
            R, t, s = umeyama(X2[best_inl], X1[best_inl], with_scale=True)
        except ValueError:
            break
        S = Sim3Transform.from_rts(R, t, s)
        inl = inliers(S)
        if inl.sum() < best_inl.sum():
            break
        best, best_inl = S, inl
    if best_inl.sum() < params.min_inliers:
        return None
    return best, best_inl
