import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_rotation
from vslam.geometry import (
    InitializationError,
    PnPParams,
    RelocalizationError,
    SE3Pose,
    Sim3Transform,
    TwoViewParams,
    estimate_relative_pose_ransac,
    estimate_sim3_ransac,
    rotation_distance,
    solve_pnp_ransac,
    triangulate,
    triangulate_many,
    umeyama,
)

seeds = st.integers(0, 2**32 - 1)


def random_pose(rng, max_angle=np.pi - 0.1, scale=2.0):
    return SE3Pose.from_rt(random_rotation(rng, max_angle), rng.normal(scale=scale, size=3))


def random_sim3(rng):
    return Sim3Transform.from_rts(random_rotation(rng), rng.normal(size=3), float(np.exp(rng.uniform(-1, 1))))


def unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


# -- algebra ---------------------------------------------------------------


@given(seeds)
def test_se3_inverse_and_log(seed):
    rng = np.random.default_rng(seed)
    T = random_pose(rng)
    np.testing.assert_allclose((T @ T.inverse()).matrix(), np.eye(4), atol=1e-12)
    np.testing.assert_allclose(SE3Pose.exp(T.log()).matrix(), T.matrix(), atol=1e-10)


@given(seeds)
def test_sim3_inverse_log_and_composition(seed):
    rng = np.random.default_rng(seed)
    A, B = random_sim3(rng), random_sim3(rng)
    np.testing.assert_allclose((A @ A.inverse()).matrix(), np.eye(4), atol=1e-12)
    np.testing.assert_allclose(Sim3Transform.exp(A.log()).matrix(), A.matrix(), atol=1e-10)
    np.testing.assert_allclose((A @ B).matrix(), A.matrix() @ B.matrix(), atol=1e-12)
    x = rng.normal(size=(4, 3))
    np.testing.assert_allclose((A @ B).apply(x), A.apply(B.apply(x)), atol=1e-12)


def test_sim3_scaling_example():
    S = Sim3Transform(np.array([1.0, 0, 0, 0]), np.zeros(3), 2.0)
    np.testing.assert_array_equal(S.apply(np.ones((1, 3))), [[2, 2, 2]])
    with pytest.raises(ValueError):
        Sim3Transform(np.array([1.0, 0, 0, 0]), np.zeros(3), 0.0)


# -- triangulation -----------------------------------------------------------


def test_triangulate_reference_point():
    p1 = SE3Pose.identity()
    p2 = SE3Pose(np.array([1.0, 0, 0, 0]), [-1.0, 0, 0])  # center at (1, 0, 0)
    X = np.array([0.5, 0, 5])
    got = triangulate(p1, p2, unit(p1.apply(X)), unit(p2.apply(X)))
    np.testing.assert_allclose(got, X, atol=1e-10)


def test_parallel_rays_are_rejected():
    p1 = SE3Pose.identity()
    p2 = SE3Pose(np.array([1.0, 0, 0, 0]), [-1.0, 0, 0])
    assert triangulate(p1, p2, [0, 0, 1.0], [0, 0, 1.0]) is None


def test_triangulation_on_random_configurations(rng):
    worst = 0.0
    for _ in range(1000):
        p1, p2 = random_pose(rng, 0.5), random_pose(rng, 0.5)
        X = p1.inverse().apply(rng.uniform([-1, -1, 3], [1, 1, 6]))
        if np.rad2deg(np.arccos(unit(X - p1.center) @ unit(X - p2.center))) < 2:
            continue
        got, ok = triangulate_many(p1, p2, unit(p1.apply(X))[None], unit(p2.apply(X))[None])
        if ok[0]:
            worst = max(worst, np.linalg.norm(got[0] - X))
    assert worst < 1e-8


# -- two-view ----------------------------------------------------------------


def two_view_scene(rng, n=100):
    pose = SE3Pose.from_rt(random_rotation(rng, 0.2), unit(rng.normal(size=3)) * 0.5)
    X = rng.uniform([-3, -3, 4], [3, 3, 10], (n, 3))
    return pose, X, unit(X), unit(pose.apply(X))


@given(seeds)
def test_relative_pose_noise_free(seed):
    rng = np.random.default_rng(seed)
    pose, X, b1, b2 = two_view_scene(rng)
    res = estimate_relative_pose_ransac(b1, b2, TwoViewParams(), rng)
    assert rotation_distance(res.pose.R, pose.R) < 1e-6
    assert np.arccos(np.clip(unit(res.pose.t) @ unit(pose.t), -1, 1)) < 1e-6


def test_relative_pose_outlier_recall(rng):
    pose, X, b1, b2 = two_view_scene(rng)
    b2[70:] = unit(rng.normal(size=(30, 3)) + [0, 0, 2])
    res = estimate_relative_pose_ransac(b1, b2, TwoViewParams(), rng)
    assert res.inliers[:70].mean() >= 0.95
    assert res.inliers[70:].mean() < 0.2


def test_zero_motion_is_degenerate(rng):
    b = unit(rng.normal(size=(100, 3)) + [0, 0, 3])
    with pytest.raises(InitializationError):
        estimate_relative_pose_ransac(b, b.copy(), TwoViewParams(), rng)


# -- absolute pose -------------------------------------------------------------


def pnp_scene(rng, n):
    pose = random_pose(rng, 1.0)
    Xc = rng.uniform([-2, -2, 2], [2, 2, 8], (n, 3))
    return pose, pose.inverse().apply(Xc), unit(Xc)


@given(seeds)
def test_pnp_noise_free(seed):
    rng = np.random.default_rng(seed)
    pose, Xw, b = pnp_scene(rng, 20)
    got, inl = solve_pnp_ransac(b, Xw, PnPParams(min_inliers=10), rng)
    assert inl.all()
    assert rotation_distance(got.R, pose.R) < 1e-6
    assert np.linalg.norm(got.t - pose.t) < 1e-6


def test_pnp_identity_case(rng):
    X = rng.uniform([-1, -1, 2], [1, 1, 5], (20, 3))
    got, _ = solve_pnp_ransac(unit(X), X, PnPParams(min_inliers=10), rng)
    np.testing.assert_allclose(got.matrix(), np.eye(4), atol=1e-8)


def test_pnp_half_outliers(rng):
    pose, Xw, b = pnp_scene(rng, 80)
    b[40:] = unit(rng.normal(size=(40, 3)) + [0, 0, 2])
    got, inl = solve_pnp_ransac(b, Xw, PnPParams(iterations=2000, min_inliers=20), rng)
    assert rotation_distance(got.R, pose.R) < 1e-3 and np.linalg.norm(got.t - pose.t) < 1e-3
    assert not inl[40:].any()


def test_pnp_needs_four_points(rng):
    with pytest.raises(RelocalizationError):
        solve_pnp_ransac(np.eye(3), np.eye(3), rng=rng)


# -- similarity --------------------------------------------------------------


@given(seeds)
def test_umeyama_exact(seed):
    rng = np.random.default_rng(seed)
    S = random_sim3(rng)
    src = rng.normal(size=(30, 3))
    R, t, s = umeyama(src, S.apply(src))
    assert abs(s - S.s) < 1e-10
    np.testing.assert_allclose(R, S.R, atol=1e-10)
    np.testing.assert_allclose(t, S.t, atol=1e-10)


def test_umeyama_rejects_collinear():
    line = np.outer(np.arange(5.0), [1, 2, 3])
    with pytest.raises(ValueError):
        umeyama(line, line)


def test_sim3_ransac_recovers_scale(rng):
    S = random_sim3(rng)
    X2 = rng.uniform([-2, -2, 3], [2, 2, 8], (60, 3))
    X1 = S.apply(X2)
    keep = X1[:, 2] > 0.5
    X1, X2 = X1[keep], X2[keep]
    b1, b2 = unit(X1), unit(X2)
    n = len(X1)
    X1[: n // 5] += rng.normal(scale=2.0, size=(n // 5, 3))
    got, inl = estimate_sim3_ransac(X1, X2, b1, b2, rng=rng)
    assert abs(got.s - S.s) < 1e-8
    assert inl[n // 5 :].all()
