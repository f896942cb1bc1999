import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from conftest import random_rotation
from vslam.eval import (
    AlignmentError,
    SyntheticScene,
    Trajectory,
    compute_ate,
    default_camera,
    generate_synthetic,
    umeyama_align,
)
from vslam.eval.ate import poses_from_centers
from vslam.geometry import Sim3Transform


def traj_from(centers, ts=None):
    ts = np.arange(len(centers)) / 10.0 if ts is None else ts
    return Trajectory(ts, poses_from_centers(centers))


def test_identity_alignment(rng):
    x = rng.normal(size=(20, 3))
    S = umeyama_align(x, x)
    assert S.s == pytest.approx(1.0) and np.allclose(S.matrix(), np.eye(4), atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_known_similarity_is_recovered(seed):
    rng = np.random.default_rng(seed)
    S = Sim3Transform.from_rts(random_rotation(rng), rng.normal(size=3), 2.5)
    src = rng.normal(size=(40, 3))
    got = umeyama_align(src, S.apply(src))
    assert np.abs(got.matrix() - S.matrix()).max() < 1e-10


def test_noisy_alignment_matches_iterative_refinement(rng):
    S = Sim3Transform.from_rts(random_rotation(rng), rng.normal(size=3), 1.7)
    src = rng.normal(size=(200, 3))
    dst = S.apply(src) + rng.normal(scale=0.01, size=src.shape)
    got = umeyama_align(src, dst)

    def residual(p):
        R = Rotation.from_rotvec(p[:3]).as_matrix()
        return (np.exp(p[6]) * src @ R.T + p[3:6] - dst).ravel()

    x0 = np.concatenate([Rotation.from_matrix(got.R).as_rotvec() + 0.01, got.t + 0.01, [np.log(got.s) + 0.01]])
    ref = least_squares(residual, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    rms_ref = np.sqrt(np.mean(ref.fun**2))
    rms_got = np.sqrt(np.mean((got.apply(src) - dst) ** 2))
    assert abs(rms_got - rms_ref) < 1e-6


def test_degenerate_alignment_raises():
    line = np.outer(np.arange(6.0), [1, 0, 0])
    with pytest.raises(AlignmentError):
        umeyama_align(line, line)


def test_ate_scale_contrast(rng):
    gt = traj_from(rng.normal(size=(50, 3)))
    scaled = traj_from(3.0 * gt.positions())
    assert compute_ate(gt, gt).rmse < 1e-12
    assert compute_ate(scaled, gt, "sim3").rmse < 1e-10
    assert compute_ate(scaled, gt, "se3").rmse > 0.1


def test_ate_monte_carlo_noise_level():
    rng = np.random.default_rng(7)
    sigma = 0.05
    gt = traj_from(rng.uniform(-5, 5, (20_000, 3)))
    est = traj_from(gt.positions() + rng.normal(scale=sigma, size=(20_000, 3)))
    rmse = compute_ate(est, gt).rmse
    assert 0.9 * sigma * np.sqrt(3) <= rmse <= 1.1 * sigma * np.sqrt(3)


def test_ate_needs_associations(rng):
    a = traj_from(rng.normal(size=(5, 3)))
    b = traj_from(rng.normal(size=(5, 3)), ts=np.arange(5) + 100.0)
    with pytest.raises(AlignmentError):
        compute_ate(a, b)


def test_ate_report_ordering(rng):
    gt = traj_from(rng.normal(size=(30, 3)))
    est = traj_from(gt.positions() + rng.normal(scale=0.1, size=(30, 3)))
    r = compute_ate(est, gt)
    assert r.max >= r.mean >= 0 and r.rmse >= r.mean and r.matched == 30


# -- synthetic -------------------------------------------------------------------


def test_same_seed_same_dataset():
    a = generate_synthetic(SyntheticScene(preset="square-loop", n_frames=30, seed=11, outlier_rate=0.1))
    b = generate_synthetic(SyntheticScene(preset="square-loop", n_frames=30, seed=11, outlier_rate=0.1))
    for fa, fb, la, lb in zip(a.frames, b.frames, a.labels, b.labels):
        assert fa.uv.tobytes() == fb.uv.tobytes() and fa.descriptors.tobytes() == fb.descriptors.tobytes()
        assert np.array_equal(la, lb)


def test_equirectangular_orbit_sees_every_landmark():
    ds = generate_synthetic(SyntheticScene(preset="orbit", camera=default_camera("equirectangular"), n_frames=200, seed=2, max_keypoints=10**6, max_range=1e9))
    seen = np.zeros(len(ds.landmarks), bool)
    for lab in ds.labels:
        seen[lab[lab >= 0]] = True
    assert seen.all()


def test_square_loop_drift_geometry():
    ds = generate_synthetic(SyntheticScene(preset="square-loop", n_frames=200, seed=1, drift=0.05))
    gt = ds.ground_truth.positions()
    step = np.linalg.norm(gt[1] - gt[0])
    assert np.linalg.norm(gt[-1] - gt[0]) < 1.5 * step  # the path closes on itself
    gap = np.linalg.norm(ds.drift_at(ds.path_length))
    assert abs(gap - 0.05 * ds.path_length) < 1e-9
    odo = ds.odometry.positions()
    np.testing.assert_allclose(odo - gt, ds.drift_at(ds.arc_length), atol=1e-12)


def test_keypoints_are_projections_of_labelled_landmarks():
    ds = generate_synthetic(SyntheticScene(preset="orbit", n_frames=5, seed=3, pixel_sigma=0.0))
    f, lab = ds.frames[2], ds.labels[2]
    pc = ds.ground_truth.poses[2].apply(ds.landmarks[lab])
    b = pc / np.linalg.norm(pc, axis=1, keepdims=True)
    assert np.abs(b - f.bearings).max() < 1e-9


def test_bad_scene_parameters():
    with pytest.raises(ValueError):
        SyntheticScene(preset="spiral")
    with pytest.raises(ValueError):
        SyntheticScene(outlier_rate=1.0)
