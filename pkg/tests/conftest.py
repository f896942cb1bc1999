import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vslam.eval.synthetic import SyntheticScene, default_camera, generate_synthetic
from vslam.io.config import config_for_camera
from vslam.pipeline import System

settings.register_profile("vslam", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("vslam")


def in_fov_mask(cam, uv):
    """Pixels whose ray lies inside the model's field of view (fisheye corners fall outside)."""
    from vslam.camera import FisheyeCamera

    if not isinstance(cam, FisheyeCamera):
        return np.ones(len(uv), dtype=bool)
    r = np.hypot((uv[:, 0] - cam.cx) / cam.fx, (uv[:, 1] - cam.cy) / cam.fy)
    th = np.linspace(0, cam.max_theta, 2000)
    return r < cam._theta_d(th).max() * 0.999


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)


def random_rotation(rng, max_angle=np.pi - 0.1):
    from vslam.geometry.transforms import so3_exp

    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return so3_exp(axis * rng.uniform(0, max_angle))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def orbit_run():
    """A stepped perspective run over a 120-frame orbit, shared by several tests."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ds = generate_synthetic(SyntheticScene(preset="orbit", camera=default_camera("perspective"), n_frames=120, seed=1))
    system = System(config_for_camera(ds.camera), camera=ds.camera)
    results = [system.feed_frame(f, t) for f, t in zip(ds.frames, ds.timestamps)]
    traj = system.shutdown()
    return ds, system, results, traj


def make_ba_problem(rng, n_kf=5, n_lm=200, n_fixed=1, pose_noise=0.0, point_noise=0.0, obs_noise=0.0, sigma=1e-3):
    """Cameras on an arc looking at a cloud; returns (problem, true poses, true points)."""
    from vslam.geometry.transforms import SE3Pose, so3_exp
    from vslam.optim import BAProblem

    poses = []
    for k in range(n_kf):
        R = so3_exp([0, 0.08 * k, 0])
        c = np.array([0.4 * k, 0.05 * np.sin(k), 0])
        poses.append(SE3Pose.from_rt(R, -R @ c))
    points = rng.uniform([-3, -2, 5], [4, 2, 10], (n_lm, 3))
    cam, pt, bear = [], [], []
    for j, X in enumerate(points):
        for k in sorted(rng.choice(n_kf, size=rng.integers(2, n_kf + 1), replace=False)):
            pc = poses[k].apply(X)
            b = pc / np.linalg.norm(pc) + rng.normal(scale=obs_noise, size=3)
            cam.append(k)
            pt.append(j)
            bear.append(b / np.linalg.norm(b))
    fixed = np.arange(n_kf) < n_fixed
    init = [
        p if f else SE3Pose.exp(rng.normal(scale=pose_noise, size=6)) @ p for p, f in zip(poses, fixed)
    ]
    prob = BAProblem(init, fixed, points + rng.normal(scale=point_noise, size=points.shape), cam, pt, bear, sigma)
    return prob, poses, points
