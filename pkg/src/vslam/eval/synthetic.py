"""Deterministic synthetic scenes with ground truth.

A scene is a landmark cloud plus a camera path. Landmarks carry binary
descriptors drawn from a fixed hierarchical appearance table, so that every
scene shares one visual vocabulary; each observation perturbs a few bits.
Frames come out either as FeatureFrames with ground-truth landmark labels or
as rendered sprite images for the full image front end.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..camera import CameraModel, EquirectangularCamera, FisheyeCamera, PerspectiveCamera
from ..features.orb import FeatureFrame
from ..geometry.transforms import SE3Pose, Sim3Transform
from .ate import Trajectory

APPEARANCE_SEED = 20240607
PRESETS = ("orbit", "square-loop", "line", "stationary")


def default_camera(kind="perspective") -> CameraModel:
    if kind == "perspective":
        return PerspectiveCamera(640, 480, fx=400.0, fy=400.0, cx=320.0, cy=240.0)
    if kind == "fisheye":
        return FisheyeCamera(640, 480, fx=190.0, fy=190.0, cx=320.0, cy=240.0, k1=0.02, k2=-0.005)
    if kind == "equirectangular":
        return EquirectangularCamera(1920, 960)
    raise ValueError(f"no default camera for kind {kind!r}")


# -- appearance model -----------------------------------------------------


def _flip(rng, desc, p):
    bits = np.unpackbits(desc, axis=-1, bitorder="little")
    mask = rng.random(bits.shape) < p
    return np.packbits(bits ^ mask, axis=-1, bitorder="little")


@lru_cache(maxsize=1)
def appearance_leaves():
    """(1000, 32) prototype descriptors arranged as a 10 x 10 x 10 tree."""
    rng = np.random.default_rng(APPEARANCE_SEED)
    roots = rng.integers(0, 256, (10, 32), dtype=np.uint8)
    mid = _flip(rng, np.repeat(roots, 10, axis=0), 0.20)
    leaves = _flip(rng, np.repeat(mid, 10, axis=0), 0.12)
    leaves.setflags(write=False)
    return leaves


def sample_descriptors(rng, n, spread=0.08):
    leaves = appearance_leaves()
    return _flip(rng, leaves[rng.integers(0, len(leaves), n)], spread)


# -- camera paths ---------------------------------------------------------


def _yaw_rotation(psi):
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _pose_from(center, yaw):
    """World->camera pose of a level camera at ``center`` looking along yaw."""
    R_wc = _yaw_rotation(yaw)
    return SE3Pose.from_rt(R_wc.T, -R_wc.T @ center)


def _rounded_square(s, side=3.0, radius=1.0):
    """Point and unit tangent at arc length ``s`` on a rounded square (CCW)."""
    seg = side + 0.5 * np.pi * radius
    L = 4 * seg
    s = s % L
    k, u = int(s // seg), s % seg
    h = side / 2
    # side k runs along direction d_k, starting after corner k-1
    dirs = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([-1.0, 0.0]), np.array([0.0, -1.0])]
    starts = [np.array([-h, -h - radius]), np.array([h + radius, -h]), np.array([h, h + radius]), np.array([-h - radius, h])]
    d = dirs[k]
    if u < side:
        p = starts[k] + u * d
        tan = d
    else:
        a = (u - side) / radius
        centre = starts[k] + side * d + radius * np.array([-d[1], d[0]])
        r0 = -np.array([-d[1], d[0]])
        rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
        p = centre + radius * rot @ r0
        tan = rot @ d
    return p, tan, L


@dataclass
class SyntheticScene:
    """Scene recipe.

    ``heading_deg`` yaws the camera away from the motion direction; positive
    values face the outside of the counter-clockwise orbit and square paths.
    ``drift`` is the odometry endpoint gap as a fraction of path length.
    """

    preset: str = "orbit"
    camera: CameraModel = field(default_factory=default_camera)
    n_frames: int = 200
    pixel_sigma: float = 0.5
    outlier_rate: float = 0.0
    seed: int = 0
    heading_deg: float = 0.0
    drift: float = 0.0
    n_landmarks: int | None = None
    max_range: float = 10.0
    max_keypoints: int = 2000
    world_seed: int | None = None
    laps: float = 1.0

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {PRESETS}")
        if self.n_frames < 2:
            raise ValueError("need at least two frames")
        if self.pixel_sigma < 0 or not 0 <= self.outlier_rate < 1:
            raise ValueError("noise parameters out of range")


@dataclass
class SyntheticDataset:
    scene: SyntheticScene
    camera: CameraModel
    landmarks: np.ndarray
    descriptors: np.ndarray
    ground_truth: Trajectory
    frames: list
    labels: list
    arc_length: np.ndarray
    path_length: float
    odometry: Trajectory
    drift_vector: np.ndarray
    warnings: list

    @property
    def timestamps(self):
        return self.ground_truth.timestamps

    def drift_at(self, s):
        """World offset injected at arc length ``s`` (zero without drift)."""
        return (np.asarray(s, dtype=float)[..., None] / self.path_length) * self.drift_vector


def _landmarks(preset, rng, n):
    if preset in ("orbit", "stationary"):
        n = n or 2500
        n_in = n // 5
        r = np.sqrt(rng.uniform(6.5**2, 9.0**2, n - n_in))
        a = rng.uniform(0, 2 * np.pi, n - n_in)
        outer = np.stack([r * np.cos(a), rng.uniform(-2, 2, n - n_in), r * np.sin(a)], axis=1)
        r = 3.0 * np.sqrt(rng.uniform(0, 1, n_in))
        a = rng.uniform(0, 2 * np.pi, n_in)
        inner = np.stack([r * np.cos(a), rng.uniform(-2, 2, n_in), r * np.sin(a)], axis=1)
        return np.concatenate([outer, inner])
    if preset == "square-loop":
        n = n or 3000
        wall = rng.integers(0, 4, n)
        along = rng.uniform(-6, 6, n)
        depth = 6.0 + rng.uniform(-0.4, 0.4, n)
        y = rng.uniform(-2, 2, n)
        x = np.select([wall == 0, wall == 1, wall == 2], [along, depth, along], -depth)
        z = np.select([wall == 0, wall == 1, wall == 2], [-depth, along, depth], along)
        return np.stack([x, y, z], axis=1)
    # line: a corridor of two walls along +z
    n = n or 2000
    side = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    x = side * (3.0 + rng.uniform(-0.5, 0.5, n))
    return np.stack([x, rng.uniform(-2, 2, n), rng.uniform(-4, 24, n)], axis=1)


def _path(scene: SyntheticScene):
    """Camera centers, yaw angles, arc lengths and total path length."""
    n = scene.n_frames
    head = np.deg2rad(scene.heading_deg)
    if scene.preset == "orbit":
        th = 2 * np.pi * scene.laps * np.arange(n) / n
        r = 5.0
        C = np.stack([r * np.cos(th), 0.15 * np.sin(3 * th), r * np.sin(th)], axis=1)
        yaw = -th + head
        s = r * th
        return C, yaw, s, 2 * np.pi * r
    if scene.preset == "stationary":
        C = np.tile([5.0, 0.0, 0.0], (n, 1))
        return C, np.full(n, head), np.zeros(n), 1.0
    if scene.preset == "line":
        z = np.linspace(0.0, 16.0, n)
        C = np.stack([np.zeros(n), np.zeros(n), z], axis=1)
        return C, np.full(n, head), z, 16.0
    _, _, L = _rounded_square(0.0)
    s = L * scene.laps * np.arange(n) / n
    C = np.zeros((n, 3))
    yaw = np.zeros(n)
    for k, sk in enumerate(s):
        p, tan, _ = _rounded_square(sk)
        C[k] = [p[0], 0.0, p[1]]
        yaw[k] = np.arctan2(tan[0], tan[1]) + head
    return C, yaw, s, L


def generate_synthetic(scene: SyntheticScene) -> SyntheticDataset:
    """Build landmarks, ground-truth poses and noisy FeatureFrames for ``scene``."""
    cam = scene.camera
    world_rng = np.random.default_rng([scene.seed if scene.world_seed is None else scene.world_seed, 1])
    X = _landmarks(scene.preset, world_rng, scene.n_landmarks)
    D = sample_descriptors(world_rng, len(X))
    C, yaw, s, L = _path(scene)
    poses = [_pose_from(c, y) for c, y in zip(C, yaw)]
    ts = np.arange(scene.n_frames) / cam.fps
    gt = Trajectory(ts, poses)

    g = np.zeros(3)
    if scene.drift:
        g = np.array([1.0, 0.0, 0.0]) * scene.drift * L
    odo_C = C + (s[:, None] / L) * g
    odometry = Trajectory(ts, [_pose_from(c, y) for c, y in zip(odo_C, yaw)])

    frames, labels, notes = [], [], []
    for k, pose in enumerate(poses):
        rng = np.random.default_rng([scene.seed, 2, k])
        pc = pose.apply(X)
        dist = np.linalg.norm(pc, axis=1)
        uv, ok = cam.project_points(pc)
        ok &= cam.in_image(uv, margin=2.0) & (dist < scene.max_range) & (dist > 0.3)
        ids = np.nonzero(ok)[0]
        if len(ids) < 50:
            notes.append(f"frame {k}: only {len(ids)} landmarks visible")
        n_out = int(round(scene.outlier_rate * len(ids) / (1 - scene.outlier_rate)))
        cap = scene.max_keypoints - n_out
        if len(ids) > cap:
            ids = np.sort(rng.choice(ids, cap, replace=False))
        kp = uv[ids] + rng.normal(0.0, scene.pixel_sigma, (len(ids), 2))
        desc = _flip(rng, D[ids], 0.015)
        lab = ids.astype(np.int64)
        if n_out:
            ou = np.stack([rng.uniform(0, cam.width, n_out), rng.uniform(0, cam.height, n_out)], axis=1)
            ou = ou[cam.in_image(ou, margin=2.0)]
            kp = np.concatenate([kp, ou])
            desc = np.concatenate([desc, sample_descriptors(rng, len(ou))])
            lab = np.concatenate([lab, np.full(len(ou), -1)])
        keep = cam.in_image(kp, margin=0.5)
        kp, desc, lab = kp[keep], desc[keep], lab[keep]
        order = rng.permutation(len(kp))
        kp, desc, lab = kp[order], desc[order], lab[order]
        n = len(kp)
        frames.append(FeatureFrame.from_keypoints(cam, kp, np.zeros(n), np.zeros(n), np.ones(n), desc))
        labels.append(lab)
    for note in notes[:3]:
        warnings.warn(f"synthetic coverage: {note}", stacklevel=2)
    return SyntheticDataset(scene, cam, X, D, gt, frames, labels, s, L, odometry, g, notes)


# -- rendering ------------------------------------------------------------

SPRITE = 9


@lru_cache(maxsize=4)
def _sprites(n, seed):
    rng = np.random.default_rng([seed, 3])
    # 3x3 blocks of 3 px: coarse enough to survive the pyramid's low-pass
    cells = rng.integers(0, 2, (n, 3, 3)).astype(float) * 200.0 + 25.0
    return np.kron(cells, np.ones((SPRITE // 3, SPRITE // 3)))


def render_image(dataset: SyntheticDataset, k: int, noise=2.0) -> np.ndarray:
    """Gray uint8 image of frame ``k``: one fixed random sprite per landmark."""
    scene, cam = dataset.scene, dataset.camera
    pose = dataset.ground_truth.poses[k]
    pc = pose.apply(dataset.landmarks)
    uv, ok = cam.project_points(pc)
    dist = np.linalg.norm(pc, axis=1)
    ok &= cam.in_image(uv, margin=SPRITE) & (dist < scene.max_range) & (dist > 0.3)
    img = np.full((cam.height, cam.width), 128.0)
    sprites = _sprites(len(dataset.landmarks), scene.world_seed if scene.world_seed is not None else scene.seed)
    h = SPRITE // 2
    # far sprites first so near ones overwrite them
    for i in np.nonzero(ok)[0][np.argsort(-dist[ok])]:
        u0, v0 = np.floor(uv[i]).astype(int)
        img[v0 - h : v0 + h + 1, u0 - h : u0 + h + 1] = sprites[i]
    rng = np.random.default_rng([scene.seed, 4, k])
    img += rng.normal(0, noise, img.shape)
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def drift_corrections(dataset: SyntheticDataset, keyframe_frames: dict, map_from_gt: Sim3Transform):
    """World-frame Sim3 offsets that displace each keyframe by the drift field.

    ``keyframe_frames`` maps keyframe id -> frame index; ``map_from_gt`` maps
    ground-truth coordinates into the map frame so offsets follow map scale.
    """
    A = map_from_gt.s * map_from_gt.R
    out = {}
    for kf_id, k in keyframe_frames.items():
        d = A @ dataset.drift_at(dataset.arc_length[k])
        out[kf_id] = Sim3Transform(np.array([1.0, 0, 0, 0]), d, 1.0)
    return out
