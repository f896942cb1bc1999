"""Guided correspondence search between landmarks and keypoints."""

from __future__ import annotations

from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from ..features.matching import hamming_rows
from ..features.orb import FeatureFrame

NO_MATCH = 1 << 20


class IndexedFrame:
    """A FeatureFrame with a KD-tree over its unit bearings."""

    def __init__(self, features: FeatureFrame):
        self.features = features

    @cached_property
    def tree(self):
        return cKDTree(self.features.bearings) if len(self.features) else None


def _chord(angle):
    return 2.0 * np.sin(0.5 * np.minimum(angle, np.pi))


def project_to_frame(camera, pose, points, margin=0.0):
    """Camera-frame bearings of world ``points`` and their in-image mask."""
    pc = pose.apply(points)
    uv, ok = camera.project_points(pc)
    ok &= camera.in_image(uv, margin)
    n = np.linalg.norm(pc, axis=1)
    ok &= n > 0
    return pc / np.maximum(n, 1e-300)[:, None], ok


def search_by_projection(
    frame: IndexedFrame,
    camera,
    pose,
    points,
    descriptors,
    radius,
    max_hamming=50,
    ratio=0.8,
    taken=None,
    k=8,
):
    """Match world points to keypoints near their predicted bearings.

    ``radius`` is an angle in radians. A landmark takes its closest
    descriptor among keypoints within the radius, subject to ``max_hamming``
    and the best/second-best ``ratio`` (1.0 disables it); keypoints flagged in
    ``taken`` are skipped, and a keypoint claimed twice goes to the closer
    descriptor. Returns (landmark rows, keypoint indices, in-view mask).
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0 or frame.tree is None:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(len(points), bool)
    bearings, in_view = project_to_frame(camera, pose, points)
    rows = np.nonzero(in_view)[0]
    if len(rows) == 0:
        return np.zeros(0, int), np.zeros(0, int), in_view
    n_kp = len(frame.features)
    k = min(k, n_kp)
    dist, idx = frame.tree.query(bearings[rows], k=k, distance_upper_bound=_chord(radius))
    idx = idx.reshape(len(rows), k)
    valid = idx < n_kp
    safe = np.where(valid, idx, 0)
    if taken is not None:
        valid &= ~np.asarray(taken)[safe]
    ham = hamming_rows(descriptors[rows][:, None, :], frame.features.descriptors[safe])
    ham = np.where(valid, ham, NO_MATCH)
    order = np.argsort(ham, axis=1, kind="stable")
    best = np.take_along_axis(ham, order[:, :1], axis=1)[:, 0]
    second = np.take_along_axis(ham, order[:, 1:2], axis=1)[:, 0] if k > 1 else np.full(len(rows), NO_MATCH)
    ok = best <= max_hamming
    if ratio < 1.0:
        ok &= (best < ratio * second) | (second >= NO_MATCH)
    lm_rows = rows[ok]
    kp = np.take_along_axis(safe, order[:, :1], axis=1)[:, 0][ok]
    d = best[ok]
    # one landmark per keypoint: keep the smallest distance, ties to lower row
    o = np.lexsort((lm_rows, d, kp))
    kp, lm_rows = kp[o], lm_rows[o]
    first = np.concatenate([[True], kp[1:] != kp[:-1]]) if len(kp) else np.zeros(0, bool)
    return lm_rows[first], kp[first], in_view


def epipolar_mask(pose1, pose2, b1, b2, max_angle):
    """Pairs (i, j) whose bearings are consistent with the relative motion.

    b2[j] must lie within ``max_angle`` of the epipolar plane of b1[i], and
    the two rays must not diverge behind either camera.
    """
    rel = pose2 @ pose1.inverse()
    R, t = rel.R, rel.t
    if np.linalg.norm(t) == 0:
        return np.zeros((len(b1), len(b2)), bool)
    n = np.cross(t[None, :], b1 @ R.T)  # normals of epipolar planes in camera 2
    n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
    return np.abs(n @ b2.T) < np.sin(max_angle)
