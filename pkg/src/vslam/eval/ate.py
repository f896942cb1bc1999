"""Trajectory container, Umeyama alignment and absolute trajectory error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry.multiview import umeyama
from ..geometry.transforms import SE3Pose, Sim3Transform

ASSOCIATION_WINDOW = 0.020  # seconds


class AlignmentError(ValueError):
    """Too few or degenerate correspondences to align two trajectories."""


class Trajectory:
    """Timestamped world->camera poses with strictly increasing timestamps."""

    def __init__(self, timestamps=(), poses=()):
        self.timestamps = np.asarray(timestamps, dtype=float).reshape(-1)
        self.poses = list(poses)
        if len(self.timestamps) != len(self.poses):
            raise ValueError("timestamps and poses differ in length")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("trajectory timestamps must be strictly increasing")

    def __len__(self):
        return len(self.poses)

    def __iter__(self):
        return iter(zip(self.timestamps.tolist(), self.poses))

    def positions(self):
        """Camera centers in world coordinates, shape (N, 3)."""
        if not self.poses:
            return np.zeros((0, 3))
        return np.stack([p.center for p in self.poses])

    def transformed(self, S: Sim3Transform) -> "Trajectory":
        """Apply a world-frame similarity to every camera (positions map by S)."""
        Sinv = S.inverse()
        return Trajectory(self.timestamps, [(p.to_sim3() @ Sinv).to_se3() for p in self.poses])

    def diameter(self) -> float:
        P = self.positions()
        if len(P) < 2:
            return 0.0
        from scipy.spatial.distance import pdist

        return float(pdist(P).max())


def umeyama_align(src, dst, with_scale=True) -> Sim3Transform:
    """Least-squares transform T minimizing sum |dst - T(src)|^2.

    The scale is fixed to 1 when ``with_scale`` is False. Raises
    :class:`AlignmentError` for fewer than 3 pairs or a collinear set.
    """
    try:
        R, t, s = umeyama(src, dst, with_scale)
    except ValueError as exc:
        raise AlignmentError(f"rank-deficient alignment: {exc}") from None
    return Sim3Transform.from_rts(R, t, s)


def associate(ts_a, ts_b, window=ASSOCIATION_WINDOW):
    """Nearest-timestamp pairs (i, j) with |ta - tb| <= window, one-to-one."""
    ts_a = np.asarray(ts_a, dtype=float)
    ts_b = np.asarray(ts_b, dtype=float)
    if len(ts_a) == 0 or len(ts_b) == 0:
        return np.zeros((0, 2), dtype=int)
    j = np.clip(np.searchsorted(ts_b, ts_a), 1, len(ts_b) - 1) if len(ts_b) > 1 else np.zeros(len(ts_a), int)
    if len(ts_b) > 1:
        left = j - 1
        j = np.where(np.abs(ts_b[left] - ts_a) <= np.abs(ts_b[j] - ts_a), left, j)
    gap = np.abs(ts_b[j] - ts_a)
    pairs = [(i, jj) for i, (jj, g) in enumerate(zip(j, gap)) if g <= window + 1e-12]
    # keep the closest claimant of each ground-truth stamp
    best = {}
    for i, jj in pairs:
        if jj not in best or gap[i] < gap[best[jj]]:
            best[jj] = i
    out = sorted((i, jj) for jj, i in best.items())
    return np.array(out, dtype=int).reshape(-1, 2)


@dataclass
class AteReport:
    rmse: float
    mean: float
    median: float
    max: float
    alignment: Sim3Transform
    matched: int
    errors: np.ndarray

    def table(self) -> str:
        rows = [("rmse", self.rmse), ("mean", self.mean), ("median", self.median), ("max", self.max)]
        lines = [f"{k:<8}{v:.6f}" for k, v in rows]
        lines.append(f"{'matched':<8}{self.matched}")
        lines.append(f"{'scale':<8}{self.alignment.s:.6f}")
        return "\n".join(lines)


def compute_ate(estimated: Trajectory, ground_truth: Trajectory, alignment="sim3", window=ASSOCIATION_WINDOW):
    """Translational ATE after aligning ``estimated`` onto ``ground_truth``."""
    if alignment not in ("sim3", "se3"):
        raise ValueError(f"alignment must be 'sim3' or 'se3', got {alignment!r}")
    pairs = associate(estimated.timestamps, ground_truth.timestamps, window)
    if len(pairs) < 3:
        raise AlignmentError(f"only {len(pairs)} timestamp associations within {window * 1e3:.0f} ms")
    P = estimated.positions()[pairs[:, 0]]
    Q = ground_truth.positions()[pairs[:, 1]]
    S = umeyama_align(P, Q, with_scale=alignment == "sim3")
    err = np.linalg.norm(S.apply(P) - Q, axis=1)
    return AteReport(
        rmse=float(np.sqrt(np.mean(err**2))),
        mean=float(err.mean()),
        median=float(np.median(err)),
        max=float(err.max()),
        alignment=S,
        matched=len(pairs),
        errors=err,
    )


def poses_from_centers(centers, rotations=None):
    """World->camera poses for given camera centers (identity orientation by default)."""
    centers = np.asarray(centers, dtype=float)
    out = []
    for k, c in enumerate(centers):
        R = np.eye(3) if rotations is None else rotations[k]
        out.append(SE3Pose.from_rt(R, -R @ c))
    return out
