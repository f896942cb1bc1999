"""Trajectory text files: ``timestamp tx ty tz qx qy qz qw`` per line.

Each line holds the camera-to-world pose (camera position and orientation in
the world), printed with 17 significant digits so values round-trip exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..eval.ate import Trajectory
from ..geometry.transforms import SE3Pose


class TrajectoryFormatError(ValueError):
    pass


def format_trajectory(traj: Trajectory) -> str:
    lines = []
    for ts, pose in traj:
        inv = pose.inverse()
        w, x, y, z = inv.q
        vals = [ts, *inv.t, x, y, z, w]
        lines.append(" ".join(f"{float(v):.17g}" for v in vals))
    return "\n".join(lines) + ("\n" if lines else "")


def write_trajectory(traj: Trajectory, path):
    Path(path).write_text(format_trajectory(traj))


def parse_trajectory(text: str, source="<trajectory>") -> Trajectory:
    ts, poses = [], []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 8:
            raise TrajectoryFormatError(f"{source}:{n}: expected 8 values, got {len(parts)}")
        try:
            v = [float(p) for p in parts]
        except ValueError:
            raise TrajectoryFormatError(f"{source}:{n}: non-numeric value") from None
        q = np.array([v[7], v[4], v[5], v[6]])
        if not np.linalg.norm(q) > 0:
            raise TrajectoryFormatError(f"{source}:{n}: zero quaternion")
        ts.append(v[0])
        poses.append(SE3Pose(q, v[1:4]).inverse())
    if np.any(np.diff(ts) <= 0):
        raise TrajectoryFormatError(f"{source}: timestamps are not strictly increasing")
    return Trajectory(ts, poses)


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    return parse_trajectory(path.read_text(), str(path))
