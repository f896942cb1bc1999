"""Rigid (SE3) and similarity (Sim3) transforms.

Rotations are stored as unit quaternions ``(w, x, y, z)`` with ``w >= 0``.
The quaternion is the canonical state; rotation matrices are derived from it.
This keeps serialization exact: a pose written as quaternion + translation
reads back into an identical object.

Tangent vector ordering is ``(rho, phi)`` for se3 and ``(rho, phi, sigma)``
for sim3, translation part first.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import expm

_SMALL_ANGLE = 1e-6


def hat(v):
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def hat_many(v):
    """Skew matrices for an (N, 3) array."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _canonical_quat(q):
    q = np.array(q, dtype=float).reshape(4)
    n = np.linalg.norm(q)
    # renormalizing an already-unit quaternion can flip low bits; skipping it
    # keeps stored poses bit-exact through save/load cycles
    if abs(n - 1.0) > 1e-12:
        q = q / n
    if q[0] < 0:
        q = -q
    return q + 0.0  # drops negative zeros so encodings are canonical


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R):
    """Shepperd's method; input must be a rotation matrix."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return _canonical_quat(q)


def so3_exp(phi):
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = hat(phi)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + np.sin(theta) / theta * K + (1 - np.cos(theta)) / theta**2 * K @ K


def so3_exp_many(phi):
    """Vectorized Rodrigues formula for an (N, 3) array of rotation vectors."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    K = hat_many(phi)
    K2 = K @ K
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1 - np.cos(safe)) / safe**2)
    return np.eye(3) + a[..., None, None] * K + b[..., None, None] * K2


def quat_log(q):
    """Rotation vector of a unit quaternion, robust up to angle pi."""
    q = _canonical_quat(q)
    w, v = q[0], q[1:]
    n = np.linalg.norm(v)
    if n < 1e-12:
        return 2.0 * v / w
    return 2.0 * np.arctan2(n, w) * v / n


def so3_log(R):
    return quat_log(matrix_to_quat(R))


def so3_left_jacobian(phi):
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = hat(phi)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * K + K @ K / 6.0
    return (
        np.eye(3)
        + (1 - np.cos(theta)) / theta**2 * K
        + (theta - np.sin(theta)) / theta**3 * K @ K
    )


@dataclass(frozen=True, eq=False)
class SE3Pose:
    """Rigid transform x -> R x + t."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _canonical_quat(self.q))
        object.__setattr__(self, "t", np.array(self.t, dtype=float).reshape(3) + 0.0)

    @classmethod
    def identity(cls):
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_rt(cls, R, t):
        return cls(matrix_to_quat(R), t)

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls.from_rt(T[:3, :3], T[:3, 3])

    @classmethod
    def exp(cls, xi):
        xi = np.asarray(xi, dtype=float)
        rho, phi = xi[:3], xi[3:]
        return cls.from_rt(so3_exp(phi), so3_left_jacobian(phi) @ rho)

    @cached_property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def log(self):
        phi = quat_log(self.q)
        rho = np.linalg.solve(so3_left_jacobian(phi), self.t)
        return np.concatenate([rho, phi])

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def inverse(self):
        q = self.q * np.array([1.0, -1.0, -1.0, -1.0])
        return SE3Pose(q, -self.R.T @ self.t)

    def __matmul__(self, other):
        if isinstance(other, SE3Pose):
            return SE3Pose.from_rt(self.R @ other.R, self.R @ other.t + self.t)
        return NotImplemented

    def apply(self, points):
        points = np.asarray(points, dtype=float)
        return points @ self.R.T + self.t

    @property
    def center(self):
        """Camera center in world coordinates, for a world->camera pose."""
        return -self.R.T @ self.t

    def to_sim3(self):
        return Sim3Transform(self.q, self.t, 1.0)

    def left_perturb(self, delta):
        """exp(delta) * self, the update rule used by the optimizers."""
        return SE3Pose.exp(delta) @ self

    def __repr__(self):
        return f"SE3Pose(q={self.q.tolist()}, t={self.t.tolist()})"


def sim3_generator(xi):
    xi = np.asarray(xi, dtype=float)
    M = np.zeros((4, 4))
    M[:3, :3] = hat(xi[3:6]) + xi[6] * np.eye(3)
    M[:3, 3] = xi[:3]
    return M


def sim3_V(phi, sigma):
    """Integral of exp(s*(sigma I + [phi]x)) over s in [0, 1]."""
    A = np.zeros((6, 6))
    A[:3, :3] = hat(phi) + sigma * np.eye(3)
    A[:3, 3:] = np.eye(3)
    return expm(A)[:3, 3:]


def sim3_ad(xi):
    """Matrix of the Lie bracket [xi, .] on sim3."""
    xi = np.asarray(xi, dtype=float)
    rho, phi, sigma = xi[:3], xi[3:6], xi[6]
    ad = np.zeros((7, 7))
    ad[:3, :3] = hat(phi) + sigma * np.eye(3)
    ad[:3, 3:6] = hat(rho)
    ad[:3, 6] = -rho
    ad[3:6, 3:6] = hat(phi)
    return ad


def sim3_right_jacobian_inv(xi):
    """Inverse right Jacobian of sim3, exact up to rounding."""
    A = np.zeros((14, 14))
    A[:7, :7] = -sim3_ad(xi)
    A[:7, 7:] = np.eye(7)
    Jr = expm(A)[:7, 7:]
    return np.linalg.inv(Jr)


@dataclass(frozen=True, eq=False)
class Sim3Transform:
    """Similarity transform x -> s R x + t."""

    q: np.ndarray
    t: np.ndarray
    s: float = 1.0

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"Sim3 scale must be positive, got {self.s}")
        object.__setattr__(self, "q", _canonical_quat(self.q))
        object.__setattr__(self, "t", np.array(self.t, dtype=float).reshape(3) + 0.0)
        object.__setattr__(self, "s", float(self.s))

    @classmethod
    def identity(cls):
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3), 1.0)

    @classmethod
    def from_rts(cls, R, t, s):
        return cls(matrix_to_quat(R), t, s)

    @classmethod
    def exp(cls, xi):
        T = expm(sim3_generator(xi))
        s = np.exp(xi[6])
        return cls.from_rts(T[:3, :3] / s, T[:3, 3], s)

    @cached_property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def log(self):
        phi = quat_log(self.q)
        sigma = np.log(self.s)
        rho = np.linalg.solve(sim3_V(phi, sigma), self.t)
        return np.concatenate([rho, phi, [sigma]])

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.s * self.R
        T[:3, 3] = self.t
        return T

    def inverse(self):
        Rt = self.R.T
        return Sim3Transform.from_rts(Rt, -Rt @ self.t / self.s, 1.0 / self.s)

    def __matmul__(self, other):
        if isinstance(other, SE3Pose):
            other = other.to_sim3()
        if isinstance(other, Sim3Transform):
            return Sim3Transform.from_rts(
                self.R @ other.R, self.s * (self.R @ other.t) + self.t, self.s * other.s
            )
        return NotImplemented

    def apply(self, points):
        points = np.asarray(points, dtype=float)
        return self.s * (points @ self.R.T) + self.t

    def adjoint(self):
        ad = np.zeros((7, 7))
        ad[:3, :3] = self.s * self.R
        ad[:3, 3:6] = hat(self.t) @ self.R
        ad[:3, 6] = -self.t
        ad[3:6, 3:6] = self.R
        ad[6, 6] = 1.0
        return ad

    def to_se3(self):
        """Drop the scale, keeping the rotation and rescaling translation.

        For a world->camera similarity this yields the rigid pose of the same
        camera in the scaled world frame.
        """
        return SE3Pose(self.q, self.t / self.s)

    def __repr__(self):
        return f"Sim3Transform(q={self.q.tolist()}, t={self.t.tolist()}, s={self.s})"


def rotation_angle(R):
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def rotation_distance(R1, R2):
    """Geodesic angle between two rotations, accurate for tiny angles."""
    return float(np.linalg.norm(so3_log(R1.T @ R2)))
