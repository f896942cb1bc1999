"""Camera models mapping pixels to unit bearing vectors and back.

Every model shares one contract: ``unproject`` turns a pixel into a unit
bearing in the camera frame (x right, y down, z forward) and ``project``
maps a bearing, or any point in the camera frame, back to a pixel. The rest
of the library only ever looks at bearings, which is what lets a single
tracking and mapping pipeline run on perspective, fisheye and
equirectangular images.

New models subclass :class:`CameraModel` and register themselves with
:func:`register_camera` under the string used as ``camera.kind`` in config
files.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

UNDISTORT_MAX_ITER = 20
UNDISTORT_TOL = 1e-10

_REGISTRY: dict[str, type["CameraModel"]] = {}


class CameraError(ValueError):
    """Invalid camera parameters or a pixel/point outside the model's domain."""


class UndistortionError(CameraError):
    pass


def register_camera(kind):
    def wrap(cls):
        cls.kind = kind
        _REGISTRY[kind] = cls
        return cls

    return wrap


def camera_kinds():
    return sorted(_REGISTRY)


def camera_from_dict(params: dict) -> "CameraModel":
    """Build a camera from a flat parameter dict containing ``kind``."""
    params = dict(params)
    kind = params.pop("kind", None)
    if kind not in _REGISTRY:
        raise CameraError(f"unknown camera kind {kind!r}; known: {camera_kinds()}")
    cls = _REGISTRY[kind]
    names = {f.name for f in fields(cls)}
    unknown = set(params) - names
    if unknown:
        raise CameraError(f"unknown parameters for {kind} camera: {sorted(unknown)}")
    return cls(**params)


def normalize(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True)
class CameraModel:
    width: int
    height: int
    fps: float = 30.0
    color_order: str = "gray"

    kind = "base"

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise CameraError("image size must be positive")
        if not self.fps > 0:
            raise CameraError("fps must be positive")

    def to_dict(self):
        d = {"kind": self.kind}
        d.update(asdict(self))
        return d

    # -- model specific, vectorized over leading axes -------------------
    def project_points(self, points):
        """Pixels for camera-frame points of shape (..., 3).

        Returns ``(uv, valid)``; ``uv`` is meaningless where ``valid`` is False.
        """
        raise NotImplementedError

    def unproject_pixels(self, uv):
        """Unit bearings of shape (..., 3) for pixels of shape (..., 2)."""
        raise NotImplementedError

    def jacobian_points(self, points):
        """d(u, v)/d(X, Y, Z), shape (..., 2, 3). Undefined where invalid."""
        raise NotImplementedError

    @property
    def pixel_angle(self) -> float:
        """Angle subtended by one pixel at the image center, radians."""
        raise NotImplementedError

    # -- scalar conveniences ---------------------------------------------
    def project(self, bearing):
        """Pixel for one bearing, or None outside the field of view."""
        uv, ok = self.project_points(np.asarray(bearing, dtype=float)[None])
        return uv[0] if ok[0] else None

    def unproject(self, pixel):
        return self.unproject_pixels(np.asarray(pixel, dtype=float)[None])[0]

    def projection_jacobian(self, point):
        point = np.asarray(point, dtype=float)
        _, ok = self.project_points(point[None])
        if not ok[0]:
            raise CameraError(f"point {point} is outside the field of view")
        return self.jacobian_points(point[None])[0]

    def in_image(self, uv, margin=0.0):
        uv = np.asarray(uv, dtype=float)
        return (
            (uv[..., 0] >= margin)
            & (uv[..., 0] < self.width - margin)
            & (uv[..., 1] >= margin)
            & (uv[..., 1] < self.height - margin)
        )

    def visible(self, points, margin=0.0):
        """Mask of camera-frame points that land inside the image."""
        uv, ok = self.project_points(points)
        return ok & self.in_image(uv, margin)


def _check_pinhole(cam):
    if not (cam.fx > 0 and cam.fy > 0):
        raise CameraError("focal lengths must be positive")
    if not (0 <= cam.cx < cam.width and 0 <= cam.cy < cam.height):
        raise CameraError("principal point must lie inside the image")


@register_camera("perspective")
@dataclass(frozen=True)
class PerspectiveCamera(CameraModel):
    """Pinhole with Brown-Conrady distortion (k1, k2, p1, p2, k3)."""

    fx: float = 1.0
    fy: float = 1.0
    cx: float = 0.0
    cy: float = 0.0
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    k3: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        _check_pinhole(self)

    @property
    def pixel_angle(self):
        return 1.0 / max(self.fx, self.fy)

    @property
    def has_distortion(self):
        return any((self.k1, self.k2, self.p1, self.p2, self.k3))

    def _distort(self, x, y):
        r2 = x * x + y * y
        radial = 1 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
        xd = x * radial + 2 * self.p1 * x * y + self.p2 * (r2 + 2 * x * x)
        yd = y * radial + self.p1 * (r2 + 2 * y * y) + 2 * self.p2 * x * y
        return xd, yd

    def _distort_jacobian(self, x, y):
        r2 = x * x + y * y
        radial = 1 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
        dradial = self.k1 + 2 * self.k2 * r2 + 3 * self.k3 * r2 * r2  # d radial / d r2
        dxx = radial + 2 * x * x * dradial + 2 * self.p1 * y + 6 * self.p2 * x
        dxy = 2 * x * y * dradial + 2 * self.p1 * x + 2 * self.p2 * y
        dyx = 2 * x * y * dradial + 2 * self.p1 * x + 2 * self.p2 * y
        dyy = radial + 2 * y * y * dradial + 6 * self.p1 * y + 2 * self.p2 * x
        return dxx, dxy, dyx, dyy

    def project_points(self, points):
        points = np.asarray(points, dtype=float)
        z = points[..., 2]
        valid = z > 0
        zs = np.where(valid, z, 1.0)
        x, y = points[..., 0] / zs, points[..., 1] / zs
        if self.has_distortion:
            x, y = self._distort(x, y)
        uv = np.stack([self.fx * x + self.cx, self.fy * y + self.cy], axis=-1)
        return uv, valid

    def unproject_pixels(self, uv):
        uv = np.asarray(uv, dtype=float)
        xd = (uv[..., 0] - self.cx) / self.fx
        yd = (uv[..., 1] - self.cy) / self.fy
        x, y = xd.copy(), yd.copy()
        if self.has_distortion:
            # Newton iteration on the 2x2 distortion map.
            for _ in range(UNDISTORT_MAX_ITER):
                ex, ey = self._distort(x, y)
                ex, ey = ex - xd, ey - yd
                a, b, c, d = self._distort_jacobian(x, y)
                det = a * d - b * c
                dx = (d * ex - b * ey) / det
                dy = (-c * ex + a * ey) / det
                x, y = x - dx, y - dy
                if np.all(np.abs(dx) + np.abs(dy) < UNDISTORT_TOL * 1e-3):
                    break
            ex, ey = self._distort(x, y)
            resid = np.hypot(ex - xd, ey - yd)
            if not np.all(resid < UNDISTORT_TOL):
                raise UndistortionError("undistortion did not converge; check calibration or pixel")
        return normalize(np.stack([x, y, np.ones_like(x)], axis=-1))

    def jacobian_points(self, points):
        points = np.asarray(points, dtype=float)
        X, Y, Z = points[..., 0], points[..., 1], points[..., 2]
        x, y = X / Z, Y / Z
        if self.has_distortion:
            a, b, c, d = self._distort_jacobian(x, y)
        else:
            a, b, c, d = np.ones_like(x), np.zeros_like(x), np.zeros_like(x), np.ones_like(x)
        # d(x, y)/d(X, Y, Z)
        zero = np.zeros_like(X)
        dn = np.stack(
            [np.stack([1 / Z, zero, -X / Z**2], -1), np.stack([zero, 1 / Z, -Y / Z**2], -1)], -2
        )
        D = np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)
        F = np.zeros(points.shape[:-1] + (2, 2))
        F[..., 0, 0] = self.fx
        F[..., 1, 1] = self.fy
        return F @ D @ dn


@register_camera("fisheye")
@dataclass(frozen=True)
class FisheyeCamera(CameraModel):
    """Equidistant fisheye, r = f * theta_d with
    theta_d = theta (1 + k1 theta^2 + k2 theta^4 + k3 theta^6 + k4 theta^8).
    """

    fx: float = 1.0
    fy: float = 1.0
    cx: float = 0.0
    cy: float = 0.0
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    k4: float = 0.0
    max_fov_deg: float = 200.0

    def __post_init__(self):
        super().__post_init__()
        _check_pinhole(self)
        if not 0 < self.max_fov_deg <= 360:
            raise CameraError("max_fov_deg must be in (0, 360]")

    @property
    def pixel_angle(self):
        return 1.0 / max(self.fx, self.fy)

    @property
    def max_theta(self):
        return np.deg2rad(self.max_fov_deg) / 2.0

    def _theta_d(self, th):
        t2 = th * th
        return th * (1 + t2 * (self.k1 + t2 * (self.k2 + t2 * (self.k3 + t2 * self.k4))))

    def _dtheta_d(self, th):
        t2 = th * th
        return 1 + t2 * (3 * self.k1 + t2 * (5 * self.k2 + t2 * (7 * self.k3 + t2 * 9 * self.k4)))

    def project_points(self, points):
        points = np.asarray(points, dtype=float)
        X, Y, Z = points[..., 0], points[..., 1], points[..., 2]
        r = np.hypot(X, Y)
        th = np.arctan2(r, Z)
        valid = (th < self.max_theta) & (np.linalg.norm(points, axis=-1) > 0)
        td = self._theta_d(th)
        # td / r, with its on-axis limit 1 / Z
        small = r < 1e-12
        g = np.where(small, 1.0 / np.where(Z == 0, 1.0, Z), td / np.where(small, 1.0, r))
        uv = np.stack([self.fx * g * X + self.cx, self.fy * g * Y + self.cy], axis=-1)
        return uv, valid

    def unproject_pixels(self, uv):
        uv = np.asarray(uv, dtype=float)
        mx = (uv[..., 0] - self.cx) / self.fx
        my = (uv[..., 1] - self.cy) / self.fy
        td = np.hypot(mx, my)
        th = td.copy()
        if any((self.k1, self.k2, self.k3, self.k4)):
            for _ in range(UNDISTORT_MAX_ITER):
                step = (self._theta_d(th) - td) / self._dtheta_d(th)
                th = th - step
                if np.all(np.abs(step) < UNDISTORT_TOL * 1e-3):
                    break
            if not np.all(np.abs(self._theta_d(th) - td) < UNDISTORT_TOL):
                raise UndistortionError("fisheye undistortion did not converge")
        small = td < 1e-15
        scale = np.where(small, 1.0, np.sin(th) / np.where(small, 1.0, td))
        return normalize(np.stack([mx * scale, my * scale, np.cos(th)], axis=-1))

    def jacobian_points(self, points):
        points = np.asarray(points, dtype=float)
        X, Y, Z = points[..., 0], points[..., 1], points[..., 2]
        r2 = X * X + Y * Y
        r = np.sqrt(r2)
        rho2 = r2 + Z * Z
        th = np.arctan2(r, Z)
        td = self._theta_d(th)
        dtd = self._dtheta_d(th)
        out = np.zeros(points.shape[:-1] + (2, 3))
        small = r < 1e-9
        rs = np.where(small, 1.0, r)
        g = td / rs
        # dg/dr and dg/dZ with theta = atan2(r, Z)
        dg_dr = (dtd * Z / rho2 * rs - td) / rs**2
        dg_dZ = dtd * (-rs / rho2) / rs
        dgX, dgY = dg_dr * X / rs, dg_dr * Y / rs
        out[..., 0, 0] = self.fx * (g + X * dgX)
        out[..., 0, 1] = self.fx * X * dgY
        out[..., 0, 2] = self.fx * X * dg_dZ
        out[..., 1, 0] = self.fy * Y * dgX
        out[..., 1, 1] = self.fy * (g + Y * dgY)
        out[..., 1, 2] = self.fy * Y * dg_dZ
        if np.any(small):
            # on-axis limit: behaves like a pinhole with the same focal length
            Zs = Z[small]
            lim = np.zeros(Zs.shape + (2, 3))
            lim[..., 0, 0] = self.fx / Zs
            lim[..., 1, 1] = self.fy / Zs
            lim[..., 0, 2] = -self.fx * X[small] / Zs**2
            lim[..., 1, 2] = -self.fy * Y[small] / Zs**2
            out[small] = lim
        return out


@register_camera("equirectangular")
@dataclass(frozen=True)
class EquirectangularCamera(CameraModel):
    """Full-sphere longitude/latitude panorama.

    longitude = atan2(x, z) in (-pi, pi], latitude = asin(-y);
    u = W (0.5 + lon / 2 pi), v = H (0.5 - lat / pi).
    """

    def __post_init__(self):
        super().__post_init__()
        if self.width != 2 * self.height:
            raise CameraError("equirectangular images need width == 2 * height")

    @property
    def pixel_angle(self):
        return 2 * np.pi / self.width

    def project_points(self, points):
        points = np.asarray(points, dtype=float)
        X, Y, Z = points[..., 0], points[..., 1], points[..., 2]
        lon = np.arctan2(X, Z)
        lat = np.arctan2(-Y, np.hypot(X, Z))
        uv = np.stack(
            [self.width * (0.5 + lon / (2 * np.pi)), self.height * (0.5 - lat / np.pi)], axis=-1
        )
        return uv, np.linalg.norm(points, axis=-1) > 0

    def unproject_pixels(self, uv):
        uv = np.asarray(uv, dtype=float)
        lon = 2 * np.pi * (uv[..., 0] / self.width - 0.5)
        lat = np.pi * (0.5 - uv[..., 1] / self.height)
        c = np.cos(lat)
        return np.stack([c * np.sin(lon), -np.sin(lat), c * np.cos(lon)], axis=-1)

    def jacobian_points(self, points):
        points = np.asarray(points, dtype=float)
        X, Y, Z = points[..., 0], points[..., 1], points[..., 2]
        h2 = X * X + Z * Z
        h = np.sqrt(h2)
        rho2 = h2 + Y * Y
        ku = self.width / (2 * np.pi)
        kv = -self.height / np.pi
        out = np.zeros(points.shape[:-1] + (2, 3))
        out[..., 0, 0] = ku * Z / h2
        out[..., 0, 2] = -ku * X / h2
        # lat = atan2(-Y, h)
        out[..., 1, 0] = kv * Y * X / (h * rho2)
        out[..., 1, 1] = kv * (-h / rho2)
        out[..., 1, 2] = kv * Y * Z / (h * rho2)
        return out

    def in_image(self, uv, margin=0.0):
        # the horizontal seam wraps around, so only the poles have a border
        uv = np.asarray(uv, dtype=float)
        return (uv[..., 1] >= margin) & (uv[..., 1] < self.height - margin)


def pixel_grid(camera: CameraModel, n: int, margin: float = 0.5):
    """Roughly ``n`` pixels on a regular grid covering the image."""
    aspect = camera.width / camera.height
    ny = max(2, int(round(np.sqrt(n / aspect))))
    nx = max(2, int(round(n / ny)))
    us = np.linspace(margin, camera.width - margin, nx)
    vs = np.linspace(margin, camera.height - margin, ny)
    return np.stack(np.meshgrid(us, vs), axis=-1).reshape(-1, 2)
