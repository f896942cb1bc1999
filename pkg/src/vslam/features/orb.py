"""FAST keypoints on an image pyramid with oriented binary descriptors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .pattern import PATTERN

# 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock, as (dx, dy)
CIRCLE = np.array(
    [
        (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
        (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
    ]
)  # fmt: skip
ARC = 9
PATCH_RADIUS = 15
EDGE = 19  # pattern radius 13 + rounding, patch radius 15 + 3 for FAST


@dataclass(frozen=True)
class FeatureParams:
    max_keypoints: int = 2000
    scale_factor: float = 1.2
    num_levels: int = 8
    fast_threshold: int = 20
    cell_size: int = 32

    def __post_init__(self):
        if self.max_keypoints <= 0 or self.num_levels <= 0 or self.cell_size <= 0:
            raise ValueError("feature parameters must be positive")
        if not self.scale_factor > 1.0:
            raise ValueError("scale_factor must exceed 1")


@dataclass(frozen=True)
class Keypoint:
    u: float
    v: float
    octave: int
    angle: float
    response: float


@dataclass
class FeatureFrame:
    """Keypoints of one image as parallel arrays.

    ``uv`` is in level-0 pixel coordinates whatever the octave.
    """

    uv: np.ndarray
    octave: np.ndarray
    angle: np.ndarray
    response: np.ndarray
    descriptors: np.ndarray
    bearings: np.ndarray
    scale_factor: float = 1.2

    def __post_init__(self):
        n = len(self.uv)
        self.uv = np.asarray(self.uv, dtype=float).reshape(n, 2)
        self.octave = np.asarray(self.octave, dtype=np.int64).reshape(n)
        self.angle = np.asarray(self.angle, dtype=float).reshape(n)
        self.response = np.asarray(self.response, dtype=float).reshape(n)
        self.descriptors = np.asarray(self.descriptors, dtype=np.uint8).reshape(n, 32)
        self.bearings = np.asarray(self.bearings, dtype=float).reshape(n, 3)

    def __len__(self):
        return len(self.uv)

    def keypoint(self, i) -> Keypoint:
        return Keypoint(
            float(self.uv[i, 0]), float(self.uv[i, 1]), int(self.octave[i]),
            float(self.angle[i]), float(self.response[i]),
        )  # fmt: skip

    @classmethod
    def empty(cls, scale_factor=1.2):
        return cls(
            np.zeros((0, 2)), np.zeros(0), np.zeros(0), np.zeros(0),
            np.zeros((0, 32), np.uint8), np.zeros((0, 3)), scale_factor,
        )  # fmt: skip

    def subset(self, idx):
        idx = np.asarray(idx)
        return FeatureFrame(
            self.uv[idx], self.octave[idx], self.angle[idx], self.response[idx],
            self.descriptors[idx], self.bearings[idx], self.scale_factor,
        )  # fmt: skip

    @classmethod
    def from_keypoints(cls, camera, uv, octave, angle, response, descriptors, scale_factor=1.2):
        uv = np.asarray(uv, dtype=float).reshape(-1, 2)
        bearings = camera.unproject_pixels(uv) if len(uv) else np.zeros((0, 3))
        return cls(uv, octave, angle, response, descriptors, bearings, scale_factor)


def build_pyramid(image, params: FeatureParams):
    image = np.asarray(image, dtype=np.float32)
    levels = [image]
    h, w = image.shape
    for k in range(1, params.num_levels):
        s = params.scale_factor**k
        hk, wk = int(round(h / s)), int(round(w / s))
        ys = (np.arange(hk) + 0.5) * s - 0.5
        xs = (np.arange(wk) + 0.5) * s - 0.5
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        # low-pass first so a sub-pixel shift of the input does not alias at coarse levels
        blurred = ndimage.gaussian_filter(image, 0.5 * np.sqrt(s * s - 1.0), mode="nearest")
        levels.append(
            ndimage.map_coordinates(blurred, [yy, xx], order=1, mode="nearest").astype(np.float32)
        )
    return levels


def fast_score(img):
    """FAST-9 score for every pixel (0 on the 3 px border).

    The score is the largest threshold t for which the pixel still passes the
    segment test, i.e. the pixel is a corner at threshold t iff score > t.
    """
    img = np.asarray(img, dtype=np.float32)
    h, w = img.shape
    score = np.zeros((h, w), dtype=np.float32)
    if h < 7 or w < 7:
        return score
    c = img[3 : h - 3, 3 : w - 3]
    ring = np.stack([img[3 + dy : h - 3 + dy, 3 + dx : w - 3 + dx] for dx, dy in CIRCLE]) - c
    best = np.zeros_like(c)
    for sign in (1.0, -1.0):
        d = sign * ring
        ext = np.concatenate([d, d[: ARC - 1]])
        run = ext[:16].copy()
        for j in range(1, ARC):
            np.minimum(run, ext[j : j + 16], out=run)
        np.maximum(best, run.max(axis=0), out=best)
    # the test is strict: corner iff every arc difference exceeds t
    score[3 : h - 3, 3 : w - 3] = np.maximum(best, 0.0)
    return score


def harris_response(img, block=7, k=0.04):
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    a = ndimage.uniform_filter(gx * gx, block)
    b = ndimage.uniform_filter(gy * gy, block)
    c = ndimage.uniform_filter(gx * gy, block)
    return a * b - c * c - k * (a + b) ** 2


def _level_budget(params: FeatureParams):
    inv = 1.0 / params.scale_factor
    first = params.max_keypoints * (1 - inv) / (1 - inv**params.num_levels)
    budget = [int(round(first * inv**k)) for k in range(params.num_levels)]
    budget[0] += params.max_keypoints - sum(budget)
    return budget


def _detect_level(img, params: FeatureParams, n_target):
    h, w = img.shape
    score = fast_score(img)
    t = float(params.fast_threshold)
    strong = score > t
    weak = score > t / 2.0
    inner = np.zeros_like(strong)
    inner[EDGE : h - EDGE, EDGE : w - EDGE] = True
    resp = harris_response(img)
    # Harris breaks ties between equal FAST scores on corner plateaus
    key = score + 1e-3 * resp / (np.abs(resp).max() + 1e-12)
    peak = (key == ndimage.maximum_filter(key, size=3, mode="constant")) & (score > 0)

    cs = params.cell_size
    chosen = []
    n_cells = max(1, ((h - 2 * EDGE) // cs + 1) * ((w - 2 * EDGE) // cs + 1))
    per_cell = max(1, int(np.ceil(2.0 * n_target / n_cells)))
    for y0 in range(EDGE, h - EDGE, cs):
        for x0 in range(EDGE, w - EDGE, cs):
            sl = (slice(y0, min(y0 + cs, h - EDGE)), slice(x0, min(x0 + cs, w - EDGE)))
            cand = strong[sl] & peak[sl] & inner[sl]
            if not cand.any():
                # halve the threshold once for low-contrast cells
                cand = weak[sl] & peak[sl] & inner[sl]
            ys, xs = np.nonzero(cand)
            if len(ys) == 0:
                continue
            r = resp[sl][ys, xs]
            order = np.argsort(-r, kind="stable")[:per_cell]
            chosen.append(np.stack([xs[order] + x0, ys[order] + y0, r[order]], axis=1))
    if not chosen:
        return np.zeros((0, 3))
    pts = np.concatenate(chosen)
    order = np.argsort(-pts[:, 2], kind="stable")[:n_target]
    return pts[order]


_DISC = np.add.outer(
    np.arange(-PATCH_RADIUS, PATCH_RADIUS + 1) ** 2, np.arange(-PATCH_RADIUS, PATCH_RADIUS + 1) ** 2
) <= PATCH_RADIUS**2
_OFFS = np.arange(-PATCH_RADIUS, PATCH_RADIUS + 1)


def _orientation(img, xs, ys):
    """Intensity-centroid angle inside a disc of radius 15 (image y points down)."""
    yy = ys[:, None, None] + _OFFS[None, :, None]
    xx = xs[:, None, None] + _OFFS[None, None, :]
    patch = img[yy, xx] * _DISC
    m10 = (patch * _OFFS[None, None, :]).sum(axis=(1, 2))
    m01 = (patch * _OFFS[None, :, None]).sum(axis=(1, 2))
    return np.arctan2(m01, m10)


def _describe(smooth, xs, ys, angles):
    c, s = np.cos(angles)[:, None], np.sin(angles)[:, None]
    p = PATTERN.astype(float)

    def sample(px, py):
        rx = np.rint(c * px - s * py).astype(int)
        ry = np.rint(s * px + c * py).astype(int)
        return smooth[ys[:, None] + ry, xs[:, None] + rx]

    bits = sample(p[:, 0], p[:, 1]) < sample(p[:, 2], p[:, 3])
    return np.packbits(bits, axis=1, bitorder="little")


def _snap_to_base(score0, uv, octave, scale_factor):
    """Move coarse-octave keypoints onto the strongest level-0 FAST response
    within one octave pixel, recovering level-0 localization accuracy."""
    h, w = score0.shape
    out = uv.copy()
    for k in np.unique(octave):
        if k == 0:
            continue
        r = int(np.ceil(scale_factor**k)) + 1
        sel = np.nonzero(octave == k)[0]
        cx = np.clip(np.rint(uv[sel, 0]).astype(int), r, w - r - 1)
        cy = np.clip(np.rint(uv[sel, 1]).astype(int), r, h - r - 1)
        offs = np.arange(-r, r + 1)
        win = score0[cy[:, None, None] + offs[None, :, None], cx[:, None, None] + offs[None, None, :]]
        flat = win.reshape(len(sel), -1)
        best = np.argmax(flat, axis=1)
        ok = flat[np.arange(len(sel)), best] > 0
        dy, dx = np.divmod(best, 2 * r + 1)
        out[sel[ok], 0] = cx[ok] + dx[ok] - r
        out[sel[ok], 1] = cy[ok] + dy[ok] - r
    return out


def detect_and_describe(image, params: FeatureParams | None = None, camera=None) -> FeatureFrame:
    """Detect up to ``params.max_keypoints`` oriented FAST keypoints and describe them.

    When ``camera`` is given, bearings are filled in through its ``unproject``;
    otherwise they are left as NaN.
    """
    params = params or FeatureParams()
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("expected a single-channel image")
    if camera is not None and image.shape != (camera.height, camera.width):
        raise ValueError(
            f"image is {image.shape[1]}x{image.shape[0]}, camera expects {camera.width}x{camera.height}"
        )
    smallest = min(image.shape) / params.scale_factor ** (params.num_levels - 1)
    if smallest < 2 * EDGE + 1:
        raise ValueError(
            f"image {image.shape[1]}x{image.shape[0]} is too small for a "
            f"{params.num_levels}-level pyramid with scale {params.scale_factor}"
        )

    pyramid = build_pyramid(image, params)
    budget = _level_budget(params)
    uv, octv, ang, resp, desc = [], [], [], [], []
    for k, img in enumerate(pyramid):
        pts = _detect_level(img, params, budget[k])
        if len(pts) == 0:
            continue
        xs, ys = pts[:, 0].astype(int), pts[:, 1].astype(int)
        smooth = ndimage.gaussian_filter(img, 2.0, truncate=1.5)
        a = _orientation(img, xs, ys)
        s = params.scale_factor**k
        uv.append(np.stack([(xs + 0.5) * s - 0.5, (ys + 0.5) * s - 0.5], axis=1))
        octv.append(np.full(len(xs), k))
        ang.append(a)
        resp.append(pts[:, 2])
        desc.append(_describe(smooth, xs, ys, a))
    if not uv:
        frame = FeatureFrame.empty(params.scale_factor)
        return frame
    uv = np.concatenate(uv)
    octv = np.concatenate(octv)
    uv = _snap_to_base(fast_score(pyramid[0]), uv, octv, params.scale_factor)
    ang, resp, desc = map(np.concatenate, (ang, resp, desc))
    order = np.argsort(-resp, kind="stable")[: params.max_keypoints]
    # keep a stable, response-independent layout: sort survivors by octave then position
    order = order[np.lexsort((uv[order, 0], uv[order, 1], octv[order]))]
    bearings = camera.unproject_pixels(uv[order]) if camera is not None else np.full((len(order), 3), np.nan)
    return FeatureFrame(
        uv[order], octv[order], ang[order], resp[order], desc[order], bearings, params.scale_factor
    )
