"""Dataset readers and the synthetic dataset layout.

Two layouts are recognized inside a dataset directory:

* image folder: ``times.txt`` with one ``timestamp [image path]`` per line
  (paths relative to the ``images`` subfolder; when omitted, the sorted
  image files are paired with the timestamps in order);
* synthetic: ``features.msgpack`` holding the camera and one keypoint set per
  frame, next to ``times.txt``, ``groundtruth.txt`` and ``config.txt``; an
  ``images`` folder may also be present.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import msgpack
import numpy as np

from ..camera import camera_from_dict
from ..features.orb import FeatureFrame

IMAGE_SUFFIXES = (".png", ".pgm", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


class DatasetError(ValueError):
    pass


def load_image(path) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"))
    except (OSError, UnidentifiedImageError) as exc:
        raise DatasetError(f"cannot read image {path}: {exc}") from None


def save_image(img, path):
    from PIL import Image

    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(path)


def _check_monotone(ts, source):
    ts = np.asarray(ts, dtype=float)
    bad = np.nonzero(np.diff(ts) <= 0)[0]
    if len(bad):
        i = int(bad[0]) + 1
        raise DatasetError(f"{source}: timestamps not strictly increasing at entry {i} ({ts[i - 1]!r} -> {ts[i]!r})")


@dataclass
class Dataset:
    root: Path
    timestamps: np.ndarray
    layout: str
    camera: object = None
    image_paths: list = None
    features: list = None
    labels: list = None
    prefer_images: bool = False

    def __len__(self):
        return len(self.timestamps)

    def frame(self, k):
        """Image array, or FeatureFrame for feature-only synthetic data."""
        if self.image_paths is not None and (self.prefer_images or self.features is None):
            return load_image(self.image_paths[k])
        return self.features[k]

    def __iter__(self):
        for k in range(len(self)):
            yield float(self.timestamps[k]), self.frame(k)

    @property
    def groundtruth_path(self):
        p = self.root / "groundtruth.txt"
        return p if p.exists() else None


def _read_times(path):
    ts, names = [], []
    for n, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            ts.append(float(parts[0]))
        except ValueError:
            raise DatasetError(f"{path}:{n}: bad timestamp {parts[0]!r}") from None
        names.append(parts[1] if len(parts) > 1 else None)
    _check_monotone(ts, str(path))
    return np.array(ts), names


def read_dataset(root, images="images", timestamps="times.txt", prefer_images=False) -> Dataset:
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset directory {root} does not exist")
    times_path = root / timestamps
    if not times_path.exists():
        raise DatasetError(f"{root}: missing timestamp file {timestamps}")
    ts, names = _read_times(times_path)
    img_dir = root / images
    image_paths = None
    if img_dir.is_dir():
        if all(n is not None for n in names) and names:
            image_paths = [img_dir / n for n in names]
        else:
            files = sorted(p for p in img_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
            if len(files) != len(ts):
                raise DatasetError(f"{img_dir}: {len(files)} images for {len(ts)} timestamps")
            image_paths = files
        for p in image_paths:
            if not p.exists():
                raise DatasetError(f"image file {p} listed but missing")

    feat_path = root / "features.msgpack"
    if feat_path.exists():
        camera, frames, labels, fts = read_feature_file(feat_path)
        if len(fts) != len(ts) or np.any(fts != ts):
            raise DatasetError(f"{feat_path}: frame timestamps disagree with {timestamps}")
        return Dataset(root, ts, "synthetic", camera, image_paths, frames, labels, prefer_images)
    if image_paths is None:
        raise DatasetError(f"{root}: no images folder and no features.msgpack")
    return Dataset(root, ts, "images", None, image_paths)


def write_feature_file(path, camera, timestamps, frames, labels=None):
    doc = {
        "version": 1,
        "camera": camera.to_dict(),
        "frames": [
            {
                "timestamp": float(t),
                "uv": np.ascontiguousarray(f.uv, dtype="<f8").tobytes(),
                "octave": np.ascontiguousarray(f.octave, dtype="<i4").tobytes(),
                "angle": np.ascontiguousarray(f.angle, dtype="<f8").tobytes(),
                "descriptors": np.ascontiguousarray(f.descriptors, dtype=np.uint8).tobytes(),
                "labels": b"" if labels is None else np.ascontiguousarray(labels[k], dtype="<i8").tobytes(),
            }
            for k, (t, f) in enumerate(zip(timestamps, frames))
        ],
    }
    Path(path).write_bytes(msgpack.packb(doc, use_bin_type=True))


def read_feature_file(path):
    try:
        doc = msgpack.unpackb(Path(path).read_bytes(), raw=False)
        camera = camera_from_dict(doc["camera"])
        frames, labels, ts = [], [], []
        for k, fd in enumerate(doc["frames"]):
            uv = np.frombuffer(fd["uv"], dtype="<f8").reshape(-1, 2)
            n = len(uv)
            octave = np.frombuffer(fd["octave"], dtype="<i4").astype(np.int64)
            angle = np.frombuffer(fd["angle"], dtype="<f8")
            desc = np.frombuffer(fd["descriptors"], dtype=np.uint8).reshape(n, 32)
            frames.append(FeatureFrame.from_keypoints(camera, uv, octave, angle, np.ones(n), desc))
            labels.append(np.frombuffer(fd["labels"], dtype="<i8") if fd["labels"] else None)
            ts.append(fd["timestamp"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{path}: malformed feature file ({exc})") from None
    return camera, frames, labels, np.array(ts)


def write_synthetic_dataset(ds, out, images=False):
    """Write a generated dataset in the synthetic layout (see module docs)."""
    from ..eval.synthetic import render_image
    from .config import config_for_camera
    from .trajectory import write_trajectory

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    names = [f"{k:06d}.png" for k in range(len(ds.frames))]
    with open(out / "times.txt", "w") as fh:
        for t, name in zip(ds.timestamps, names):
            fh.write(f"{float(t):.17g} {name}\n" if images else f"{float(t):.17g}\n")
    write_trajectory(ds.ground_truth, out / "groundtruth.txt")
    write_feature_file(out / "features.msgpack", ds.camera, ds.timestamps, ds.frames, ds.labels)
    (out / "config.txt").write_text(config_for_camera(ds.camera).to_text())
    if images:
        (out / "images").mkdir(exist_ok=True)
        for k, name in enumerate(names):
            save_image(render_image(ds, k), out / "images" / name)
    return out
