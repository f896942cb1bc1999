"""Flat ``section.key value`` configuration files.

Grammar: one setting per line, ``<section>.<key> <value>``; ``#`` starts a
comment; blank lines are ignored. Values are parsed by the key's declared
type (int, float, bool as true/false, or string). Unknown keys and repeated
keys are errors, and every missing required key is named.
"""

from __future__ import annotations

from pathlib import Path

from ..camera import CameraModel, camera_from_dict

REQUIRED = object()

# key -> (type, default); REQUIRED marks keys without a default
SCHEMA = {
    "camera.kind": (str, REQUIRED),
    "camera.width": (int, REQUIRED),
    "camera.height": (int, REQUIRED),
    "camera.fps": (float, 30.0),
    "camera.color_order": (str, "gray"),
    "camera.fx": (float, None),
    "camera.fy": (float, None),
    "camera.cx": (float, None),
    "camera.cy": (float, None),
    "camera.k1": (float, 0.0),
    "camera.k2": (float, 0.0),
    "camera.k3": (float, 0.0),
    "camera.k4": (float, 0.0),
    "camera.p1": (float, 0.0),
    "camera.p2": (float, 0.0),
    "feature.max_keypoints": (int, 2000),
    "feature.scale_factor": (float, 1.2),
    "feature.num_levels": (int, 8),
    "feature.fast_threshold": (int, 20),
    "matching.ratio": (float, 0.75),
    "matching.max_hamming": (int, 50),
    "init.min_inliers": (int, 50),
    "init.min_parallax_deg": (float, 1.0),
    "init.epipolar_threshold_deg": (float, 0.2),
    "ransac.iterations": (int, 200),
    "ransac.seed": (int, 0),
    "ba.max_iterations": (int, 20),
    "ba.huber_delta_deg": (float, None),
    "posegraph.max_iterations": (int, 20),
    "keyframe.max_interval": (int, 30),
    "keyframe.tracked_ratio": (float, 0.9),
    "keyframe.min_tracked": (int, 15),
    "tracking.min_inliers": (int, 30),
    "localmap.max_keyframes": (int, 60),
    "loop.enabled": (bool, True),
    "loop.min_inliers": (int, 20),
    "loop.essential_min_weight": (int, 100),
    "dataset.images": (str, "images"),
    "dataset.timestamps": (str, "times.txt"),
}

_PINHOLE = ("camera.fx", "camera.fy", "camera.cx", "camera.cy")
_CAMERA_PARAMS = {
    "perspective": ("k1", "k2", "p1", "p2", "k3"),
    "fisheye": ("k1", "k2", "k3", "k4"),
    "equirectangular": (),
}


class ConfigError(ValueError):
    pass


class Config:
    """Validated settings; read with ``cfg["section.key"]``."""

    def __init__(self, values: dict):
        self._values = dict(values)

    def __getitem__(self, key):
        return self._values[key]

    def get(self, key, default=None):
        return self._values.get(key, default)

    def as_dict(self):
        return dict(self._values)

    def replace(self, **updates):
        """Copy with ``section__key=value`` overrides."""
        vals = dict(self._values)
        for k, v in updates.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            vals[key] = v
        return Config(vals)

    def camera(self) -> CameraModel:
        kind = self["camera.kind"]
        params = {"kind": kind, "width": self["camera.width"], "height": self["camera.height"], "fps": self["camera.fps"]}
        params["color_order"] = self["camera.color_order"]
        if kind in ("perspective", "fisheye"):
            for k in _PINHOLE:
                params[k.split(".")[1]] = self[k]
        for name in _CAMERA_PARAMS.get(kind, ()):
            params[name] = self[f"camera.{name}"]
        try:
            return camera_from_dict(params)
        except ValueError as exc:
            raise ConfigError(f"camera section: {exc}") from None

    def to_text(self) -> str:
        lines = []
        for key in SCHEMA:
            v = self._values.get(key)
            if v is None:
                continue
            lines.append(f"{key} {_format(v)}")
        return "\n".join(lines) + "\n"


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(key, typ, text, where):
    try:
        if typ is bool:
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError(text)
            return low == "true"
        return typ(text)
    except ValueError:
        raise ConfigError(f"{where}: {key} expects {typ.__name__}, got {text!r}") from None


def parse_config(text: str, source="<config>") -> Config:
    values = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{n}"
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise ConfigError(f"{where}: expected 'section.key value', got {line!r}")
        key, val = parts[0], parts[1].strip()
        if key not in SCHEMA:
            raise ConfigError(f"{where}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{where}: {key} given twice")
        values[key] = _parse_value(key, SCHEMA[key][0], val, where)
    return _complete(values, source)


def _complete(values, source):
    missing = [k for k, (_, d) in SCHEMA.items() if d is REQUIRED and k not in values]
    kind = values.get("camera.kind")
    if kind is not None and kind not in _CAMERA_PARAMS:
        raise ConfigError(f"{source}: camera.kind {kind!r} unknown; choose from {sorted(_CAMERA_PARAMS)}")
    if kind in ("perspective", "fisheye"):
        missing += [k for k in _PINHOLE if k not in values]
    if missing:
        raise ConfigError(f"{source}: missing required config keys: {', '.join(missing)}")
    out = {k: (values[k] if k in values else d) for k, (_, d) in SCHEMA.items()}
    cfg = Config(out)
    cfg.camera()  # validates the camera section now rather than at first use
    return cfg


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def config_for_camera(camera: CameraModel, **overrides) -> Config:
    """A complete config for ``camera`` with defaults elsewhere."""
    values = {f"camera.{k}": v for k, v in camera.to_dict().items() if f"camera.{k}" in SCHEMA}
    cfg = _complete(values, "<generated>")
    return cfg.replace(**overrides) if overrides else cfg
