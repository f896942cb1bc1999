import hashlib

import msgpack
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_rotation
from vslam.eval.ate import Trajectory
from vslam.eval.synthetic import SyntheticScene, generate_synthetic
from vslam.geometry import SE3Pose
from vslam.io import (
    FORMAT_VERSION,
    ConfigError,
    DatasetError,
    MapFormatError,
    MapVersionError,
    TrajectoryFormatError,
    config_for_camera,
    decode_map,
    encode_map,
    load_map,
    parse_config,
    parse_trajectory,
    read_dataset,
    save_map,
    format_trajectory,
    write_synthetic_dataset,
)
from vslam.map import MapDatabase

MINIMAL = "camera.kind perspective\ncamera.width 640\ncamera.height 480\ncamera.fx 400\ncamera.fy 400\ncamera.cx 320\ncamera.cy 240\n"


# -- config ------------------------------------------------------------------


def test_config_parses_and_round_trips():
    cfg = parse_config(MINIMAL + "# tuning\nkeyframe.max_interval 25\nloop.enabled false\n")
    assert cfg["keyframe.max_interval"] == 25 and cfg["loop.enabled"] is False
    assert cfg["camera.fx"] == 400.0
    assert parse_config(cfg.to_text()).as_dict() == cfg.as_dict()


def test_missing_key_is_named():
    with pytest.raises(ConfigError, match="camera.fx"):
        parse_config(MINIMAL.replace("camera.fx 400\n", ""))


@pytest.mark.parametrize(
    "extra, pattern",
    [("bogus.key 1\n", "unknown"), ("camera.fx 3\n", "twice"), ("ransac.iterations many\n", "ransac.iterations"), ("loneword\n", "expected")],
)
def test_config_errors(extra, pattern):
    with pytest.raises(ConfigError, match=pattern):
        parse_config(MINIMAL + extra)


# -- trajectories --------------------------------------------------------------


@given(st.integers(0, 2**32 - 1))
def test_trajectory_text_round_trip(seed):
    rng = np.random.default_rng(seed)
    ts = np.cumsum(rng.uniform(0.01, 1.0, 10))
    poses = [SE3Pose.from_rt(random_rotation(rng), rng.normal(size=3) * 10) for _ in ts]
    back = parse_trajectory(format_trajectory(Trajectory(ts, poses)))
    np.testing.assert_array_equal(back.timestamps, ts)
    for a, b in zip(poses, back.poses):
        assert np.abs(a.matrix() - b.matrix()).max() < 1e-12


def test_trajectory_errors():
    with pytest.raises(TrajectoryFormatError, match=":1:"):
        parse_trajectory("0 1 2\n")
    with pytest.raises(TrajectoryFormatError, match="increasing"):
        parse_trajectory("1 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n")


# -- datasets ------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    ds = generate_synthetic(SyntheticScene(preset="line", n_frames=12, seed=3))
    return ds, write_synthetic_dataset(ds, tmp_path_factory.mktemp("ds"), images=True)


def test_synthetic_dataset_reads_back(small_dataset):
    ds, root = small_dataset
    d = read_dataset(root)
    items = list(d)
    assert len(items) == 12
    assert np.all(np.diff([t for t, _ in items]) > 0)
    np.testing.assert_array_equal(items[3][1].descriptors, ds.frames[3].descriptors)
    img = read_dataset(root, prefer_images=True).frame(0)
    assert img.shape == (ds.camera.height, ds.camera.width) and img.dtype == np.uint8


def test_shuffled_timestamps_are_rejected(small_dataset, tmp_path):
    _, root = small_dataset
    lines = (root / "times.txt").read_text().splitlines()
    lines[2], lines[5] = lines[5], lines[2]
    (tmp_path / "times.txt").write_text("\n".join(lines) + "\n")
    (tmp_path / "images").symlink_to(root / "images")
    with pytest.raises(DatasetError, match="not strictly increasing"):
        read_dataset(tmp_path)


def test_missing_image_is_named(small_dataset, tmp_path):
    _, root = small_dataset
    (tmp_path / "images").mkdir()
    (tmp_path / "times.txt").write_text("0.0 a.png\n0.1 b.png\n")
    with pytest.raises(DatasetError, match="a.png"):
        read_dataset(tmp_path)


# -- map files -------------------------------------------------------------------


def test_empty_map_document(tmp_path):
    data = encode_map(MapDatabase())
    doc = msgpack.unpackb(data)
    assert doc["version"] == FORMAT_VERSION
    assert doc["keyframes"] == [] and doc["landmarks"] == [] and doc["loop_edges"] == []
    assert len(decode_map(data)) == 0


def test_map_round_trip(orbit_run, tmp_path):
    _, system, _, _ = orbit_run
    m = system.map
    save_map(m, tmp_path / "a.map")
    loaded = load_map(tmp_path / "a.map")
    save_map(loaded, tmp_path / "b.map")
    assert (tmp_path / "a.map").read_bytes() == (tmp_path / "b.map").read_bytes()
    for k, kf in m.keyframes.items():
        assert np.array_equal(kf.pose.q, loaded.keyframes[k].pose.q) and np.array_equal(kf.pose.t, loaded.keyframes[k].pose.t)
    assert loaded.recount_covisibility() == {k: dict(v) for k, v in loaded.covisibility.items()}
    assert loaded.checksum_state() == m.checksum_state()


def test_independent_decoder_sees_schema(orbit_run):
    _, system, _, _ = orbit_run
    doc = msgpack.unpackb(encode_map(system.map), raw=False)
    assert list(doc) == ["version", "cameras", "keyframes", "landmarks", "loop_edges", "spanning_tree", "next_ids"]
    assert len(doc["keyframes"]) == len(system.map.keyframes)
    assert len(doc["landmarks"]) == len(system.map.landmarks)
    kf = doc["keyframes"][0]
    assert isinstance(kf["pose"]["q"][0], float) and len(kf["pose"]["q"]) == 4
    assert all(isinstance(d, bytes) and len(d) == 32 for d in kf["descriptors"])
    assert len(doc["spanning_tree"]) == len(doc["keyframes"]) - 1


def test_bad_version_gives_no_map(tmp_path):
    doc = msgpack.unpackb(encode_map(MapDatabase()))
    doc["version"] = 9999
    with pytest.raises(MapVersionError, match="9999"):
        decode_map(msgpack.packb(doc))


def test_corrupt_fields_are_located(orbit_run):
    doc = msgpack.unpackb(encode_map(orbit_run[1].map), raw=False)
    doc["keyframes"][1]["pose"]["t"] = [1, 2, 3]
    with pytest.raises(MapFormatError, match=r"keyframes\[1\].pose.t"):
        decode_map(msgpack.packb(doc, use_bin_type=True))
    with pytest.raises(MapFormatError):
        decode_map(b"\xc1 not msgpack")


def test_save_is_deterministic(orbit_run, tmp_path):
    m = orbit_run[1].map
    assert hashlib.sha256(encode_map(m)).digest() == hashlib.sha256(encode_map(m)).digest()
    cfg = config_for_camera(m.cameras[0])
    assert cfg.camera() == m.cameras[0]
