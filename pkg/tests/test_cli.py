import hashlib

import pytest

from vslam.cli import EXIT_INPUT, EXIT_OK, EXIT_QUALITY, main
from vslam.eval import Trajectory
from vslam.io.trajectory import read_trajectory, write_trajectory


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def mapped(tmp_path_factory):
    """A synthetic orbit, mapped once through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "orbit"
    assert main(["synth", "--preset", "orbit", "--frames", "90", "--seed", "4", "--out", str(data)]) == EXIT_OK
    code = main(["run", "--dataset", str(data), "--save-map", str(root / "a.map"), "--save-traj", str(root / "a.txt")])
    assert code == EXIT_OK
    return root, data


def test_synth_is_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--preset", "square-loop", "--frames", "20", "--seed", "9", "--out", str(tmp_path / name)]) == 0
    a, b = tree(tmp_path / "a"), tree(tmp_path / "b")
    assert a == b and {"features.msgpack", "times.txt", "groundtruth.txt", "config.txt"} <= set(a)


def test_run_outputs(mapped, capsys):
    root, data = mapped
    traj = read_trajectory(root / "a.txt")
    assert len(traj) >= 0.95 * 90
    assert main(["eval-ate", "--est", str(root / "a.txt"), "--gt", str(data / "groundtruth.txt")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "rmse" in out and "align   sim3" in out


def test_run_report_lines(mapped, capsys, tmp_path):
    _, data = mapped
    assert main(["run", "--dataset", str(data), "--save-traj", str(tmp_path / "t.txt")]) == EXIT_OK
    out = capsys.readouterr().out
    for key in ("frames processed  90", "keyframes", "mean [ms/frame]", "median [ms/frame]", "trajectory"):
        assert key in out


def test_seeded_runs_match(mapped, tmp_path):
    _, data = mapped
    for name in ("x", "y"):
        args = ["run", "--dataset", str(data), "--seed", "17"]
        assert main(args + ["--save-map", str(tmp_path / f"{name}.map"), "--save-traj", str(tmp_path / f"{name}.txt")]) == 0
    assert digest(tmp_path / "x.map") == digest(tmp_path / "y.map")
    assert digest(tmp_path / "x.txt") == digest(tmp_path / "y.txt")


def test_missing_config_key_names_it(mapped, tmp_path, capsys):
    _, data = mapped
    lines = (data / "config.txt").read_text().splitlines()
    victim = next(line for line in lines if line.startswith("camera.fx"))
    key = victim.split()[0]
    bad = tmp_path / "config.txt"
    bad.write_text("\n".join(line for line in lines if line != victim) + "\n")
    assert main(["run", "--dataset", str(data), "--config", str(bad)]) == EXIT_INPUT
    assert key in capsys.readouterr().err


def test_bad_inputs_exit_one(tmp_path, capsys):
    assert main(["run", "--dataset", str(tmp_path / "nowhere")]) == EXIT_INPUT
    assert main(["localize", "--dataset", str(tmp_path), "--map", str(tmp_path / "none.map")]) == EXIT_INPUT
    assert main(["frobnicate"]) == EXIT_INPUT
    assert main(["run", "--stepped", "--concurrent", "--dataset", "x"]) == EXIT_INPUT
    capsys.readouterr()


def test_localize_keeps_map(mapped, tmp_path, capsys):
    root, data = mapped
    before = digest(root / "a.map")
    code = main(["localize", "--dataset", str(data), "--map", str(root / "a.map"), "--save-traj", str(tmp_path / "l.txt")])
    assert code == EXIT_OK
    assert len(read_trajectory(tmp_path / "l.txt")) >= 0.95 * 90
    assert digest(root / "a.map") == before
    capsys.readouterr()


def test_localize_in_unrelated_scene_fails_gate(mapped, tmp_path, capsys):
    root, _ = mapped
    other = tmp_path / "other"
    assert main(["synth", "--frames", "30", "--seed", "4", "--world-seed", "77", "--out", str(other)]) == 0
    assert main(["localize", "--dataset", str(other), "--map", str(root / "a.map")]) == EXIT_QUALITY
    capsys.readouterr()


def test_eval_ate_contrast(mapped, tmp_path, capsys):
    _, data = mapped
    gt = data / "groundtruth.txt"
    assert main(["eval-ate", "--est", str(gt), "--gt", str(gt)]) == 0
    assert "rmse    0.000000" in capsys.readouterr().out
    g = read_trajectory(gt)
    scaled = Trajectory(g.timestamps, [type(p).from_rt(p.R, 3.0 * p.t) for p in g.poses])
    write_trajectory(scaled, tmp_path / "x3.txt")
    assert main(["eval-ate", "--est", str(tmp_path / "x3.txt"), "--gt", str(gt)]) == 0
    sim3 = capsys.readouterr().out
    assert main(["eval-ate", "--est", str(tmp_path / "x3.txt"), "--gt", str(gt), "--align", "se3"]) == 0
    se3 = capsys.readouterr().out
    rmse = lambda text: float(next(line for line in text.splitlines() if line.startswith("rmse")).split()[1])
    assert rmse(sim3) < 1e-9 and rmse(se3) > 0.1
