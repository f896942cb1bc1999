"""``slam`` command line: run, localize, eval-ate, synth.

Exit codes: 0 success, 1 usage or input error, 2 quality gate failed.
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .eval.ate import AlignmentError, compute_ate
from .eval.synthetic import PRESETS, SyntheticScene, default_camera, generate_synthetic
from .io.config import ConfigError, load_config
from .io.dataset import DatasetError, read_dataset, write_synthetic_dataset
from .io.mapfile import MapFormatError
from .io.trajectory import TrajectoryFormatError, read_trajectory, write_trajectory
from .map.database import MapError
from .map.vocabulary import Vocabulary
from .pipeline import System, TimestampError

EXIT_OK, EXIT_INPUT, EXIT_QUALITY = 0, 1, 2
RUN_MIN_TRACKED = 0.8
LOCALIZE_MIN_TRACKED = 0.8


class InputError(Exception):
    """Bad flags or unreadable inputs; reported with exit code 1."""


@dataclass
class RunReport:
    frames: int = 0
    tracked: int = 0
    keyframes: int = 0
    landmarks: int = 0
    loop_closures: int = 0
    times_ms: list = field(default_factory=list, repr=False)
    outputs: dict = field(default_factory=dict)

    @property
    def tracked_ratio(self):
        return self.tracked / self.frames if self.frames else 0.0

    def lines(self):
        mean = statistics.fmean(self.times_ms) if self.times_ms else 0.0
        median = statistics.median(self.times_ms) if self.times_ms else 0.0
        out = [
            f"frames processed  {self.frames}",
            f"frames tracked    {self.tracked} ({100 * self.tracked_ratio:.1f}%)",
            f"keyframes         {self.keyframes}",
            f"landmarks         {self.landmarks}",
            f"loop closures     {self.loop_closures}",
            f"mean [ms/frame]   {mean:.2f}",
            f"median [ms/frame] {median:.2f}",
        ]
        out += [f"{name:<17} {path}" for name, path in self.outputs.items()]
        return out


def _config(args, dataset):
    path = Path(args.config) if args.config else dataset.root / "config.txt"
    if not path.exists():
        raise InputError(f"no config: pass --config or put config.txt in {dataset.root}")
    cfg = load_config(path)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(ransac__seed=args.seed)
    return cfg


def _feed_all(system, dataset, report):
    for ts, frame in dataset:
        t0 = time.perf_counter()
        res = system.feed_frame(frame, ts)
        report.times_ms.append(1e3 * (time.perf_counter() - t0))
        report.frames += 1
        report.tracked += res.tracked


def _finish(system, report, save_traj):
    traj = system.shutdown()
    report.keyframes = len(system.map.keyframes)
    report.landmarks = len(system.map.landmarks)
    report.loop_closures = len(system.loop_reports)
    if save_traj:
        write_trajectory(traj, save_traj)
        report.outputs["trajectory"] = save_traj
    return traj


def cmd_run(args):
    dataset = read_dataset(args.dataset)
    cfg = _config(args, dataset)
    vocab = Vocabulary.load(args.vocab) if args.vocab else None
    system = System(cfg, vocab, stepped=not args.concurrent)
    report = RunReport()
    _feed_all(system, dataset, report)
    _finish(system, report, args.save_traj)
    if args.save_map:
        system.save_map(args.save_map)
        report.outputs["map"] = args.save_map
    print("\n".join(report.lines()))
    return EXIT_OK if report.tracked_ratio >= RUN_MIN_TRACKED else EXIT_QUALITY


def cmd_localize(args):
    if not Path(args.map).is_file():
        raise InputError(f"map file {args.map} not found")
    dataset = read_dataset(args.dataset)
    cfg = _config(args, dataset)
    vocab = Vocabulary.load(args.vocab) if args.vocab else None
    system = System(cfg, vocab)
    system.load_map(args.map)
    system.set_mode("localization_only")
    report = RunReport()
    _feed_all(system, dataset, report)
    _finish(system, report, args.save_traj)
    print("\n".join(report.lines()))
    return EXIT_OK if report.tracked_ratio >= LOCALIZE_MIN_TRACKED else EXIT_QUALITY


def cmd_eval_ate(args):
    rep = compute_ate(read_trajectory(args.est), read_trajectory(args.gt), alignment=args.align)
    print(f"align   {args.align}")
    print(rep.table())
    return EXIT_OK


def cmd_synth(args):
    scene = SyntheticScene(
        preset=args.preset,
        camera=default_camera(args.camera),
        n_frames=args.frames,
        seed=args.seed,
        heading_deg=args.heading,
        drift=args.drift,
        laps=args.laps,
        world_seed=args.world_seed,
    )
    out = write_synthetic_dataset(generate_synthetic(scene), args.out, images=args.images)
    print(f"wrote {args.frames} frames to {out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="slam", description="Monocular keyframe SLAM on image folders or synthetic data.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="build a map from a dataset")
    r.add_argument("--dataset", required=True)
    r.add_argument("--config", help="defaults to <dataset>/config.txt")
    r.add_argument("--vocab", help="vocabulary file; the bundled one otherwise")
    r.add_argument("--save-map")
    r.add_argument("--save-traj")
    r.add_argument("--seed", type=int)
    mode = r.add_mutually_exclusive_group()
    mode.add_argument("--stepped", action="store_true", help="run all stages on one thread (default)")
    mode.add_argument("--concurrent", action="store_true", help="mapping and loop closing on worker threads")
    r.set_defaults(func=cmd_run)

    loc = sub.add_parser("localize", help="track against a saved map without changing it")
    loc.add_argument("--dataset", required=True)
    loc.add_argument("--map", required=True)
    loc.add_argument("--config")
    loc.add_argument("--vocab")
    loc.add_argument("--save-traj")
    loc.add_argument("--seed", type=int)
    loc.set_defaults(func=cmd_localize)

    e = sub.add_parser("eval-ate", help="absolute trajectory error")
    e.add_argument("--est", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--align", choices=("sim3", "se3"), default="sim3")
    e.set_defaults(func=cmd_eval_ate)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--preset", choices=PRESETS, default="orbit")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--camera", choices=("perspective", "fisheye", "equirectangular"), default="perspective")
    s.add_argument("--frames", type=int, default=200)
    s.add_argument("--heading", type=float, default=0.0, help="camera yaw off the motion direction, degrees")
    s.add_argument("--drift", type=float, default=0.0)
    s.add_argument("--laps", type=float, default=1.0)
    s.add_argument("--world-seed", type=int, help="landmark layout seed; differs from --seed for a disjoint scene")
    s.add_argument("--images", action="store_true", help="also render PNG frames")
    s.set_defaults(func=cmd_synth)
    return p


INPUT_ERRORS = (
    InputError, ConfigError, DatasetError, MapFormatError, MapError,
    TrajectoryFormatError, AlignmentError, TimestampError, OSError, ValueError,
)  # fmt: skip


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; usage is code 1 here
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"slam {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
