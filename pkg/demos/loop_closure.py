"""
Closing a drifted loop
======================

A camera drives 1.2 laps of a rounded square. Shortly before it returns to
the start, every keyframe is pushed along the synthetic drift field, as if
odometry had accumulated 5% error over the lap. When the camera sees the
start again the loop closer should detect the revisit, correct the map and
remove most of that error.

    python demos/loop_closure.py
    python demos/loop_closure.py --inject 0.85   # earlier injection, less repair
"""

import argparse
import warnings

import numpy as np

from vslam.eval import (
    SyntheticScene,
    Trajectory,
    compute_ate,
    default_camera,
    drift_corrections,
    generate_synthetic,
    umeyama_align,
)
from vslam.io.config import config_for_camera
from vslam.pipeline import System

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--frames", type=int, default=240)
parser.add_argument("--laps", type=float, default=1.2)
parser.add_argument("--drift", type=float, default=0.05, help="endpoint gap as a fraction of path length")
parser.add_argument("--inject", type=float, default=0.92, help="injection point as a fraction of one lap")
parser.add_argument("--heading", type=float, default=90.0)
parser.add_argument("--seed", type=int, default=3)
args = parser.parse_args()

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    ds = generate_synthetic(
        SyntheticScene(preset="square-loop", camera=default_camera("perspective"), n_frames=args.frames,
                       heading_deg=args.heading, seed=args.seed, laps=args.laps, drift=args.drift)
    )
print(f"path length {ds.path_length:.2f}, drift at the end of the lap {np.linalg.norm(ds.drift_vector):.3f}")

system = System(config_for_camera(ds.camera), camera=ds.camera)
frame_of = {float(t): k for k, t in enumerate(ds.timestamps)}
inject = int(args.inject * args.frames / args.laps)

before = None
for k, (frame, ts) in enumerate(zip(ds.frames, ds.timestamps)):
    if k == inject:
        # The drift field lives in ground-truth coordinates; map it into the
        # map frame with the current alignment before moving keyframes.
        est = system.tracker.trajectory()
        gt_c = np.array([ds.ground_truth.poses[frame_of[float(t)]].center for t in est.timestamps])
        A = umeyama_align(gt_c, est.positions())
        kf_frames = {i: frame_of[float(kf.timestamp)] for i, kf in system.map.keyframes.items()}
        system.map.apply_corrections(drift_corrections(ds, kf_frames, A))
        system.tracker.refresh_after_correction()
        print(f"frame {k}: drift injected into {len(kf_frames)} keyframes")
    snapshot = system.tracker.trajectory()
    system.feed_frame(frame, ts)
    if system.loop_reports and before is None:
        before = snapshot
        rep = system.loop_reports[-1]
        print(f"frame {k}: loop keyframe {rep.keyframe} -> {rep.match}, "
              f"{rep.inliers} Sim3 inliers, scale {rep.scale:.3f}")

final = system.shutdown()
if before is None:
    raise SystemExit("no loop was detected")

# Compare the same timestamps before and after the correction.
index = {float(t): i for i, t in enumerate(final.timestamps)}
after = Trajectory(before.timestamps, [final.poses[index[float(t)]] for t in before.timestamps])
pre, post = compute_ate(before, ds.ground_truth).rmse, compute_ate(after, ds.ground_truth).rmse
print(f"ATE before closure {pre:.4f}, after {post:.4f}, ratio {post / pre:.3f}")
