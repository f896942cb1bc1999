"""
Tracking a synthetic orbit
==========================

Generate a camera circling inside a ring of landmarks, feed the frames to a
stepped SLAM system and compare the estimate with ground truth after a
similarity alignment. Monocular scale is arbitrary, so only the aligned
error means anything.

    python demos/orbit_tracking.py --camera equirectangular --heading 90
"""

import argparse
import time
import warnings

import numpy as np

from vslam.eval import SyntheticScene, compute_ate, default_camera, generate_synthetic
from vslam.io.config import config_for_camera
from vslam.io.trajectory import write_trajectory
from vslam.pipeline import System

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--camera", choices=("perspective", "fisheye", "equirectangular"), default="perspective")
parser.add_argument("--frames", type=int, default=200)
parser.add_argument("--heading", type=float, default=0.0, help="camera yaw off the direction of travel, degrees")
parser.add_argument("--sigma", type=float, default=0.5, help="keypoint noise in pixels")
parser.add_argument("--seed", type=int, default=1)
parser.add_argument("--save-traj", help="write the estimated trajectory here (TUM format)")
args = parser.parse_args()

with warnings.catch_warnings():
    warnings.simplefilter("ignore")  # coverage notes about sparse frames
    ds = generate_synthetic(
        SyntheticScene(preset="orbit", camera=default_camera(args.camera), n_frames=args.frames,
                       seed=args.seed, pixel_sigma=args.sigma, heading_deg=args.heading)
    )
print(f"{args.frames} frames, {len(ds.landmarks)} landmarks, "
      f"{np.mean([len(f) for f in ds.frames]):.0f} keypoints per frame")

# The config carries the camera; everything else keeps its defaults.
system = System(config_for_camera(ds.camera), camera=ds.camera)

t0 = time.perf_counter()
states = []
for frame, ts in zip(ds.frames, ds.timestamps):
    states.append(system.feed_frame(frame, ts).state.value)
traj = system.shutdown()
elapsed = time.perf_counter() - t0

# How many frames tracked, and where the first success happened: the first
# frames wait for enough parallax to bootstrap the map.
tracked = states.count("Tracking")
print(f"tracked {tracked}/{len(states)}, first at frame {states.index('Tracking')}")
print(f"keyframes {len(system.map.keyframes)}, landmarks {len(system.map.landmarks)}, "
      f"loops {len(system.loop_reports)}")
print(f"{1e3 * elapsed / len(states):.1f} ms/frame")

rep = compute_ate(traj, ds.ground_truth)
print(rep.table())
print(f"ATE / trajectory diameter = {rep.rmse / ds.ground_truth.diameter():.5f}")

if args.save_traj:
    write_trajectory(traj, args.save_traj)
    print("trajectory written to", args.save_traj)
