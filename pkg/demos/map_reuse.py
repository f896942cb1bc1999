"""
Saving a map and localizing against it
======================================

Build a map from one pass over a synthetic orbit, write it to disk, load it
into a fresh system and track the same frames again in localization-only
mode. The map file must come back byte for byte, and localization must not
change it.

    python demos/map_reuse.py --camera fisheye --out /tmp/orbit.map
"""

import argparse
import hashlib
import tempfile
import warnings
from pathlib import Path

import numpy as np

from vslam.eval import SyntheticScene, compute_ate, default_camera, generate_synthetic
from vslam.io.config import config_for_camera
from vslam.pipeline import System

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--camera", choices=("perspective", "fisheye", "equirectangular"), default="perspective")
parser.add_argument("--frames", type=int, default=200)
parser.add_argument("--seed", type=int, default=1)
parser.add_argument("--out", help="map file; a temporary one by default")
args = parser.parse_args()

out = Path(args.out) if args.out else Path(tempfile.mkdtemp()) / "orbit.map"
sha = lambda p: hashlib.sha256(Path(p).read_bytes()).hexdigest()[:16]

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    ds = generate_synthetic(SyntheticScene(preset="orbit", camera=default_camera(args.camera),
                                           n_frames=args.frames, seed=args.seed))
cfg = config_for_camera(ds.camera)

# mapping pass
builder = System(cfg, camera=ds.camera)
for frame, ts in zip(ds.frames, ds.timestamps):
    builder.feed_frame(frame, ts)
builder.shutdown()
builder.save_map(out)
print(f"map: {len(builder.map.keyframes)} keyframes, {len(builder.map.landmarks)} landmarks, "
      f"{out.stat().st_size / 1e6:.1f} MB, sha {sha(out)}")

# reload and write again
user = System(cfg, camera=ds.camera)
user.load_map(out)
again = out.with_suffix(".again")
user.save_map(again)
print("reloaded map rewrites identically:", again.read_bytes() == out.read_bytes())

# Localization only: tracking starts Lost and relocalizes through the place
# index, then follows the map without adding to it.
user.set_mode("localization_only")
version = user.map.version
results = [user.feed_frame(frame, ts) for frame, ts in zip(ds.frames, ds.timestamps)]
traj = user.shutdown()
localized = np.mean([r.tracked for r in results])
print(f"localized {100 * localized:.1f}% of frames; map version {version} -> {user.map.version}")
print(f"ATE / diameter {compute_ate(traj, ds.ground_truth).rmse / ds.ground_truth.diameter():.5f}")

user.save_map(again)
print("map unchanged after localization:", sha(again) == sha(out))
again.unlink()
