#!/usr/bin/env python
# Train the bag-of-words vocabulary shipped in src/vslam/data/vocab.bin.
#
# The corpus mixes descriptors from every synthetic preset and camera with
# ORB descriptors detected on rendered sprite images, so both the
# front-end-free runs and full image runs quantize well.

import argparse
import time
from pathlib import Path

import numpy as np

from vslam.eval.synthetic import SyntheticScene, default_camera, generate_synthetic, render_image
from vslam.features.orb import FeatureParams, detect_and_describe
from vslam.map.vocabulary import Vocabulary, train_vocabulary

parser = argparse.ArgumentParser()
parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/vslam/data/vocab.bin"))
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--every", type=int, default=5, help="use every n-th frame of each sequence")
parser.add_argument("--images", type=int, default=20, help="rendered images to run ORB on")
args = parser.parse_args()

t0 = time.time()
corpus = []
for preset in ("orbit", "square-loop", "line"):
    for kind in ("perspective", "fisheye", "equirectangular"):
        scene = SyntheticScene(preset=preset, camera=default_camera(kind), n_frames=80, seed=100 + args.seed)
        ds = generate_synthetic(scene)
        corpus += [f.descriptors for f in ds.frames[:: args.every]]
print("synthetic frames in corpus:", len(corpus))

ds = generate_synthetic(SyntheticScene(preset="orbit", n_frames=args.images, seed=200 + args.seed))
for k in range(args.images):
    feats = detect_and_describe(render_image(ds, k), FeatureParams(max_keypoints=1000), ds.camera)
    corpus.append(feats.descriptors)
print("corpus images: %d, descriptors: %d" % (len(corpus), sum(len(d) for d in corpus)))

voc = train_vocabulary(corpus, branching=10, depth=3, seed=args.seed)
voc.save(args.out)
print("words: %d, written to %s (%.1f s)" % (voc.size, args.out, time.time() - t0))

# sanity check: the file reads back to the same bytes
assert Vocabulary.load(args.out).to_bytes() == voc.to_bytes()
