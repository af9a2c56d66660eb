"""Overfit the policy on one synthetic image and watch it segment it.

Mirrors the learnability setup: 32x32, up to 4 objects, 3 coloring steps.
Run with an update budget, e.g.  python3 demos/03_train_single_image.py 1500
"""

import os
import sys
import warnings

import numpy as np

from recolor.env import EnvConfig, generate_synthetic
from recolor.metrics import arand, sbd
from recolor.pngio import save_image, save_label_overlay
from recolor.policy import infer, train

updates = int(sys.argv[1]) if len(sys.argv) > 1 else 1500
out_dir = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out_dir, exist_ok=True)

pair = generate_synthetic(1, 32, 32, max_objects=4, seed=0)[0]
cfg = EnvConfig(steps=3, radii=(3, 8), alphas=((0.8, 16),))
print(f"training on one image with {pair.labels.max()} objects, "
      f"{updates} updates")


def eval_fn(policy):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        labels, _ = infer(policy, pair.image, cfg)
        return {"eval_sbd": sbd(labels, pair.labels),
                "eval_arand": arand(labels, pair.labels)}


policy, log = train([pair], cfg, updates=updates, seed=0,
                    eval_every=200, eval_fn=eval_fn)

for entry in log:
    if "eval_sbd" in entry:
        print(f"update {entry['update']:5d}: "
              f"mean reward {entry['mean_reward']:+.3f} "
              f"SBD {entry['eval_sbd']:5.1f} ARand {entry['eval_arand']:.3f}")

labels, planes = infer(policy, pair.image, cfg)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    print(f"\nfinal greedy: SBD {sbd(labels, pair.labels):.1f} "
          f"ARand {arand(labels, pair.labels):.3f} "
          f"({labels.max()} predicted / {pair.labels.max()} true objects)")

save_image(os.path.join(out_dir, "image.png"), pair.image)
save_label_overlay(os.path.join(out_dir, "gt.png"), pair.labels)
save_label_overlay(os.path.join(out_dir, "prediction.png"), labels)
for t in range(planes.shape[2]):
    save_image(os.path.join(out_dir, f"plane_step{t}.png"),
               planes[:, :, t].astype(np.float64))
print(f"wrote image/gt/prediction/planes to {out_dir}")
