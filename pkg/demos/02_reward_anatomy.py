"""Dissect the reward for good and bad colorings of two nearby squares.

Shows the three ingredients separately: background/foreground agreement,
the splitting system (pairs across segments within a Manhattan radius must
end up with different colors), and the merging system (every segment pixel
must match its eroded core).
"""

import numpy as np

from recolor import build_merge_system, build_split_system
from recolor.coloring import ColorState, apply_action
from recolor.reward import RewardConfig, reward_total

gt = np.zeros((8, 10), dtype=np.uint16)
gt[2:6, 1:4] = 1
gt[2:6, 6:9] = 2
print("ground truth:")
print(gt)

cfg = RewardConfig.for_ground_truth(gt, steps=2, radii=(4,),
                                    alphas=((0.8, 4),))
split = [build_split_system(gt, r) for r in cfg.radii]
merge = [build_merge_system(gt, a, m) for a, m in cfg.alphas]
print(f"\nbf rates: r_bg={cfg.r_bg:.3f} (fg fraction) "
      f"r_fg={cfg.r_fg:.3f} (bg fraction)")
print(f"split degrees (radius 4):\n{split[0].degree}")


def run(name, plans):
    state = ColorState.initial(*gt.shape, cfg.steps)
    total = 0.0
    for t, plan in enumerate(plans):
        post = apply_action(state, plan.astype(np.uint8))
        rmap = reward_total(state, post, gt, t, split, merge, cfg)
        print(f"{name} step {t}: mean total {rmap.mean:+.4f} "
              f"(bf {rmap.bf.mean():+.4f} split {rmap.split.mean():+.4f} "
              f"merge {rmap.merge.mean():+.4f})")
        state, total = post, total + rmap.mean
    n_split, n_merged = split[0].count_split_merged(state.colors)
    print(f"{name} episode total {total:+.4f}; leftover falsely-merged "
          f"pairs: {int(n_merged.sum())}\n")


fg = (gt > 0).astype(np.uint8)
second = (gt == 2).astype(np.uint8)

# both objects color 1: fg/bg correct but the pair stays merged
run("merged ", [fg, np.zeros_like(fg)])
# object one ends at 1, object two at 3: correctly split
run("split  ", [fg, second])
# everything background: collects bg reward, forfeits the rest
run("all-bg ", [np.zeros_like(fg), np.zeros_like(fg)])
