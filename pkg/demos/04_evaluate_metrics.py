"""Show what each evaluation metric rewards and punishes.

Builds three predictions for the same two-object ground truth (perfect,
over-segmented, under-segmented) and prints the full metric table.
"""

import numpy as np

from recolor.metrics import EvalOptions, evaluate_pair

gt = np.zeros((8, 12), dtype=np.uint16)
gt[1:7, 1:5] = 1
gt[1:7, 7:11] = 2

perfect = gt.copy()

over = gt.copy()
over[4:7, 1:5] = 3          # first object sliced in two

under = gt.copy()
under[1:7, 5:7] = 1
under[gt == 2] = 1          # both objects fused into one

options = EvalOptions(min_area=1)
rows = [("perfect", perfect), ("over-segmented", over),
        ("under-segmented", under)]

names = ("sbd", "dic", "mwcov", "mucov", "avg_fp", "avg_fn",
         "voi_split", "voi_merge", "arand")
print(f"{'prediction':<16}" + "".join(f"{n:>10}" for n in names))
for name, pred in rows:
    r = evaluate_pair(pred, gt, options)
    print(f"{name:<16}" + "".join(f"{r[n]:10.3f}" for n in names))

print("\nover-segmentation shows up in voi_split, under-segmentation in "
      "voi_merge; both hurt sbd and arand")
