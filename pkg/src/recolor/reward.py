"""Per-pixel reward terms for the iterative coloring game.

Three families of terms, all evaluated on one action step (the transition
from the pre-action coloring to the post-action coloring):

* background/foreground term: background pixels are pushed toward color 0 at
  every step; foreground pixels are pushed toward a nonzero first bit, but
  only at step 0.
* splitting terms (one per radius): pixels are paid for newly acquiring a
  color different from their cross-segment neighbors and charged 1/T per
  neighbor that still shares their color.
* merging terms (one per shrinking factor): pixels are paid 1/T per
  inner-region pixel of their own segment sharing their color, plus the
  per-step reduction in differently-colored inner pixels.

Ratio terms at degree-0 pixels are defined as 0, so reward maps are always
finite.  Everything is computed in float64.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .coloring import ColorState, as_label_map
from .edges import MergeEdgeSystem, SplitEdgeSystem

REWARD_DUMP_VERSION = 1


def background_rates(gt) -> tuple[float, float]:
    """Per-image reward magnitudes (r_bg, r_fg).

    r_bg scales the background term and equals the foreground area fraction;
    r_fg scales the foreground term and equals the background fraction.  The
    minority side therefore carries the larger incentive.
    """
    gt = as_label_map(gt)
    fg = float(np.count_nonzero(gt)) / gt.size
    return fg, 1.0 - fg


@dataclass(frozen=True)
class RewardConfig:
    """Weights and shape parameters of the total reward."""

    steps: int = 5
    radii: tuple[int, ...] = (12, 28)
    alphas: tuple[tuple[float, int], ...] = ((0.8, 16),)
    w_s: float = 1.5
    w_m: float = 1.0
    r_bg: float = 0.5
    r_fg: float = 0.5
    penalize_fs_reduction: bool = False

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.w_s < 0 or self.w_m < 0:
            raise ValueError("term weights must be nonnegative")
        if not self.radii:
            raise ValueError("at least one splitting radius is required")
        if not 0.0 <= self.r_bg <= 1.0 or not 0.0 <= self.r_fg <= 1.0:
            raise ValueError("r_bg and r_fg must lie in [0, 1]")

    @classmethod
    def for_ground_truth(cls, gt, **kwargs) -> "RewardConfig":
        """Build a config with r_bg/r_fg derived from a label map."""
        r_bg, r_fg = background_rates(gt)
        return cls(r_bg=r_bg, r_fg=r_fg, **kwargs)


@dataclass(frozen=True)
class RewardMap:
    """Per-pixel reward with its per-term breakdown.

    ``total == bf + w_m * merge + w_s * split`` holds bit-exactly because
    that expression is how total is constructed.
    """

    total: np.ndarray
    bf: np.ndarray
    split: np.ndarray
    merge: np.ndarray
    mean: float


def _colors_of(state) -> np.ndarray:
    return state.colors if isinstance(state, ColorState) else np.asarray(state)


def _ratio(num: np.ndarray, deg: np.ndarray) -> np.ndarray:
    out = np.zeros(deg.shape, dtype=np.float64)
    np.divide(num, deg, out=out, where=deg > 0)
    return out


def reward_bf(post, gt, t: int, r_bg: float, r_fg: float) -> np.ndarray:
    """Background/foreground term, a function of the post-action colors only."""
    post = _colors_of(post)
    gt = as_label_map(gt)
    out = np.where(post == 0, r_bg, -r_bg)
    fg = gt > 0
    if t == 0:
        out = np.where(fg, np.where(post == 1, r_fg, -r_fg), out)
    else:
        out = np.where(fg, 0.0, out)
    return out.astype(np.float64)


def reward_split_parts(pre, post, sys: SplitEdgeSystem,
                       steps: int) -> tuple[np.ndarray, np.ndarray]:
    """(gain in split neighbors, still-merged penalty), both already 1/degree."""
    pre_split, _ = sys.count_split_merged(_colors_of(pre))
    post_split, post_merged = sys.count_split_merged(_colors_of(post))
    deg = sys.degree
    ts_gain = _ratio(post_split - pre_split, deg)
    fm_penalty = _ratio(post_merged, deg) / steps
    return ts_gain, fm_penalty


def reward_split(pre, post, sys: SplitEdgeSystem, steps: int) -> np.ndarray:
    ts_gain, fm_penalty = reward_split_parts(pre, post, sys, steps)
    return ts_gain - fm_penalty


def reward_merge_parts(pre, post, sys: MergeEdgeSystem,
                       steps: int) -> tuple[np.ndarray, np.ndarray]:
    """(merged-with-core term, reduction in split-from-core), both 1/degree."""
    _, pre_split = sys.count_merged_split(_colors_of(pre))
    post_merged, post_split = sys.count_merged_split(_colors_of(post))
    deg = sys.degree
    tm_term = _ratio(post_merged, deg) / steps
    fs_reduction = _ratio(pre_split - post_split, deg)
    return tm_term, fs_reduction


def reward_merge(pre, post, sys: MergeEdgeSystem, steps: int,
                 penalize_fs_reduction: bool = False) -> np.ndarray:
    # Default pays for reductions in wrongly-split pairs; the flag flips
    # that sign, kept selectable so both conventions stay comparable.
    tm_term, fs_reduction = reward_merge_parts(pre, post, sys, steps)
    if penalize_fs_reduction:
        return tm_term - fs_reduction
    return tm_term + fs_reduction


def reward_total(pre, post, gt, t: int,
                 split_systems: list[SplitEdgeSystem],
                 merge_systems: list[MergeEdgeSystem],
                 cfg: RewardConfig) -> RewardMap:
    """Weighted total for the step-t transition.

    Step 0 is scored by the background/foreground term alone; later steps add
    the weighted splitting and merging sums.
    """
    if not 0 <= t < cfg.steps:
        raise ValueError(f"step index {t} outside [0, {cfg.steps})")
    gt = as_label_map(gt)
    if len(split_systems) != len(cfg.radii) or len(merge_systems) != len(cfg.alphas):
        raise ValueError("edge systems do not match the configured radii/alphas")
    for sys, radius in zip(split_systems, cfg.radii):
        if sys.radius != radius or sys.shape != gt.shape:
            raise ValueError("split system mismatch with config or label map")
    for sys, (alpha, min_size) in zip(merge_systems, cfg.alphas):
        if sys.alpha != alpha or sys.min_size != min_size or sys.shape != gt.shape:
            raise ValueError("merge system mismatch with config or label map")

    bf = reward_bf(post, gt, t, cfg.r_bg, cfg.r_fg)
    split = np.zeros(gt.shape, dtype=np.float64)
    merge = np.zeros(gt.shape, dtype=np.float64)
    if t >= 1:
        for sys in split_systems:
            split += reward_split(pre, post, sys, cfg.steps)
        for sys in merge_systems:
            merge += reward_merge(pre, post, sys, cfg.steps,
                                  cfg.penalize_fs_reduction)
    total = bf + cfg.w_m * merge + cfg.w_s * split
    return RewardMap(total, bf, split, merge, float(total.mean()))


def dump_reward_map(rmap: RewardMap, prefix: str) -> dict:
    """Write each component as little-endian float32 raw plus a JSON sidecar."""
    h, w = rmap.total.shape
    components = {}
    for name in ("total", "bf", "split", "merge"):
        path = f"{prefix}_{name}.raw"
        getattr(rmap, name).astype("<f4").tofile(path)
        components[name] = os.path.basename(path)
    doc = {
        "format_version": REWARD_DUMP_VERSION,
        "height": h,
        "width": w,
        "dtype": "<f4",
        "mean": rmap.mean,
        "components": components,
    }
    with open(f"{prefix}.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    return doc
