"""Episodic environment: a fixed-length coloring game over one labeled image.

An episode binds an image to its ground-truth label map, precomputes the
neighbor systems (they depend only on the labels), and then plays exactly
``steps`` binary actions.  The observation is the image concatenated with the
current bit planes, so the agent always sees the full coloring history.

Also houses the synthetic shape generator and the PNG dataset convention:
``<id>.png`` next to ``<id>_label.png`` plus an optional ``manifest.json``.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .coloring import ColorState, apply_action, as_image, as_label_map, relabel_consecutive
from .edges import build_merge_system, build_split_system
from .pngio import load_image, load_labels, save_image, save_labels
from .reward import RewardConfig, RewardMap, reward_total

CONFIG_VERSION = 1


@dataclass(frozen=True)
class EnvConfig:
    """Episode shape, reward weights, and reproducibility knobs."""

    steps: int = 5
    radii: tuple[int, ...] = (12, 28)
    alphas: tuple[tuple[float, int], ...] = ((0.8, 16),)
    w_s: float = 1.5
    w_m: float = 1.0
    gamma: float = 1.0
    connectivity: int = 4
    seed: int = 0
    penalize_fs_reduction: bool = False

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(int(r) for r in self.radii))
        object.__setattr__(self, "alphas",
                           tuple((float(a), int(m)) for a, m in self.alphas))
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["radii"] = list(self.radii)
        doc["alphas"] = [list(pair) for pair in self.alphas]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "EnvConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        doc = dict(doc)
        if "radii" in doc:
            doc["radii"] = tuple(doc["radii"])
        if "alphas" in doc:
            doc["alphas"] = tuple(tuple(p) for p in doc["alphas"])
        return cls(**doc)

    def reward_config(self, gt) -> RewardConfig:
        return RewardConfig.for_ground_truth(
            gt, steps=self.steps, radii=self.radii, alphas=self.alphas,
            w_s=self.w_s, w_m=self.w_m,
            penalize_fs_reduction=self.penalize_fs_reduction)


class Episode:
    """Single-owner mutable episode; all heavy structures built at reset."""

    def __init__(self, image, gt, cfg: EnvConfig):
        self.image = as_image(image)
        self.gt = as_label_map(gt)
        if self.image.shape[:2] != self.gt.shape:
            raise ValueError(f"image {self.image.shape[:2]} and labels "
                             f"{self.gt.shape} differ in size")
        self.cfg = cfg
        self.reward_cfg = cfg.reward_config(self.gt)
        self.split_systems = [build_split_system(self.gt, r) for r in cfg.radii]
        self.merge_systems = [build_merge_system(self.gt, a, m)
                              for a, m in cfg.alphas]
        self.state = ColorState.initial(*self.gt.shape, cfg.steps)
        self.observations: list[np.ndarray] = [self.observation()]
        self.actions: list[np.ndarray] = []
        self.rewards: list[RewardMap] = []

    @property
    def t(self) -> int:
        return self.state.step

    @property
    def done(self) -> bool:
        return self.state.finished

    def observation(self) -> np.ndarray:
        """Image channels followed by the current bit planes, float64."""
        return np.concatenate(
            [self.image, self.state.planes.astype(np.float64)], axis=2)

    def step(self, action) -> tuple[np.ndarray, RewardMap, bool]:
        if self.done:
            raise ValueError("episode finished: no steps left")
        pre = self.state
        post = apply_action(pre, action)
        rmap = reward_total(pre.colors, post.colors, self.gt, pre.step,
                            self.split_systems, self.merge_systems,
                            self.reward_cfg)
        self.state = post
        obs = self.observation()
        self.observations.append(obs)
        self.actions.append(post.planes[:, :, pre.step].copy())
        self.rewards.append(rmap)
        return obs, rmap, self.done


def reset(image, gt, cfg: EnvConfig) -> tuple[Episode, np.ndarray]:
    ep = Episode(image, gt, cfg)
    return ep, ep.observations[0]


def step(ep: Episode, action) -> tuple[np.ndarray, RewardMap, bool]:
    return ep.step(action)


# ---------------------------------------------------------------------------
# Synthetic data

@dataclass(frozen=True)
class SamplePair:
    sample_id: str
    image: np.ndarray  # float64 (H, W, K)
    labels: np.ndarray  # uint16 (H, W)


def _ellipse(rng, h, w):
    ay = int(rng.integers(2, max(3, h // 3) + 1))
    ax = int(rng.integers(2, max(3, w // 3) + 1))
    cy = int(rng.integers(0, h))
    cx = int(rng.integers(0, w))
    ys, xs = np.mgrid[0:h, 0:w]
    return ((ys - cy) / ay) ** 2 + ((xs - cx) / ax) ** 2 <= 1.0


def _rectangle(rng, h, w):
    rh = int(rng.integers(3, max(4, h // 2) + 1))
    rw = int(rng.integers(3, max(4, w // 2) + 1))
    y0 = int(rng.integers(-rh + 1, h))
    x0 = int(rng.integers(-rw + 1, w))
    mask = np.zeros((h, w), dtype=bool)
    mask[max(y0, 0):y0 + rh, max(x0, 0):x0 + rw] = True
    return mask


def _blob(rng, h, w):
    """Grow a 4-connected region by random frontier accretion."""
    target = int(rng.integers(8, max(9, h * w // 8)))
    mask = np.zeros((h, w), dtype=bool)
    y, x = int(rng.integers(0, h)), int(rng.integers(0, w))
    mask[y, x] = True
    frontier = [(y, x)]
    while mask.sum() < target and frontier:
        i = int(rng.integers(0, len(frontier)))
        y, x = frontier[i]
        nbrs = [(y + dy, x + dx) for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1))
                if 0 <= y + dy < h and 0 <= x + dx < w and not mask[y + dy, x + dx]]
        if not nbrs:
            frontier.pop(i)
            continue
        ny, nx = nbrs[int(rng.integers(0, len(nbrs)))]
        mask[ny, nx] = True
        frontier.append((ny, nx))
    return mask

_SHAPES = {"ellipse": _ellipse, "rectangle": _rectangle, "blob": _blob}
MIN_SHAPE_AREA = 4
_RETRY_CAP = 64


def generate_synthetic(n: int, height: int, width: int, max_objects: int = 4,
                       shape_kinds: tuple[str, ...] = ("ellipse", "rectangle", "blob"),
                       noise_level: float = 0.03, seed: int = 0) -> list[SamplePair]:
    """Random occluding shapes on a dark background, with paired labels.

    Later shapes overwrite earlier ones (draw-order occlusion), so labels may
    end up partially hidden or fully erased; erased labels are dropped and the
    rest renumbered 1..m.  Deterministic for a fixed seed.
    """
    if max_objects < 1:
        raise ValueError("max_objects must be >= 1")
    unknown = [k for k in shape_kinds if k not in _SHAPES]
    if unknown:
        raise ValueError(f"unknown shape kinds: {unknown}")
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        labels = np.zeros((height, width), dtype=np.uint16)
        image = np.full((height, width), 0.1)
        count = int(rng.integers(1, max_objects + 1))
        for obj in range(1, count + 1):
            for attempt in range(_RETRY_CAP + 1):
                kind = shape_kinds[int(rng.integers(0, len(shape_kinds)))]
                mask = _SHAPES[kind](rng, height, width)
                if mask.sum() >= MIN_SHAPE_AREA:
                    break
            else:
                raise ValueError("could not place a shape of usable size")
            labels[mask] = obj
            image[mask] = rng.uniform(0.35, 0.95)
        labels = relabel_consecutive(labels)
        if noise_level > 0:
            image = np.clip(image + rng.normal(0.0, noise_level, image.shape),
                            0.0, 1.0)
        pairs.append(SamplePair(f"sample_{i:04d}", image[:, :, None], labels))
    return pairs


# ---------------------------------------------------------------------------
# Dataset directory I/O

LABEL_SUFFIX = "_label.png"


def save_dataset(pairs, out_dir, manifest: dict | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for pair in pairs:
        save_image(os.path.join(out_dir, pair.sample_id + ".png"), pair.image)
        save_labels(os.path.join(out_dir, pair.sample_id + LABEL_SUFFIX),
                    pair.labels)
    if manifest is not None:
        with open(os.path.join(out_dir, "manifest.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)


def load_dataset(in_dir) -> list[SamplePair]:
    """Load all image/label pairs from a directory, ordered by id."""
    names = sorted(f for f in os.listdir(in_dir) if f.endswith(".png"))
    label_ids = {f[:-len(LABEL_SUFFIX)] for f in names if f.endswith(LABEL_SUFFIX)}
    image_ids = [f[:-4] for f in names if not f.endswith(LABEL_SUFFIX)]
    missing = sorted(set(label_ids) - set(image_ids))
    if missing:
        raise ValueError(f"label file without image for id {missing[0]!r}")
    pairs = []
    for sid in image_ids:
        if sid not in label_ids:
            raise ValueError(f"missing label file for id {sid!r}")
        image = load_image(os.path.join(in_dir, sid + ".png"))
        labels = load_labels(os.path.join(in_dir, sid + LABEL_SUFFIX))
        if image.shape[:2] != labels.shape:
            raise ValueError(f"size mismatch for id {sid!r}: "
                             f"{image.shape[:2]} vs {labels.shape}")
        pairs.append(SamplePair(sid, image, labels))
    return pairs
