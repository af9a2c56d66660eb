"""Raster primitives: label maps, binary action maps, and the iterative color state.

A coloring episode runs for a fixed number of steps ``T``.  At step ``t`` every
pixel picks a bit (0 or 1) and its integer color is updated as

    color <- color + 2**t * bit

so after ``T`` steps the color of a pixel is the base-2 number whose t-th digit
is the action the pixel took at step t.  Color 0 is reserved for background.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

MAX_LABELS = 2 ** 16
MAX_STEPS = 31  # colors are stored as uint32


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def connectivity_structure(connectivity: int) -> np.ndarray:
    """Return the 3x3 footprint for 4- or 8-connected component labeling."""
    if connectivity == 4:
        return ndi.generate_binary_structure(2, 1)
    if connectivity == 8:
        return ndi.generate_binary_structure(2, 2)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def as_label_map(labels) -> np.ndarray:
    """Validate and convert an array to a uint16 instance-label map.

    Label 0 means background.  Raises on negative values or values that do
    not fit in 16 bits.
    """
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"label map must be 2-D, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= MAX_LABELS):
        raise ValueError("label values must be in [0, 65535]")
    return arr.astype(np.uint16)


def as_action_map(action, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Validate a binary action map (values exactly 0 or 1) as uint8."""
    arr = np.asarray(action)
    if arr.ndim != 2:
        raise ValueError(f"action map must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"action map shape {arr.shape} != expected {tuple(shape)}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("action map values must be 0 or 1")
    return arr.astype(np.uint8)


def as_image(image) -> np.ndarray:
    """Validate an image as float64 (H, W, K) with samples in [0, 1]."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"image must be (H, W) or (H, W, 1|3), got {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("image samples must lie in [0, 1]")
    return arr


@dataclass(frozen=True)
class ColorState:
    """Integer colors of every pixel after ``step`` coloring actions.

    ``planes[:, :, k]`` holds the bit chosen at step k (zero for k >= step),
    and ``colors == sum_k 2**k * planes[..., k]`` at all times.  Instances are
    immutable; :func:`apply_action` returns a new state.
    """

    colors: np.ndarray  # (H, W) uint32
    planes: np.ndarray  # (H, W, T) uint8
    step: int
    max_steps: int

    @classmethod
    def initial(cls, height: int, width: int, max_steps: int) -> "ColorState":
        if not 1 <= max_steps <= MAX_STEPS:
            raise ValueError(f"max_steps must be in [1, {MAX_STEPS}], got {max_steps}")
        colors = np.zeros((height, width), dtype=np.uint32)
        planes = np.zeros((height, width, max_steps), dtype=np.uint8)
        return cls(_frozen(colors), _frozen(planes), 0, max_steps)

    @property
    def shape(self) -> tuple[int, int]:
        return self.colors.shape

    @property
    def finished(self) -> bool:
        return self.step == self.max_steps


def apply_action(state: ColorState, action) -> ColorState:
    """Advance the coloring by one step: color += 2**step * action per pixel."""
    if state.step >= state.max_steps:
        raise ValueError("episode finished: all coloring steps already taken")
    bits = as_action_map(action, state.shape)
    colors = state.colors + (bits.astype(np.uint32) << np.uint32(state.step))
    planes = state.planes.copy()
    planes[:, :, state.step] = bits
    return ColorState(_frozen(colors), _frozen(planes), state.step + 1, state.max_steps)


def colors_from_planes(planes: np.ndarray) -> np.ndarray:
    """Recombine bit planes (H, W, T) into integer colors (H, W)."""
    weights = (np.uint32(1) << np.arange(planes.shape[2], dtype=np.uint32))
    return (planes.astype(np.uint32) * weights).sum(axis=2, dtype=np.uint32)


def label_components(values, connectivity: int = 4, exclude_zero: bool = True) -> np.ndarray:
    """Label maximal connected regions of equal value with ids 1..m.

    Pixels with value 0 map to label 0 when ``exclude_zero``.  Regions are
    numbered in (value, raster) order, so the output is deterministic.
    """
    arr = np.asarray(values)
    structure = connectivity_structure(connectivity)
    out = np.zeros(arr.shape, dtype=np.int64)
    offset = 0
    for val in np.unique(arr):
        if exclude_zero and val == 0:
            continue
        comp, n = ndi.label(arr == val, structure=structure)
        sel = comp > 0
        out[sel] = comp[sel] + offset
        offset += n
    if offset >= MAX_LABELS:
        raise ValueError(f"too many components ({offset}) for a 16-bit label map")
    return out.astype(np.uint16)


def decode_instances(state: ColorState, connectivity: int = 4) -> np.ndarray:
    """Decode a finished color state into an instance label map.

    Color 0 is background; each maximal connected region of equal nonzero
    color becomes one instance, so far-apart objects may legitimately share a
    color and still decode to distinct instances.
    """
    if not state.finished:
        raise ValueError(f"cannot decode at step {state.step} of {state.max_steps}")
    return label_components(state.colors, connectivity)


def remove_small_segments(labels, min_area: int) -> np.ndarray:
    """Set segments with area < min_area to background and re-index 1..m."""
    lab = as_label_map(labels)
    counts = np.bincount(lab.ravel())
    small = counts < min_area
    small[0] = False
    out = lab.copy()
    out[small[lab]] = 0
    return relabel_consecutive(out)


def relabel_consecutive(labels) -> np.ndarray:
    """Re-index nonzero labels to 1..m preserving their sorted order."""
    lab = as_label_map(labels)
    present = np.unique(lab)
    present = present[present != 0]
    lut = np.zeros(int(present[-1]) + 1 if present.size else 1, dtype=np.uint16)
    lut[present] = np.arange(1, present.size + 1, dtype=np.uint16)
    return lut[lab]
