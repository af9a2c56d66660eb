"""PNG reading and writing for images, label maps, and visualizations.

Images are 8-bit grayscale or RGB and are exposed as float64 in [0, 1].
Label maps are 16-bit grayscale PNGs; 8-bit label files are accepted and
widened.  Anything else (palette, alpha, float TIFF refugees) is rejected
rather than silently coerced.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .coloring import as_image, as_label_map


def load_image(path) -> np.ndarray:
    """Read an 8-bit L or RGB PNG as float64 (H, W, K) scaled to [0, 1]."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            raise ValueError(f"{path}: unsupported image mode {im.mode!r} "
                             "(need 8-bit L or RGB)")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return as_image(arr)


def save_image(path, image) -> None:
    """Write a float image in [0, 1] as an 8-bit L or RGB PNG."""
    arr = as_image(image)
    u8 = np.round(arr * 255.0).astype(np.uint8)
    if u8.shape[2] == 1:
        u8 = u8[:, :, 0]
    Image.fromarray(u8).save(path)


def load_labels(path) -> np.ndarray:
    """Read a label-map PNG as uint16; 8-bit files are widened losslessly."""
    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.uint16)
        elif im.mode in ("I;16", "I"):
            arr = np.asarray(im)
            if arr.min() < 0 or arr.max() > 0xFFFF:
                raise ValueError(f"{path}: label values exceed 16-bit range")
            arr = arr.astype(np.uint16)
        else:
            raise ValueError(f"{path}: unsupported label mode {im.mode!r} "
                             "(need 8- or 16-bit grayscale)")
    return as_label_map(arr)


def save_labels(path, labels) -> None:
    """Write a label map as a 16-bit grayscale PNG."""
    Image.fromarray(as_label_map(labels)).save(path)


def label_palette(n: int) -> np.ndarray:
    """Deterministic (n+1, 3) uint8 palette; row 0 (background) is black."""
    rng = np.random.default_rng(0x5EED)
    pal = rng.integers(48, 256, (max(n, 1) + 1, 3)).astype(np.uint8)
    pal[0] = 0
    return pal


def save_label_overlay(path, labels) -> None:
    """Write an RGB visualization of a label map with a fixed palette."""
    lab = as_label_map(labels)
    pal = label_palette(int(lab.max()))
    Image.fromarray(pal[lab]).save(path)
