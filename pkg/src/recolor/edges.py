"""Segment neighborhood systems used by the reward function.

Two families of directed pixel edges are defined against a ground-truth label
map, both restricted to foreground pixels:

* cross-segment ("splitting") edges with radius r: pixel u has an edge to
  every foreground pixel v of a *different* label whose Manhattan distance to
  u's segment is < r.  The target set depends only on u's segment, so it is
  stored once per segment.
* within-segment ("merging") edges with shrinking factor alpha: pixel u has an
  edge to every pixel of the eroded inner region of its own segment (itself
  excluded).

Neither family is materialized as explicit edges; per-segment pixel sets plus
color histograms give the same per-pixel counts in O(N) per coloring step.
:func:`brute_force_edges` builds the explicit lists straight from the
definitions for testing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from .coloring import as_label_map

ORACLE_AREA_LIMIT = 4096

_CROSS = ndi.generate_binary_structure(2, 1)


def _segment_indices(gt: np.ndarray) -> dict[int, np.ndarray]:
    """Flat pixel indices of every nonzero label, keyed by label value."""
    flat = gt.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_vals = flat[order]
    start = np.searchsorted(sorted_vals, 1)
    labels, splits = np.unique(sorted_vals[start:], return_index=True)
    groups = np.split(order[start:], splits[1:])
    return {int(lab): idx for lab, idx in zip(labels, groups)}


def _matched_counts(pool_colors: np.ndarray, own_colors: np.ndarray) -> np.ndarray:
    """For each entry of own_colors, how many pool entries share that color."""
    if pool_colors.size == 0:
        return np.zeros(own_colors.shape, dtype=np.int64)
    uniq, counts = np.unique(pool_colors, return_counts=True)
    pos = np.searchsorted(uniq, own_colors).clip(max=uniq.size - 1)
    return np.where(uniq[pos] == own_colors, counts[pos], 0)


@dataclass(frozen=True)
class SplitEdgeSystem:
    """Cross-segment neighbor sets for one splitting radius.

    ``neighbors[label]`` holds the flat indices of all other-label foreground
    pixels within Manhattan distance < radius of that segment.  ``degree`` is
    the per-pixel out-degree (identical across a segment, 0 on background).
    """

    radius: int
    shape: tuple[int, int]
    segments: dict[int, np.ndarray]
    neighbors: dict[int, np.ndarray]
    degree: np.ndarray  # (H, W) int64

    def count_split_merged(self, colors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel counts of neighbors currently split from / merged with it.

        Returns ``(n_split, n_merged)`` where for pixel v in segment S,
        n_merged is the number of pixels in S's neighbor set sharing v's
        color and n_split is the rest.  Background pixels get 0.
        """
        flat = colors.ravel()
        n_split = np.zeros(flat.shape, dtype=np.int64)
        n_merged = np.zeros(flat.shape, dtype=np.int64)
        for lab, seg in self.segments.items():
            nbr = self.neighbors[lab]
            if nbr.size == 0:
                continue
            merged = _matched_counts(flat[nbr], flat[seg])
            n_merged[seg] = merged
            n_split[seg] = nbr.size - merged
        return n_split.reshape(self.shape), n_merged.reshape(self.shape)


@dataclass(frozen=True)
class MergeEdgeSystem:
    """Inner-region neighbor sets for one shrinking factor.

    Every pixel of a segment is compared against the segment's eroded inner
    region; a pixel inside the inner region does not count itself.
    """

    alpha: float
    min_size: int
    shape: tuple[int, int]
    segments: dict[int, np.ndarray]
    inner: dict[int, np.ndarray]
    in_inner: np.ndarray  # (H, W) bool
    degree: np.ndarray  # (H, W) int64

    def count_merged_split(self, colors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel counts ``(n_merged, n_split)`` against the inner region."""
        flat = colors.ravel()
        in_inner = self.in_inner.ravel()
        deg = self.degree.ravel()
        n_merged = np.zeros(flat.shape, dtype=np.int64)
        for lab, seg in self.segments.items():
            inner = self.inner[lab]
            same = _matched_counts(flat[inner], flat[seg])
            n_merged[seg] = same - in_inner[seg]
        n_split = deg - n_merged
        n_split[deg == 0] = 0
        return n_merged.reshape(self.shape), n_split.reshape(self.shape)


def build_split_system(gt, radius: int) -> SplitEdgeSystem:
    """Build the cross-segment system for one radius via distance transforms.

    For each segment the Manhattan distance field to the segment is
    thresholded at < radius (strict) and intersected with other-label
    foreground, which matches the exists-a-segment-pixel edge definition
    without enumerating pixel pairs.
    """
    if radius < 1:
        raise ValueError(f"splitting radius must be >= 1, got {radius}")
    gt = as_label_map(gt)
    fg = gt > 0
    segments = _segment_indices(gt)
    neighbors: dict[int, np.ndarray] = {}
    degree = np.zeros(gt.size, dtype=np.int64)
    for lab, seg in segments.items():
        mask = gt == lab
        dist = ndi.distance_transform_cdt(~mask, metric="taxicab")
        nbr = np.flatnonzero((dist < radius) & fg & ~mask)
        neighbors[lab] = nbr
        degree[seg] = nbr.size
    return SplitEdgeSystem(int(radius), gt.shape, segments, neighbors,
                           degree.reshape(gt.shape))


def shrink_segment(mask, alpha: float, min_size: int) -> np.ndarray:
    """Erode a segment mask down to its inner region.

    Applies 4-connected erosions and returns the first iterate whose size is
    < min_size or whose size ratio to the original is < alpha.  If an erosion
    would empty the mask first, the last nonempty iterate is returned; a
    segment already smaller than min_size is returned unchanged.
    """
    mask = np.asarray(mask, dtype=bool)
    area = int(mask.sum())
    if area == 0:
        raise ValueError("cannot shrink an empty segment mask")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"shrinking factor must be in [0, 1], got {alpha}")
    cur = mask.copy()
    size = area
    while size >= min_size and size / area >= alpha:
        nxt = ndi.binary_erosion(cur, structure=_CROSS)
        n = int(nxt.sum())
        if n == 0:
            break
        cur, size = nxt, n
    return cur


def build_merge_system(gt, alpha: float, min_size: int) -> MergeEdgeSystem:
    """Build the within-segment system for one shrinking factor."""
    gt = as_label_map(gt)
    segments = _segment_indices(gt)
    inner: dict[int, np.ndarray] = {}
    in_inner = np.zeros(gt.size, dtype=bool)
    degree = np.zeros(gt.size, dtype=np.int64)
    for lab, seg in segments.items():
        core = shrink_segment(gt == lab, alpha, min_size)
        idx = np.flatnonzero(core)
        inner[lab] = idx
        in_inner[idx] = True
        degree[seg] = idx.size - in_inner[seg]
    return MergeEdgeSystem(float(alpha), int(min_size), gt.shape, segments, inner,
                           in_inner.reshape(gt.shape), degree.reshape(gt.shape))


def dump_neighbor_histograms(split_systems, merge_systems, path) -> None:
    """Write per-segment neighbor set sizes to JSON for inspection."""
    doc = {
        "split": [
            {
                "radius": s.radius,
                "segments": {str(lab): {"size": int(seg.size),
                                        "neighbors": int(s.neighbors[lab].size)}
                             for lab, seg in s.segments.items()},
            }
            for s in split_systems
        ],
        "merge": [
            {
                "alpha": m.alpha,
                "min_size": m.min_size,
                "segments": {str(lab): {"size": int(seg.size),
                                        "inner": int(m.inner[lab].size)}
                             for lab, seg in m.segments.items()},
            }
            for m in merge_systems
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


# ---------------------------------------------------------------------------
# Brute-force reference constructions (test oracles).  These evaluate the edge
# definitions literally and share no machinery with the builders above: plain
# coordinate arithmetic instead of distance transforms, shift-based erosion
# instead of scipy morphology.

def _erode4_reference(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    padded = np.zeros((mask.shape[0] + 2, mask.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask
    out &= padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return out


def _shrink_reference(mask: np.ndarray, alpha: float, min_size: int) -> np.ndarray:
    area = int(mask.sum())
    cur = mask.copy()
    size = area
    while size >= min_size and size / area >= alpha:
        nxt = _erode4_reference(cur)
        n = int(nxt.sum())
        if n == 0:
            break
        cur, size = nxt, n
    return cur


def brute_force_edges(gt, radius: int, alpha: float, min_size: int):
    """Explicit (u, v) edge lists for both systems, straight from the definitions.

    Returns ``(split_edges, merge_edges)`` as lists of flat-index pairs.
    Guarded to images of at most 4096 pixels.
    """
    gt = as_label_map(gt)
    if gt.size > ORACLE_AREA_LIMIT:
        raise ValueError(f"brute-force oracle limited to {ORACLE_AREA_LIMIT} pixels")
    if radius < 1:
        raise ValueError(f"splitting radius must be >= 1, got {radius}")
    h, w = gt.shape
    ys, xs = np.mgrid[0:h, 0:w]
    fg_flat = np.flatnonzero(gt.ravel() > 0)
    labels = [int(v) for v in np.unique(gt) if v != 0]

    split_edges: list[tuple[int, int]] = []
    for lab in labels:
        seg = np.flatnonzero((gt == lab).ravel())
        sy, sx = ys.ravel()[seg], xs.ravel()[seg]
        for v in fg_flat:
            if gt.ravel()[v] == lab:
                continue
            vy, vx = divmod(int(v), w)
            if int(np.min(np.abs(sy - vy) + np.abs(sx - vx))) < radius:
                split_edges.extend((int(u), int(v)) for u in seg)

    merge_edges: list[tuple[int, int]] = []
    for lab in labels:
        seg = np.flatnonzero((gt == lab).ravel())
        core = np.flatnonzero(_shrink_reference(gt == lab, alpha, min_size).ravel())
        for u in seg:
            merge_edges.extend((int(u), int(v)) for v in core if v != u)
    return split_edges, merge_edges


def counts_from_edge_list(edges, colors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-source-pixel counts of (differently, identically) colored targets."""
    flat = colors.ravel()
    n_diff = np.zeros(flat.shape, dtype=np.int64)
    n_same = np.zeros(flat.shape, dtype=np.int64)
    for u, v in edges:
        if flat[u] == flat[v]:
            n_same[u] += 1
        else:
            n_diff[u] += 1
    shape = colors.shape
    return n_diff.reshape(shape), n_same.reshape(shape)
