"""Instance-segmentation metrics and the evaluation pipeline.

Conventions shared by all metrics here:

* label 0 is background and never counts as an instance;
* metrics depend only on the partition, never on label values;
* degenerate inputs (an empty side) fall back to fixed conventions and emit a
  warning instead of raising, so dataset-level evaluation survives bad images.

Scales follow the reporting habit for these quantities: sbd() is 0..100,
coverage() returns fractions in [0, 1] (multiplied by 100 in reports), VOI is
in nats (or bits on request), ARand is a 0..1 error.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .coloring import as_label_map, label_components, remove_small_segments
from .pngio import load_labels

REPORT_VERSION = 1
METRIC_NAMES = ("sbd", "dic", "mwcov", "mucov", "avg_fp", "avg_fn",
                "voi_split", "voi_merge", "arand")


@dataclass(frozen=True)
class MatchTable:
    """Dense intersection table between two label maps' nonzero segments."""

    gt_labels: np.ndarray    # (G,)
    pred_labels: np.ndarray  # (P,)
    gt_areas: np.ndarray     # (G,)
    pred_areas: np.ndarray   # (P,)
    intersection: np.ndarray  # (G, P)

    @property
    def iou(self) -> np.ndarray:
        union = (self.gt_areas[:, None] + self.pred_areas[None, :]
                 - self.intersection)
        out = np.zeros(self.intersection.shape, dtype=np.float64)
        np.divide(self.intersection, union, out=out, where=union > 0)
        return out

    @property
    def dice(self) -> np.ndarray:
        denom = self.gt_areas[:, None] + self.pred_areas[None, :]
        out = np.zeros(self.intersection.shape, dtype=np.float64)
        np.divide(2.0 * self.intersection, denom, out=out, where=denom > 0)
        return out


def match_table(pred, gt) -> MatchTable:
    pred = as_label_map(pred)
    gt = as_label_map(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"label maps differ in size: {pred.shape} vs {gt.shape}")
    gt_labels = np.unique(gt)
    gt_labels = gt_labels[gt_labels > 0]
    pred_labels = np.unique(pred)
    pred_labels = pred_labels[pred_labels > 0]
    gt_areas = np.bincount(gt.ravel())[gt_labels].astype(np.int64)
    pred_areas = np.bincount(pred.ravel())[pred_labels].astype(np.int64)
    inter = np.zeros((gt_labels.size, pred_labels.size), dtype=np.int64)
    both = (gt > 0) & (pred > 0)
    if both.any():
        gi = np.searchsorted(gt_labels, gt[both])
        pj = np.searchsorted(pred_labels, pred[both])
        np.add.at(inter, (gi, pj), 1)
    return MatchTable(gt_labels, pred_labels, gt_areas, pred_areas, inter)


def _best_dice_mean(dice: np.ndarray, axis: int) -> float:
    """Mean over one side's segments of its best Dice on the other side."""
    if dice.shape[1 - axis] == 0:
        return 0.0  # nothing to match against
    return float(dice.max(axis=1 - axis).mean())


def sbd(pred, gt) -> float:
    """Symmetric best Dice on a 0..100 scale."""
    table = match_table(pred, gt)
    n_gt, n_pred = table.gt_labels.size, table.pred_labels.size
    if n_gt == 0 and n_pred == 0:
        return 100.0
    if n_gt == 0 or n_pred == 0:
        warnings.warn("sbd: one side has no foreground segments")
        return 0.0
    dice = table.dice
    return 100.0 * min(_best_dice_mean(dice, 0), _best_dice_mean(dice, 1))


def dic_abs(pred, gt) -> int:
    table = match_table(pred, gt)
    return abs(int(table.pred_labels.size) - int(table.gt_labels.size))


def coverage(pred, gt) -> tuple[float, float]:
    """(size-weighted, unweighted) mean best IoU per ground-truth segment."""
    table = match_table(pred, gt)
    if table.gt_labels.size == 0:
        raise ValueError("coverage needs at least one ground-truth segment")
    if table.pred_labels.size == 0:
        best = np.zeros(table.gt_labels.size)
    else:
        best = table.iou.max(axis=1)
    mucov = float(best.mean())
    mwcov = float((best * table.gt_areas).sum() / table.gt_areas.sum())
    return mwcov, mucov


def fp_fn_rates(pred, gt, iou_threshold: float = 0.5) -> tuple[float, float]:
    """Fractions of unmatched predicted / ground-truth segments."""
    table = match_table(pred, gt)
    n_gt, n_pred = table.gt_labels.size, table.pred_labels.size
    if n_gt == 0 or n_pred == 0:
        if n_gt != n_pred:
            warnings.warn("fp_fn_rates: one side has no segments")
        return (0.0 if n_pred == 0 else 1.0,
                0.0 if n_gt == 0 else 1.0)
    matched = table.iou > iou_threshold
    avg_fp = float((~matched.any(axis=0)).sum() / n_pred)
    avg_fn = float((~matched.any(axis=1)).sum() / n_gt)
    return avg_fp, avg_fn


def _entropy(counts: np.ndarray, log) -> float:
    total = counts.sum()
    p = counts[counts > 0] / total
    return float(-(p * log(p)).sum())


def voi(pred, gt, foreground_only: bool = True,
        use_log2: bool = False) -> tuple[float, float]:
    """(H(pred | gt), H(gt | pred)) over the chosen pixel set.

    The split term charges oversegmentation of ground-truth regions, the
    merge term undersegmentation.  With ``foreground_only`` the distribution
    is restricted to ground-truth foreground pixels.
    """
    pred = as_label_map(pred)
    gt = as_label_map(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"label maps differ in size: {pred.shape} vs {gt.shape}")
    sel = gt > 0 if foreground_only else np.ones(gt.shape, dtype=bool)
    if not sel.any():
        warnings.warn("voi: empty pixel selection")
        return 0.0, 0.0
    g = gt[sel].astype(np.int64)
    p = pred[sel].astype(np.int64)
    joint = np.unique(g * 65536 + p, return_counts=True)[1]
    log = np.log2 if use_log2 else np.log
    h_joint = _entropy(joint, log)
    h_gt = _entropy(np.unique(g, return_counts=True)[1], log)
    h_pred = _entropy(np.unique(p, return_counts=True)[1], log)
    return h_joint - h_gt, h_joint - h_pred


def _pair_count(counts: np.ndarray) -> int:
    counts = counts.astype(np.int64)
    return int((counts * (counts - 1) // 2).sum())


def arand(pred, gt, foreground_only: bool = True) -> float:
    """Adapted Rand error: 1 minus the pair-counting F-score."""
    pred = as_label_map(pred)
    gt = as_label_map(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"label maps differ in size: {pred.shape} vs {gt.shape}")
    sel = gt > 0 if foreground_only else np.ones(gt.shape, dtype=bool)
    if not sel.any():
        warnings.warn("arand: empty pixel selection")
        return 0.0
    g = gt[sel].astype(np.int64)
    p = pred[sel].astype(np.int64)
    joint = np.unique(g * 65536 + p, return_counts=True)[1]
    pairs_joint = _pair_count(joint)
    pairs_gt = _pair_count(np.unique(g, return_counts=True)[1])
    pairs_pred = _pair_count(np.unique(p, return_counts=True)[1])
    precision = pairs_joint / pairs_pred if pairs_pred else 1.0
    recall = pairs_joint / pairs_gt if pairs_gt else 1.0
    if precision + recall == 0.0:
        return 1.0
    return 1.0 - 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class EvalOptions:
    min_area: int = 4
    connectivity: int = 4
    iou_threshold: float = 0.5
    foreground_only: bool = True
    use_log2: bool = False
    metrics: tuple[str, ...] = METRIC_NAMES

    def __post_init__(self):
        unknown = set(self.metrics) - set(METRIC_NAMES)
        if unknown:
            raise ValueError(f"unknown metrics: {sorted(unknown)}")
        object.__setattr__(self, "metrics", tuple(self.metrics))

    def to_dict(self) -> dict:
        return {"min_area": self.min_area, "connectivity": self.connectivity,
                "iou_threshold": self.iou_threshold,
                "foreground_only": self.foreground_only,
                "use_log2": self.use_log2, "metrics": list(self.metrics)}


def postprocess_prediction(pred, options: EvalOptions) -> np.ndarray:
    """Re-index connected components, then drop small segments."""
    comps = label_components(pred, options.connectivity)
    return remove_small_segments(comps, options.min_area)


def evaluate_pair(pred, gt, options: EvalOptions = EvalOptions()) -> dict:
    """All requested metrics for one (prediction, ground truth) pair."""
    pred = postprocess_prediction(pred, options)
    gt = as_label_map(gt)
    table = match_table(pred, gt)
    out = {"n_gt": int(table.gt_labels.size),
           "n_pred": int(table.pred_labels.size)}
    wanted = set(options.metrics)
    if "sbd" in wanted:
        out["sbd"] = sbd(pred, gt)
    if "dic" in wanted:
        out["dic"] = dic_abs(pred, gt)
    if wanted & {"mwcov", "mucov"}:
        if table.gt_labels.size == 0:
            warnings.warn("coverage: no ground-truth segments, reporting 0")
            mwcov = mucov = 0.0
        else:
            mwcov, mucov = coverage(pred, gt)
        if "mwcov" in wanted:
            out["mwcov"] = 100.0 * mwcov
        if "mucov" in wanted:
            out["mucov"] = 100.0 * mucov
    if wanted & {"avg_fp", "avg_fn"}:
        avg_fp, avg_fn = fp_fn_rates(pred, gt, options.iou_threshold)
        if "avg_fp" in wanted:
            out["avg_fp"] = avg_fp
        if "avg_fn" in wanted:
            out["avg_fn"] = avg_fn
    if wanted & {"voi_split", "voi_merge"}:
        split, merge = voi(pred, gt, options.foreground_only, options.use_log2)
        if "voi_split" in wanted:
            out["voi_split"] = split
        if "voi_merge" in wanted:
            out["voi_merge"] = merge
    if "arand" in wanted:
        out["arand"] = arand(pred, gt, options.foreground_only)
    return out


def _gt_path(gt_dir: str, sample_id: str) -> str | None:
    # _label.png first: dataset directories keep the raw image at <id>.png.
    for name in (sample_id + "_label.png", sample_id + ".png"):
        path = os.path.join(gt_dir, name)
        if os.path.exists(path):
            return path
    return None


def evaluate(pred_dir, gt_dir, options: EvalOptions = EvalOptions()) -> dict:
    """Evaluate every prediction PNG against its ground-truth partner.

    Predictions are ``<id>.png`` label maps; ground truth may be stored as
    ``<id>_label.png`` (dataset layout, preferred) or ``<id>.png``.  Unpaired
    predictions are an error listing the offenders.
    """
    pred_names = sorted(f for f in os.listdir(pred_dir) if f.endswith(".png"))
    ids = [f[:-4] for f in pred_names]
    missing = [i for i in ids if _gt_path(gt_dir, i) is None]
    if missing:
        raise ValueError(f"no ground truth for prediction ids: {missing}")
    per_image = []
    for sample_id in ids:
        pred = load_labels(os.path.join(pred_dir, sample_id + ".png"))
        gt = load_labels(_gt_path(gt_dir, sample_id))
        row = {"id": sample_id}
        row.update(evaluate_pair(pred, gt, options))
        per_image.append(row)
    numeric = [k for k in per_image[0] if k != "id"] if per_image else []
    aggregate = {k: float(np.mean([row[k] for row in per_image]))
                 for k in numeric}
    return {"format_version": REPORT_VERSION,
            "options": options.to_dict(),
            "per_image": per_image,
            "aggregate": aggregate}


def save_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
