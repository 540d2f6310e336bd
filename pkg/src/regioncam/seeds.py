"""Segmentation seeds from per-class activation maps, and their scoring.

Seeding concatenates a constant background level with the class maps and
takes the per-pixel argmax: a pixel is background when every class value
falls below the threshold, otherwise it gets the strongest class (ties to
the smallest class id).  Scoring accumulates a ground-truth x prediction
confusion matrix (boundary pixels ignored) and reports per-class IoU and
its mean; the threshold sweep repeats this over a grid, 0.01 steps by
default.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError, EmptyClassSet, ShapeMismatch
from .saliency import ActivationMap

DEFAULT_IGNORE_LABEL = 255


def default_grid() -> list[float]:
    """Background-threshold grid covering [0, 1] in 0.01 steps (101 values)."""
    return [i / 100 for i in range(101)]


@dataclass
class SeedMask:
    """Pixel labels: 0 is background, class ids are >= 1."""

    labels: np.ndarray
    threshold: float


@dataclass
class ConfusionMatrix:
    """(num_classes+1) x (num_classes+1) ground-truth x prediction counts."""

    counts: np.ndarray
    num_classes: int

    @classmethod
    def empty(cls, num_classes: int) -> "ConfusionMatrix":
        side = num_classes + 1
        return cls(counts=np.zeros((side, side), dtype=np.int64), num_classes=num_classes)

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.counts.shape != other.counts.shape:
            raise ShapeMismatch("cannot merge confusion matrices of different sizes")
        return ConfusionMatrix(self.counts + other.counts, self.num_classes)


def _map_values(m) -> np.ndarray:
    return m.data if isinstance(m, ActivationMap) else np.asarray(m)


def _stack_maps(maps: Mapping[int, ActivationMap]) -> tuple[np.ndarray, np.ndarray]:
    if not maps:
        raise EmptyClassSet("need at least one class map")
    class_ids = sorted(maps)
    if class_ids[0] < 1:
        raise ConfigError(f"class id {class_ids[0]} invalid; 0 is reserved for background")
    arrays = [_map_values(maps[cid]) for cid in class_ids]
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ShapeMismatch(f"class maps disagree in shape: {sorted(shapes)}")
    return np.asarray(class_ids, dtype=np.int32), np.stack(arrays)


def make_seed(maps: Mapping[int, ActivationMap], bg_threshold: float) -> SeedMask:
    """Argmax seeding with a manual background level.

    A pixel is background iff every class value is strictly below
    ``bg_threshold``; ties between classes go to the smallest class id.
    """
    class_ids, stacked = _stack_maps(maps)
    winner_idx = np.argmax(stacked, axis=0)      # first max wins -> smallest id
    winner = class_ids[winner_idx]
    peak = np.max(stacked, axis=0)
    labels = np.where(peak >= bg_threshold, winner, 0).astype(np.int32)
    return SeedMask(labels=labels, threshold=float(bg_threshold))


def update_confusion(
    cm: ConfusionMatrix,
    gt: np.ndarray,
    pred: SeedMask | np.ndarray,
    ignore_label: int = DEFAULT_IGNORE_LABEL,
) -> ConfusionMatrix:
    """Accumulate per-pixel (gt, pred) tallies in place; returns ``cm``."""
    pred_labels = pred.labels if isinstance(pred, SeedMask) else np.asarray(pred)
    gt = np.asarray(gt)
    if gt.shape != pred_labels.shape:
        raise ShapeMismatch(f"gt {gt.shape} vs prediction {pred_labels.shape}")
    keep = gt != ignore_label
    side = cm.num_classes + 1
    g = gt[keep].astype(np.int64)
    p = pred_labels[keep].astype(np.int64)
    if ((g < 0) | (g >= side) | (p < 0) | (p >= side)).any():
        raise ShapeMismatch(f"labels outside [0, {side}) in gt/prediction")
    cm.counts += np.bincount(g * side + p, minlength=side * side).reshape(side, side)
    return cm


def miou(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class IoU (NaN where gt and prediction are both empty) and its mean.

    The mean covers only classes with a non-empty union.
    """
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    union = counts.sum(axis=0) + counts.sum(axis=1) - tp
    per_class = np.full(len(tp), np.nan)
    defined = union > 0
    per_class[defined] = tp[defined] / union[defined]
    mean = float(np.nanmean(per_class)) if defined.any() else float("nan")
    return per_class, mean


@dataclass
class SweepReport:
    thresholds: list[float]
    miou: list[float]
    best_threshold: float
    best_miou: float
    mean_miou: float
    per_class_at_best: list[float]
    num_classes: int
    per_method: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "thresholds": self.thresholds,
            "miou": self.miou,
            "best_threshold": self.best_threshold,
            "best_miou": self.best_miou,
            "mean_miou": self.mean_miou,
            "per_class_at_best": [
                None if np.isnan(v) else float(v) for v in self.per_class_at_best
            ],
            "num_classes": self.num_classes,
        }


def sweep_confusions(
    maps: Mapping[int, ActivationMap],
    gt: np.ndarray,
    grid: list[float],
    num_classes: int,
    ignore_label: int = DEFAULT_IGNORE_LABEL,
) -> list[ConfusionMatrix]:
    """Per-threshold confusion matrices for one image.

    Equivalent to running :func:`make_seed` + :func:`update_confusion` at
    every grid value, but the class argmax is computed once.
    """
    class_ids, stacked = _stack_maps(maps)
    winner = class_ids[np.argmax(stacked, axis=0)]
    peak = np.max(stacked, axis=0)
    out = []
    for t in grid:
        pred = np.where(peak >= t, winner, 0).astype(np.int32)
        cm = ConfusionMatrix.empty(num_classes)
        update_confusion(cm, gt, pred, ignore_label)
        out.append(cm)
    return out


def sweep_thresholds(
    dataset: Iterable[tuple[Mapping[int, ActivationMap], np.ndarray]],
    grid: list[float],
    num_classes: int,
    ignore_label: int = DEFAULT_IGNORE_LABEL,
) -> SweepReport:
    """mIoU at every grid threshold over a dataset of (maps, gt) pairs."""
    grid = [float(t) for t in grid]
    if not grid or any(t < 0.0 or t > 1.0 for t in grid):
        raise ConfigError("threshold grid must be non-empty with values in [0, 1]")
    totals = [ConfusionMatrix.empty(num_classes) for _ in grid]
    for maps, gt in dataset:
        per_image = sweep_confusions(maps, gt, grid, num_classes, ignore_label)
        totals = [a.merge(b) for a, b in zip(totals, per_image)]
    return summarize_sweep(grid, totals, num_classes)


def summarize_sweep(
    grid: list[float], totals: list[ConfusionMatrix], num_classes: int
) -> SweepReport:
    scores = []
    tables = []
    for cm in totals:
        per_class, mean = miou(cm)
        scores.append(mean)
        tables.append(per_class)
    best_idx = int(np.nanargmax(scores))
    return SweepReport(
        thresholds=grid,
        miou=[float(s) for s in scores],
        best_threshold=grid[best_idx],
        best_miou=float(scores[best_idx]),
        mean_miou=float(np.nanmean(scores)),
        per_class_at_best=list(tables[best_idx]),
        num_classes=num_classes,
    )
