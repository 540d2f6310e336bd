"""Box-level localization from activation maps.

Protocol: keep pixels at or above a fraction of the map maximum (35% in the
standard setting), take the largest 8-connected segment, and score the
tightest box around it against ground truth at IoU >= 0.5, gated by top-1 /
top-5 classification correctness.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError, EmptyMask, EmptyRecords
from .saliency import ActivationMap

_EIGHT_CONNECTED = np.ones((3, 3), dtype=np.int32)


@dataclass(frozen=True)
class BBox:
    """Pixel box, inclusive-exclusive: [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ConfigError(f"degenerate box {(self.x0, self.y0, self.x1, self.y1)}")

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


@dataclass
class LocRecord:
    image_id: str
    gt_boxes: list[BBox]
    top1_correct: bool
    top5_correct: bool
    pred_box: BBox


def _map_values(m) -> np.ndarray:
    return m.data if isinstance(m, ActivationMap) else np.asarray(m)


def threshold_mask(m, frac: float) -> np.ndarray:
    """Boolean mask of pixels at or above ``frac`` of the map maximum.

    ``frac=0`` keeps everything; ``frac=1`` keeps only the argmax plateau.
    Masks shrink monotonically as ``frac`` grows.
    """
    values = _map_values(m)
    if not 0.0 <= frac <= 1.0:
        raise ConfigError(f"frac must be in [0, 1], got {frac}")
    return values >= frac * values.max()


def largest_component_bbox(mask: np.ndarray) -> BBox:
    """Tight box around the largest 8-connected component of a binary mask.

    Size ties go to the component whose smallest (row, col) set pixel is
    lexicographically first.
    """
    mask = np.asarray(mask).astype(bool)
    if not mask.any():
        raise EmptyMask("mask has no set pixels")
    labeled, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    sizes = np.bincount(labeled.reshape(-1))[1:]
    # ndimage labels components in row-major discovery order, so the first
    # argmax is exactly the tie rule above.
    winner = int(np.argmax(sizes)) + 1
    rows, cols = np.nonzero(labeled == winner)
    return BBox(
        x0=int(cols.min()),
        y0=int(rows.min()),
        x1=int(cols.max()) + 1,
        y1=int(rows.max()) + 1,
    )


def box_iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    ix = max(0, min(a.x1, b.x1) - max(a.x0, b.x0))
    iy = max(0, min(a.y1, b.y1) - max(a.y0, b.y0))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def _hit(record: LocRecord) -> bool:
    return max(box_iou(record.pred_box, gt) for gt in record.gt_boxes) >= 0.5


def loc_scores(records: Sequence[LocRecord]) -> tuple[float, float]:
    """(loc1, loc5): fraction with correct top-1/top-5 class AND a box hit."""
    if not records:
        raise EmptyRecords("no localization records")
    loc1 = sum(1 for r in records if r.top1_correct and _hit(r)) / len(records)
    loc5 = sum(1 for r in records if r.top5_correct and _hit(r)) / len(records)
    return loc1, loc5


@dataclass
class LocCase:
    """One image's inputs for localization: map plus ground truth and flags."""

    image_id: str
    map: ActivationMap
    gt_boxes: list[BBox]
    top1_correct: bool
    top5_correct: bool


def locate_case(case: LocCase, frac: float) -> LocRecord:
    pred = largest_component_bbox(threshold_mask(case.map, frac))
    return LocRecord(
        image_id=case.image_id,
        gt_boxes=case.gt_boxes,
        top1_correct=case.top1_correct,
        top5_correct=case.top5_correct,
        pred_box=pred,
    )


@dataclass
class LocSweepReport:
    thresholds: list[float]
    loc1: list[float]
    loc5: list[float]
    ave_loc1: float
    ave_loc5: float
    best_loc1_threshold: float
    best_loc1: float
    best_loc5_threshold: float
    best_loc5: float

    def as_dict(self) -> dict:
        return {
            "thresholds": self.thresholds,
            "loc1": self.loc1,
            "loc5": self.loc5,
            "ave_loc1": self.ave_loc1,
            "ave_loc5": self.ave_loc5,
            "best_loc1_threshold": self.best_loc1_threshold,
            "best_loc1": self.best_loc1,
            "best_loc5_threshold": self.best_loc5_threshold,
            "best_loc5": self.best_loc5,
        }


def loc_sweep(cases: Iterable[LocCase], grid: list[float]) -> LocSweepReport:
    """loc1/loc5 at every grid threshold, plus their grid averages."""
    grid = [float(t) for t in grid]
    if not grid or any(t < 0.0 or t > 1.0 for t in grid):
        raise ConfigError("threshold grid must be non-empty with values in [0, 1]")
    cases = list(cases)
    if not cases:
        raise EmptyRecords("no localization cases")
    loc1s, loc5s = [], []
    for t in grid:
        records = [locate_case(c, t) for c in cases]
        l1, l5 = loc_scores(records)
        loc1s.append(l1)
        loc5s.append(l5)
    i1 = int(np.argmax(loc1s))
    i5 = int(np.argmax(loc5s))
    return LocSweepReport(
        thresholds=grid,
        loc1=loc1s,
        loc5=loc5s,
        ave_loc1=float(np.mean(loc1s)),
        ave_loc5=float(np.mean(loc5s)),
        best_loc1_threshold=grid[i1],
        best_loc1=loc1s[i1],
        best_loc5_threshold=grid[i5],
        best_loc5=loc5s[i5],
    )
