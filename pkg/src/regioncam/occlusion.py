"""Occlusion-experiment support.

Masks the strongest activation regions (at or above a fraction of the map
maximum, 85% in the standard setting), paints them over with a fill color,
and tabulates how classification accuracy/confidence drop after the masked
images are re-classified externally.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LengthMismatch, ShapeMismatch
from .saliency import ActivationMap

# Mean color of the standard training distribution; occluding with it keeps
# occluded pixels statistically unremarkable.
DEFAULT_FILL = (0.485, 0.456, 0.406)

METRICS = ("top1_accuracy", "top5_accuracy", "top1_confidence", "top5_confidence")


def _map_values(m) -> np.ndarray:
    return m.data if isinstance(m, ActivationMap) else np.asarray(m)


def occlusion_mask(m, frac: float) -> np.ndarray:
    """Pixels to occlude: at or above ``frac`` of the map maximum.

    An all-zero map occludes nothing; a vacuous threshold would otherwise
    blank the whole image for an absent class.
    """
    values = _map_values(m)
    peak = values.max()
    if peak <= 0.0:
        return np.zeros(values.shape, dtype=bool)
    return values >= frac * peak


def apply_occlusion(
    image: np.ndarray,
    mask: np.ndarray,
    fill: Sequence[float] = DEFAULT_FILL,
) -> np.ndarray:
    """Replace masked pixels of an [H,W,3] image with ``fill``; others are untouched."""
    image = np.asarray(image, dtype=np.float32)
    mask = np.asarray(mask).astype(bool)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeMismatch(f"expected [H,W,3] image, got {image.shape}")
    if mask.shape != image.shape[:2]:
        raise ShapeMismatch(f"mask {mask.shape} vs image {image.shape[:2]}")
    out = image.copy()
    out[mask] = np.asarray(fill, dtype=np.float32)
    return out


@dataclass
class OcclusionReport:
    """Before/after classification metrics and their drops, row-aligned."""

    rows: list[dict]
    mean: dict

    def as_dict(self) -> dict:
        return {"rows": self.rows, "mean": self.mean}


def _coerce_metrics(rec) -> dict:
    if isinstance(rec, dict):
        try:
            return {k: float(rec[k]) for k in METRICS}
        except KeyError as exc:
            raise LengthMismatch(f"record missing metric {exc}") from exc
    values = list(rec)
    if len(values) != len(METRICS):
        raise LengthMismatch(f"expected {len(METRICS)} metrics per record, got {len(values)}")
    return dict(zip(METRICS, map(float, values)))


def occlusion_report(before: Sequence, after: Sequence) -> OcclusionReport:
    """Tabulate per-metric before/after values and drops (before - after)."""
    before = list(before)
    after = list(after)
    if len(before) != len(after):
        raise LengthMismatch(f"{len(before)} before-records vs {len(after)} after-records")
    rows = []
    for b, a in zip(before, after):
        bm, am = _coerce_metrics(b), _coerce_metrics(a)
        rows.append(
            {
                metric: {
                    "before": bm[metric],
                    "after": am[metric],
                    "drop": bm[metric] - am[metric],
                }
                for metric in METRICS
            }
        )
    mean = {}
    for metric in METRICS:
        if rows:
            mean[metric] = {
                key: float(np.mean([row[metric][key] for row in rows]))
                for key in ("before", "after", "drop")
            }
    return OcclusionReport(rows=rows, mean=mean)
