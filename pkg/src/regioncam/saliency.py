"""Gradient- and weight-based activation maps.

Three map families live here:

* per-layer maps of positive gradient mass, summed over channels, plus their
  multi-layer fusion (the interim map the region-averaging stage refines);
* the classic GAP-weight map (needs classifier weights);
* the gradient-weighted map (spatial-mean gradient weights, any backbone).

Summation orders are fixed (channels ascending, layers deepest first) so the
same inputs always produce bit-identical maps.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import EmptyStack, MissingGapWeights, ShapeMismatch
from .ops import bilinear_resize

Resolution = Literal["native", "working", "image"]


@dataclass
class ActivationMap:
    """Single-channel nonnegative class-evidence map."""

    class_id: int
    data: np.ndarray
    resolution: Resolution = "native"

    @property
    def hw(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]


@dataclass
class SimStack:
    """Per-layer gradient maps (deepest first) and their fused sum."""

    per_layer: list[ActivationMap]
    fused: ActivationMap


def _channel_accumulate(planes: np.ndarray) -> np.ndarray:
    # Sequential channel-major accumulation; bit-stable and identical to a
    # scalar loop over k.
    out = np.zeros(planes.shape[:2], dtype=np.float32)
    for k in range(planes.shape[2]):
        out += planes[:, :, k]
    return out


def _weighted_channel_sum(features: np.ndarray, weights: np.ndarray) -> np.ndarray:
    out = np.zeros(features.shape[:2], dtype=np.float32)
    for k in range(features.shape[2]):
        out += weights[k] * features[:, :, k]
    return out


def compute_sim(grads: np.ndarray, class_id: int = 0) -> ActivationMap:
    """Sum the positive part of [h,w,k] gradients over channels.

    The result is the layer's semantic-information map: large values mark
    locations whose features the class score is most sensitive to.
    """
    grads = np.asarray(grads, dtype=np.float32)
    if grads.ndim != 3:
        raise ShapeMismatch(f"expected [h,w,k] gradients, got {grads.shape}")
    data = _channel_accumulate(np.maximum(grads, np.float32(0.0)))
    return ActivationMap(class_id=class_id, data=data, resolution="native")


def fuse_sims(
    stack: list[ActivationMap],
    working_hw: tuple[int, int],
    tanh_shallow: bool = True,
) -> ActivationMap:
    """Fuse per-layer maps (ordered deepest first) into one working-grid map.

    Each map is bilinearly resized to ``working_hw``; with ``tanh_shallow``
    every map except the deepest is passed through tanh first, damping the
    high-magnitude shallow maps relative to the deepest one.  The fused map
    is the elementwise sum, accumulated deepest first.
    """
    if not stack:
        raise EmptyStack("cannot fuse zero maps")
    out_h, out_w = working_hw
    total = np.zeros((out_h, out_w), dtype=np.float32)
    for idx, amap in enumerate(stack):
        resized = bilinear_resize(amap.data, out_h, out_w)
        if tanh_shallow and idx > 0:
            resized = np.tanh(resized)
        total += resized
    return ActivationMap(class_id=stack[0].class_id, data=total, resolution="working")


def baseline_cam(
    features_last: np.ndarray,
    gap_weights: np.ndarray | None,
    class_id: int = 0,
) -> ActivationMap:
    """GAP-weight map: ReLU of the classifier-weighted channel sum."""
    if gap_weights is None:
        raise MissingGapWeights("bundle carries no GAP classifier weights")
    features_last = np.asarray(features_last, dtype=np.float32)
    gap_weights = np.asarray(gap_weights, dtype=np.float32)
    if features_last.ndim != 3 or gap_weights.shape != (features_last.shape[2],):
        raise ShapeMismatch(
            f"features {features_last.shape} incompatible with weights {gap_weights.shape}"
        )
    data = np.maximum(_weighted_channel_sum(features_last, gap_weights), np.float32(0.0))
    return ActivationMap(class_id=class_id, data=data, resolution="native")


def baseline_gradcam(
    features: np.ndarray,
    grads: np.ndarray,
    class_id: int = 0,
) -> ActivationMap:
    """Gradient-weighted map: channel weights are spatial means of the grads.

    With spatially constant gradients this reduces exactly to
    :func:`baseline_cam` with the constants as weights.
    """
    features = np.asarray(features, dtype=np.float32)
    grads = np.asarray(grads, dtype=np.float32)
    if features.shape != grads.shape or features.ndim != 3:
        raise ShapeMismatch(f"features {features.shape} != grads {grads.shape}")
    alpha = grads.astype(np.float64).mean(axis=(0, 1)).astype(np.float32)
    data = np.maximum(_weighted_channel_sum(features, alpha), np.float32(0.0))
    return ActivationMap(class_id=class_id, data=data, resolution="native")
