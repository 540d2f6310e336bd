"""Resampling and normalization primitives shared by every pipeline stage.

All resampling uses half-pixel-center source coordinates
(``x_s = (x_d + 0.5) * W / out_w - 0.5``, clamped to the source grid) so that
maps from layers of different resolutions line up the same way everywhere.
"""
from __future__ import annotations

import numpy as np

from .errors import EmptyInput, ShapeMismatch

_F32 = np.float32


def _source_coords(out_size: int, src_size: int) -> np.ndarray:
    coords = (np.arange(out_size, dtype=np.float64) + 0.5) * (src_size / out_size) - 0.5
    return np.clip(coords, 0.0, src_size - 1.0)


def bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a [H,W] or [H,W,C] float map with bilinear interpolation.

    Every output value is a convex combination of four source neighbors, so
    the global min/max of the source bound the output, and constant inputs
    stay constant.
    """
    src = np.asarray(src, dtype=_F32)
    if src.ndim not in (2, 3):
        raise ShapeMismatch(f"expected rank 2 or 3, got shape {src.shape}")
    if out_h < 1 or out_w < 1 or any(s < 1 for s in src.shape):
        raise EmptyInput(f"zero extent: src {src.shape}, target ({out_h}, {out_w})")
    h, w = src.shape[:2]
    if (out_h, out_w) == (h, w):
        return src.copy()

    ys = _source_coords(out_h, h)
    xs = _source_coords(out_w, w)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    if src.ndim == 3:
        wy = wy[..., None]
        wx = wx[..., None]

    s = src.astype(np.float64)
    top = s[y0][:, x0] * (1.0 - wx) + s[y0][:, x1] * wx
    bot = s[y1][:, x0] * (1.0 - wx) + s[y1][:, x1] * wx
    out = top * (1.0 - wy) + bot * wy
    return out.astype(_F32)


def nearest_resize_labels(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize an integer label grid with nearest-neighbor sampling.

    Uses the same half-pixel source coordinates as :func:`bilinear_resize`,
    rounded to the nearest source cell; no label absent from the source can
    appear in the output.
    """
    src = np.asarray(src)
    if src.ndim != 2:
        raise ShapeMismatch(f"expected rank 2 labels, got shape {src.shape}")
    if out_h < 1 or out_w < 1 or any(s < 1 for s in src.shape):
        raise EmptyInput(f"zero extent: src {src.shape}, target ({out_h}, {out_w})")
    h, w = src.shape
    if (out_h, out_w) == (h, w):
        return src.astype(np.int32, copy=True)
    ys = np.floor(_source_coords(out_h, h) + 0.5).astype(np.intp)
    xs = np.floor(_source_coords(out_w, w) + 0.5).astype(np.intp)
    ys = np.minimum(ys, h - 1)
    xs = np.minimum(xs, w - 1)
    return src[np.ix_(ys, xs)].astype(np.int32)


def minmax_normalize(t: np.ndarray) -> np.ndarray:
    """Affinely map a finite float array onto [0, 1].

    Constant inputs map to all zeros: a flat map carries no localization
    signal, and zeros make every threshold treat it as background.
    """
    t = np.asarray(t, dtype=_F32)
    lo = t.min()
    hi = t.max()
    if hi <= lo:
        return np.zeros_like(t)
    return (t - lo) / (hi - lo)
