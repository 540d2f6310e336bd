"""Codec-free visualizations: binary PPM (P6) images, bit-exact by construction."""
from __future__ import annotations

import os

import numpy as np

from .errors import ShapeMismatch


def write_ppm(path: str | os.PathLike, rgb: np.ndarray) -> None:
    """Write an [H,W,3] uint8 array as a binary P6 PPM."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ShapeMismatch(f"expected uint8 [H,W,3], got {rgb.dtype} {rgb.shape}")
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes("C"))


def heatmap_rgb(map01: np.ndarray) -> np.ndarray:
    """Classic blue-to-red heatmap of a [0,1] map."""
    v = np.clip(np.asarray(map01, dtype=np.float64), 0.0, 1.0)
    r = np.clip(1.5 - np.abs(4.0 * v - 3.0), 0.0, 1.0)
    g = np.clip(1.5 - np.abs(4.0 * v - 2.0), 0.0, 1.0)
    b = np.clip(1.5 - np.abs(4.0 * v - 1.0), 0.0, 1.0)
    return (np.stack([r, g, b], axis=-1) * 255.0).round().astype(np.uint8)


def class_palette(n: int) -> np.ndarray:
    """First ``n`` entries of the standard segmentation palette.

    Index 0 is black (background); colors come from spreading each label's
    bits across the RGB channels, the usual convention for seed masks.
    """
    palette = np.zeros((n, 3), dtype=np.uint8)
    for i in range(n):
        label = i
        r = g = b = 0
        for shift in range(8):
            r |= ((label >> 0) & 1) << (7 - shift)
            g |= ((label >> 1) & 1) << (7 - shift)
            b |= ((label >> 2) & 1) << (7 - shift)
            label >>= 3
        palette[i] = (r, g, b)
    return palette


def seed_rgb(labels: np.ndarray) -> np.ndarray:
    """Color a seed mask with the class palette."""
    labels = np.asarray(labels)
    palette = class_palette(int(labels.max()) + 1)
    return palette[labels]


def image_preview_rgb(image01: np.ndarray) -> np.ndarray:
    """Quantize a [0,1] float RGB image to uint8 for preview output."""
    img = np.clip(np.asarray(image01, dtype=np.float64), 0.0, 1.0)
    return (img * 255.0).round().astype(np.uint8)
