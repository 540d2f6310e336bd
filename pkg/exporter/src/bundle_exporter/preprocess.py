"""Input preprocessing shared by export and re-classification."""
from __future__ import annotations

import numpy as np
import torch
from PIL import Image

MEAN = (0.485, 0.456, 0.406)
STD = (0.229, 0.224, 0.225)


def load_image_rgb01(path, size: int | None = None) -> np.ndarray:
    """Load an image file as float32 [H,W,3] in [0,1], optionally resized."""
    img = Image.open(path).convert("RGB")
    if size is not None:
        img = img.resize((size, size), Image.BILINEAR)
    return np.asarray(img, dtype=np.float32) / 255.0


def normalize(image01: np.ndarray) -> torch.Tensor:
    """[H,W,3] in [0,1] -> normalized [1,3,H,W] tensor."""
    arr = np.asarray(image01, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected [H,W,3] image in [0,1], got {arr.shape}")
    mean = np.asarray(MEAN, dtype=np.float32)
    std = np.asarray(STD, dtype=np.float32)
    chw = ((arr - mean) / std).transpose(2, 0, 1)
    return torch.from_numpy(np.ascontiguousarray(chw)).unsqueeze(0)
