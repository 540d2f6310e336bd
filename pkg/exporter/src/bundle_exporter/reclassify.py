"""Re-classification of (occluded) image tensors into accuracy/confidence records.

The output JSON's ``records`` key holds one aggregate row
[top1_accuracy, top5_accuracy, top1_confidence, top5_confidence] in the
shape the occlusion drops table consumes.  Top-K confidence is the mean
softmax probability of the ground-truth class over images whose ground
truth is within the top-K predictions.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .preprocess import normalize


def classify_images(model: torch.nn.Module, items: list[tuple[str, np.ndarray, int]]) -> dict:
    """``items``: (image_id, [H,W,3] in [0,1], gt class).  Returns the report dict."""
    per_image = []
    model.eval()
    with torch.no_grad():
        for image_id, image01, gt in items:
            probs = torch.softmax(model(normalize(image01))[0], dim=-1)
            order = torch.argsort(probs, descending=True)
            top1 = bool(order[0].item() == gt)
            top5 = bool(gt in order[:5].tolist())
            per_image.append(
                {
                    "image_id": image_id,
                    "gt_class": int(gt),
                    "top1_correct": top1,
                    "top5_correct": top5,
                    "gt_probability": float(probs[gt]),
                }
            )
    n = len(per_image)
    if n == 0:
        return {"records": [], "per_image": []}
    top1_hits = [r for r in per_image if r["top1_correct"]]
    top5_hits = [r for r in per_image if r["top5_correct"]]
    record = [
        len(top1_hits) / n,
        len(top5_hits) / n,
        float(np.mean([r["gt_probability"] for r in top1_hits])) if top1_hits else 0.0,
        float(np.mean([r["gt_probability"] for r in top5_hits])) if top5_hits else 0.0,
    ]
    return {"records": [record], "per_image": per_image}


def _load_rgb01_npy(path) -> np.ndarray:
    arr = np.load(path)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{path}: expected [H,W,3] image tensor, got {arr.shape}")
    return arr.astype(np.float32)


def items_from_occlusion_manifest(manifest_path, class_offset: int = 0):
    """Items from the manifest the map engine's occlude command writes.

    ``class_offset`` undoes the offset applied at export time, mapping the
    manifest's class ids back to model class indices.
    """
    base = Path(manifest_path).parent
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    return [
        (e["image_id"], _load_rgb01_npy(base / e["file"]), int(e["class_id"]) - class_offset)
        for e in manifest["images"]
    ]


def items_from_bundles(bundles_dir, class_offset: int = 0):
    """Original (unoccluded) images straight out of bundle directories."""
    base = Path(bundles_dir)
    items = []
    for manifest_path in sorted(base.glob("*/manifest.json")):
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        if not manifest.get("image_rgb") or not manifest["classes"]:
            raise ValueError(f"{manifest_path}: bundle lacks image tensor or classes")
        image = _load_rgb01_npy(manifest_path.parent / manifest["image_rgb"])
        gt = int(manifest["classes"][0]["class_id"]) - class_offset
        items.append((manifest["image_id"], image, gt))
    if not items:
        raise ValueError(f"no bundles under {base}")
    return items
