"""Feature/gradient capture and bundle writing.

Hooks tap one module per layer, ordered deepest to shallowest.  One forward
pass captures features; per class, gradients of the pre-softmax score are
taken with respect to the captured activations and stored channels-last.
The written directory follows the feature-bundle layout (manifest.json plus
NPY v1.0 files), the interchange format of the map engine.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .preprocess import MEAN, STD, normalize


@dataclass
class LayerTap:
    """Named module whose output is captured as one bundle layer."""

    name: str
    module: torch.nn.Module


def _to_hwk(tensor: torch.Tensor) -> np.ndarray:
    # [1, C, H, W] -> [H, W, C] float32
    if tensor.ndim != 4 or tensor.shape[0] != 1:
        raise ValueError(f"expected [1,C,H,W] activation, got {tuple(tensor.shape)}")
    return tensor[0].permute(1, 2, 0).detach().cpu().numpy().astype(np.float32)


def capture(model: torch.nn.Module, taps: list[LayerTap], inputs: torch.Tensor):
    """Run one forward pass, keeping the tapped activations in the graph.

    Returns (logits, activations aligned with ``taps``).
    """
    captured: dict[int, torch.Tensor] = {}
    handles = []
    for idx, tap in enumerate(taps):
        def hook(_module, _inp, out, idx=idx):
            captured[idx] = out
        handles.append(tap.module.register_forward_hook(hook))
    try:
        model.eval()
        logits = model(inputs)
    finally:
        for handle in handles:
            handle.remove()
    missing = [taps[i].name for i in range(len(taps)) if i not in captured]
    if missing:
        raise RuntimeError(f"taps never fired: {missing}")
    return logits, [captured[i] for i in range(len(taps))]


def export_bundle(
    image01: np.ndarray,
    model: torch.nn.Module,
    taps: list[LayerTap],
    class_ids: list[int],
    out_dir,
    image_id: str,
    gap_weight_rows: torch.Tensor | None = None,
    gt_class: int | None = None,
    class_offset: int = 0,
    model_name: str = "",
    force: bool = False,
) -> Path:
    """Export one image's features, per-class gradients, and metadata.

    ``class_ids`` are the raw model class indices to take gradients for;
    ``class_offset`` is added to them in the manifest (segmentation seeding
    reserves 0 for background, so 0-based label sets export with offset 1).
    ``gap_weight_rows`` is the classifier weight matrix [num_classes, k] of a
    GAP-headed model, stored per class for the deepest tap.
    """
    out = Path(out_dir)
    manifest_path = out / "manifest.json"
    if manifest_path.exists() and not force:
        raise FileExistsError(f"{manifest_path} exists; use force to overwrite")
    out.mkdir(parents=True, exist_ok=True)

    inputs = normalize(image01).requires_grad_(True)
    logits, activations = capture(model, taps, inputs)
    if logits.ndim != 2 or logits.shape[0] != 1:
        raise ValueError(f"expected [1, num_classes] logits, got {tuple(logits.shape)}")

    layer_entries = []
    for tap, act in zip(taps, activations):
        fname = f"features_{tap.name}.npy"
        arr = _to_hwk(act)
        np.save(out / fname, arr)
        layer_entries.append({"name": tap.name, "file": fname, "shape": list(arr.shape)})

    class_entries = []
    for cid in class_ids:
        score = logits[0, cid]
        grads = torch.autograd.grad(score, activations, retain_graph=True)
        grad_files = {}
        for tap, grad in zip(taps, grads):
            fname = f"grad_{cid + class_offset}_{tap.name}.npy"
            np.save(out / fname, _to_hwk(grad))
            grad_files[tap.name] = fname
        entry = {
            "class_id": cid + class_offset,
            "score": float(score.detach()),
            "grads": grad_files,
        }
        if gap_weight_rows is not None:
            fname = f"gapw_{cid + class_offset}.npy"
            np.save(out / fname, gap_weight_rows[cid].detach().cpu().numpy().astype(np.float32))
            entry["gap_weights"] = fname
        class_entries.append(entry)

    image = np.asarray(image01, dtype=np.float32)
    np.save(out / "image.npy", image)

    manifest = {
        "format": "feature-bundle/1",
        "image_id": image_id,
        "image_hw": [int(image.shape[0]), int(image.shape[1])],
        "layers": layer_entries,
        "classes": class_entries,
        "image_rgb": "image.npy",
        "provenance": {
            "exporter": "bundle-exporter",
            "model": model_name or type(model).__name__,
            "preprocess": {"mean": list(MEAN), "std": list(STD)},
        },
    }
    if gt_class is not None:
        order = torch.argsort(logits[0], descending=True)
        manifest["top1_correct"] = bool(order[0].item() == gt_class)
        manifest["top5_correct"] = bool(gt_class in order[:5].tolist())
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out
