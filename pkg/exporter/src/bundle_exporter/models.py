"""Tap configurations for supported backbones."""
from __future__ import annotations

import torch

from .export import LayerTap

# torchvision vgg16.features indices of the last ReLU in each conv stage
_VGG16_STAGE_END = {1: 3, 2: 8, 3: 15, 4: 22, 5: 29}


def vgg16_taps(model: torch.nn.Module, stages=(4, 3, 2, 1)) -> list[LayerTap]:
    """Taps on the pre-pool activation of each requested stage, deepest first."""
    ordered = sorted(stages, reverse=True)
    return [LayerTap(f"stage_{s}", model.features[_VGG16_STAGE_END[s]]) for s in ordered]


def taps_by_module_name(model: torch.nn.Module, names: list[str]) -> list[LayerTap]:
    """Generic taps: dotted module names ordered deepest to shallowest."""
    lookup = dict(model.named_modules())
    missing = [n for n in names if n not in lookup]
    if missing:
        raise KeyError(f"modules not found: {missing}; available: {sorted(lookup)[:20]}...")
    return [LayerTap(name.replace(".", "_"), lookup[name]) for name in names]


def gap_head_weights(model: torch.nn.Module, linear_name: str) -> torch.Tensor:
    """Weight matrix [num_classes, k] of a GAP-head linear classifier."""
    lookup = dict(model.named_modules())
    if linear_name not in lookup or not isinstance(lookup[linear_name], torch.nn.Linear):
        raise KeyError(f"{linear_name!r} is not a Linear module of this model")
    return lookup[linear_name].weight
