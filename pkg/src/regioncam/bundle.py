"""Feature-bundle interchange format.

A bundle is one directory per image: ``manifest.json`` plus one ``.npy`` file
per tensor.  It carries everything the pipeline needs downstream of the
network: per-layer feature maps ordered deepest to shallowest, per-class
score gradients of matching shapes, optional classifier GAP weights, and an
optional [0,1] RGB copy of the input for occlusion experiments.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BundleExists,
    MalformedManifest,
    ManifestMissing,
    NonMonotoneLayers,
    ShapeMismatch,
)
from .npyio import load_array, save_array

MANIFEST_NAME = "manifest.json"
FORMAT_TAG = "feature-bundle/1"


@dataclass
class LayerRecord:
    """One layer's feature maps, channels last: [h, w, k]."""

    name: str
    features: np.ndarray

    @property
    def hw(self) -> tuple[int, int]:
        return self.features.shape[0], self.features.shape[1]


@dataclass
class ClassRecord:
    """Per-class score, gradients per layer, and optional GAP-head weights."""

    class_id: int
    score: float
    grads: dict[str, np.ndarray]
    gap_weights: np.ndarray | None = None


@dataclass
class FeatureBundle:
    image_id: str
    image_hw: tuple[int, int]
    layers: list[LayerRecord]
    classes: list[ClassRecord]
    image_rgb: np.ndarray | None = None
    top1_correct: bool | None = None
    top5_correct: bool | None = None
    provenance: dict = field(default_factory=dict)

    def layer_names(self) -> list[str]:
        return [layer.name for layer in self.layers]

    def layer(self, name: str) -> LayerRecord:
        for rec in self.layers:
            if rec.name == name:
                return rec
        raise KeyError(name)

    def class_record(self, class_id: int) -> ClassRecord | None:
        for rec in self.classes:
            if rec.class_id == class_id:
                return rec
        return None

    def class_ids(self) -> list[int]:
        return [rec.class_id for rec in self.classes]


def _validate(bundle: FeatureBundle) -> None:
    if len(bundle.layers) < 2:
        raise MalformedManifest(
            f"bundle {bundle.image_id!r} has {len(bundle.layers)} layers, need >= 2"
        )
    extents = [layer.hw for layer in bundle.layers]
    for (h0, w0), (h1, w1) in zip(extents, extents[1:]):
        if h0 > h1 or w0 > w1:
            raise NonMonotoneLayers(
                f"bundle {bundle.image_id!r}: layer extents {extents} must grow deep->shallow"
            )
    names = bundle.layer_names()
    for cls in bundle.classes:
        if set(cls.grads) != set(names):
            raise ShapeMismatch(
                f"class {cls.class_id}: gradient layers {sorted(cls.grads)} != {sorted(names)}"
            )
        for layer in bundle.layers:
            if cls.grads[layer.name].shape != layer.features.shape:
                raise ShapeMismatch(
                    f"class {cls.class_id}, layer {layer.name!r}: gradient shape "
                    f"{cls.grads[layer.name].shape} != feature shape {layer.features.shape}"
                )
        if cls.gap_weights is not None:
            k_last = bundle.layers[0].features.shape[2]
            if cls.gap_weights.shape != (k_last,):
                raise ShapeMismatch(
                    f"class {cls.class_id}: gap weights shape {cls.gap_weights.shape} "
                    f"!= ({k_last},) for the deepest layer"
                )
    if bundle.image_rgb is not None:
        expected = (*bundle.image_hw, 3)
        if bundle.image_rgb.shape != expected:
            raise ShapeMismatch(
                f"image tensor shape {bundle.image_rgb.shape} != {expected}"
            )


def _safe_relpath(name: str, base: Path) -> Path:
    p = Path(name)
    if p.is_absolute() or ".." in p.parts:
        raise MalformedManifest(f"manifest must use plain relative paths, got {name!r}")
    return base / p


def read_bundle(bundle_dir: str | os.PathLike) -> FeatureBundle:
    """Load and fully validate a bundle directory.

    Any violation raises a typed error; a partially valid bundle is never
    returned.
    """
    base = Path(bundle_dir)
    manifest_path = base / MANIFEST_NAME
    if not manifest_path.is_file():
        raise ManifestMissing(f"no {MANIFEST_NAME} in {base}")
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedManifest(f"{manifest_path}: {exc}") from exc

    try:
        image_id = str(manifest["image_id"])
        image_hw = tuple(int(v) for v in manifest["image_hw"])
        layer_entries = manifest["layers"]
        class_entries = manifest["classes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedManifest(f"{manifest_path}: missing/invalid field ({exc})") from exc
    if len(image_hw) != 2 or any(v < 1 for v in image_hw):
        raise MalformedManifest(f"{manifest_path}: bad image_hw {image_hw}")

    layers = []
    for entry in layer_entries:
        name = str(entry["name"])
        features = load_array(_safe_relpath(entry["file"], base))
        if features.ndim != 3:
            raise ShapeMismatch(f"layer {name!r}: features must be [h,w,k], got {features.shape}")
        layers.append(LayerRecord(name=name, features=features))

    classes = []
    for entry in class_entries:
        grads = {
            layer_name: load_array(_safe_relpath(fname, base))
            for layer_name, fname in entry["grads"].items()
        }
        gap_file = entry.get("gap_weights")
        gap = load_array(_safe_relpath(gap_file, base)) if gap_file else None
        classes.append(
            ClassRecord(
                class_id=int(entry["class_id"]),
                score=float(entry["score"]),
                grads=grads,
                gap_weights=gap,
            )
        )

    image_file = manifest.get("image_rgb")
    image_rgb = load_array(_safe_relpath(image_file, base)) if image_file else None

    bundle = FeatureBundle(
        image_id=image_id,
        image_hw=(image_hw[0], image_hw[1]),
        layers=layers,
        classes=classes,
        image_rgb=image_rgb,
        top1_correct=manifest.get("top1_correct"),
        top5_correct=manifest.get("top5_correct"),
        provenance=manifest.get("provenance", {}),
    )
    _validate(bundle)
    return bundle


def write_bundle(bundle: FeatureBundle, bundle_dir: str | os.PathLike, force: bool = False) -> None:
    """Write a validated bundle; refuses to overwrite unless ``force``."""
    _validate(bundle)
    base = Path(bundle_dir)
    manifest_path = base / MANIFEST_NAME
    if manifest_path.exists() and not force:
        raise BundleExists(f"{manifest_path} exists; pass force=True to overwrite")
    base.mkdir(parents=True, exist_ok=True)

    layer_entries = []
    for layer in bundle.layers:
        fname = f"features_{layer.name}.npy"
        save_array(base / fname, layer.features.astype(np.float32, copy=False))
        layer_entries.append({"name": layer.name, "file": fname, "shape": list(layer.features.shape)})

    class_entries = []
    for cls in bundle.classes:
        grad_files = {}
        for layer in bundle.layers:
            fname = f"grad_{cls.class_id}_{layer.name}.npy"
            save_array(base / fname, cls.grads[layer.name].astype(np.float32, copy=False))
            grad_files[layer.name] = fname
        entry = {"class_id": cls.class_id, "score": cls.score, "grads": grad_files}
        if cls.gap_weights is not None:
            fname = f"gapw_{cls.class_id}.npy"
            save_array(base / fname, cls.gap_weights.astype(np.float32, copy=False))
            entry["gap_weights"] = fname
        class_entries.append(entry)

    manifest = {
        "format": FORMAT_TAG,
        "image_id": bundle.image_id,
        "image_hw": list(bundle.image_hw),
        "layers": layer_entries,
        "classes": class_entries,
    }
    if bundle.image_rgb is not None:
        save_array(base / "image.npy", bundle.image_rgb.astype(np.float32, copy=False))
        manifest["image_rgb"] = "image.npy"
    if bundle.top1_correct is not None:
        manifest["top1_correct"] = bool(bundle.top1_correct)
    if bundle.top5_correct is not None:
        manifest["top5_correct"] = bool(bundle.top5_correct)
    if bundle.provenance:
        manifest["provenance"] = bundle.provenance

    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
