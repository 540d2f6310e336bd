"""Region averaging of fused gradient maps, cascaded deep to shallow.

Replacing each pixel's value with the mean of its superpixel region spreads
class evidence across whole regions and suppresses isolated noise.  The
cascade runs the averaging once per clustered layer, deepest partition
first: deep regions separate object from background, shallow regions carve
boundaries.  Everything happens on one working grid (the shallowest
clustered layer's resolution); label grids are nearest-upsampled to it so no
labels are invented, the fused map is bilinearly upsampled.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import FeatureBundle
from .clustering import LabelMap, cluster_layer
from .errors import ConfigError, EmptyCascade, ShapeMismatch, UnknownClass, UnknownLayer
from .ops import bilinear_resize, minmax_normalize, nearest_resize_labels
from .saliency import ActivationMap, SimStack, compute_sim, fuse_sims


@dataclass
class SipConfig:
    """Pipeline configuration.

    ``sim_layers``/``sip_layers`` are layer names ordered deepest to
    shallowest, matching the bundle order.  ``None`` picks the defaults: all
    but the shallowest layer contributes a gradient map, all but the deepest
    layer contributes a superpixel partition.
    """

    sip_layers: list[str] | None = None
    sim_layers: list[str] | None = None
    centroids: int = 10
    seed: int = 0
    tanh_shallow: bool = True
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-5
    kmeans_restarts: int = 1
    spherical: bool = False
    provenance: dict = field(default_factory=dict)


def _region_means(values: np.ndarray, labels: np.ndarray) -> np.ndarray:
    flat_labels = labels.reshape(-1)
    flat = values.reshape(-1).astype(np.float64)
    counts = np.bincount(flat_labels)
    sums = np.bincount(flat_labels, weights=flat)
    means = np.zeros_like(sums)
    nonempty = counts > 0
    means[nonempty] = sums[nonempty] / counts[nonempty]
    return means[flat_labels].reshape(values.shape).astype(np.float32)


def propagate_once(s: ActivationMap, labels: LabelMap) -> ActivationMap:
    """Replace every pixel with its region's arithmetic mean.

    The output is piecewise constant on the label partition and preserves
    each region's mean; applying it twice with the same labels is a no-op.
    """
    if s.data.shape != labels.labels.shape:
        raise ShapeMismatch(
            f"map {s.data.shape} vs labels {labels.labels.shape}; resize labels first"
        )
    data = _region_means(s.data, labels.labels)
    return ActivationMap(class_id=s.class_id, data=data, resolution=s.resolution)


def propagate_cascade(s_fused: ActivationMap, labelmaps: list[LabelMap]) -> ActivationMap:
    """Apply region averaging once per label map, deepest partition first."""
    if not labelmaps:
        raise EmptyCascade("cascade needs at least one label map")
    h, w = s_fused.hw
    out = s_fused
    for lm in labelmaps:
        resized = LabelMap(
            layer_name=lm.layer_name,
            labels=nearest_resize_labels(lm.labels, h, w),
            m=lm.m,
        )
        out = propagate_once(out, resized)
    return out


def _resolve_subset(bundle: FeatureBundle, requested: list[str] | None, drop: str) -> list[str]:
    names = bundle.layer_names()
    if requested is None:
        keep = names[:-1] if drop == "shallowest" else names[1:]
        return keep if keep else list(names)
    for name in requested:
        if name not in names:
            raise UnknownLayer(f"layer {name!r} not in bundle layers {names}")
    positions = [names.index(name) for name in requested]
    if positions != sorted(positions) or len(set(positions)) != len(positions):
        raise ConfigError(
            f"layer subset {requested} must follow the bundle's deep->shallow order {names}"
        )
    return list(requested)


def _layer_seed(base_seed: int, layer_index: int) -> int:
    return int(np.random.SeedSequence([base_seed, layer_index]).generate_state(1)[0])


def compute_sim_stack(
    bundle: FeatureBundle,
    class_id: int,
    cfg: SipConfig | None = None,
    working_hw: tuple[int, int] | None = None,
) -> SimStack:
    """Per-layer gradient maps for one class plus their fused working map."""
    cfg = cfg or SipConfig()
    record = bundle.class_record(class_id)
    if record is None:
        raise UnknownClass(f"class {class_id} not in bundle {bundle.image_id!r}")
    sim_names = _resolve_subset(bundle, cfg.sim_layers, drop="shallowest")
    per_layer = [compute_sim(record.grads[name], class_id) for name in sim_names]
    if working_hw is None:
        working_hw = bundle.layer(sim_names[-1]).hw
    fused = fuse_sims(per_layer, working_hw, tanh_shallow=cfg.tanh_shallow)
    return SimStack(per_layer=per_layer, fused=fused)


def cluster_labelmaps(bundle: FeatureBundle, cfg: SipConfig | None = None) -> list[LabelMap]:
    """Superpixel partitions for the configured layers, deepest first.

    Class-independent, so one result serves every class of the bundle.  The
    per-layer seed is derived from the bundle position of the layer, keeping
    a layer's partition stable across subset ablations.
    """
    cfg = cfg or SipConfig()
    sip_names = _resolve_subset(bundle, cfg.sip_layers, drop="deepest")
    names = bundle.layer_names()
    return [
        cluster_layer(
            bundle.layer(name),
            cfg.centroids,
            seed=_layer_seed(cfg.seed, names.index(name)),
            max_iter=cfg.kmeans_max_iter,
            tol=cfg.kmeans_tol,
            restarts=cfg.kmeans_restarts,
            spherical=cfg.spherical,
        )
        for name in sip_names
    ]


def finalize_map(data: np.ndarray, image_hw: tuple[int, int], class_id: int) -> ActivationMap:
    """Bilinear-resize a working map to image size and normalize onto [0, 1]."""
    resized = bilinear_resize(data, image_hw[0], image_hw[1])
    return ActivationMap(class_id=class_id, data=minmax_normalize(resized), resolution="image")


def region_cam(
    bundle: FeatureBundle,
    class_id: int,
    cfg: SipConfig | None = None,
    labelmaps: list[LabelMap] | None = None,
) -> ActivationMap:
    """Full region-averaged activation map for one class, in [0,1] at image size.

    Pipeline: per-layer gradient maps, fusion onto the working grid, region
    averaging over each configured partition (deepest first), bilinear resize
    to the image, min-max normalization.  Precomputed ``labelmaps`` (from
    :func:`cluster_labelmaps`) can be passed to share clustering across
    classes; an empty SIP layer list degenerates to the fused map alone.
    """
    cfg = cfg or SipConfig()
    if labelmaps is None:
        labelmaps = cluster_labelmaps(bundle, cfg)
    if labelmaps:
        working_hw = labelmaps[-1].hw
    else:
        sim_names = _resolve_subset(bundle, cfg.sim_layers, drop="shallowest")
        working_hw = bundle.layer(sim_names[-1]).hw
    stack = compute_sim_stack(bundle, class_id, cfg, working_hw=working_hw)
    out = propagate_cascade(stack.fused, labelmaps) if labelmaps else stack.fused
    return finalize_map(out.data, bundle.image_hw, class_id)


def sim_only_map(bundle: FeatureBundle, class_id: int, cfg: SipConfig | None = None) -> ActivationMap:
    """Fused gradient map without region averaging, in [0,1] at image size."""
    cfg = cfg or SipConfig()
    stack = compute_sim_stack(bundle, class_id, cfg)
    return finalize_map(stack.fused.data, bundle.image_hw, class_id)


def region_cam_all(
    bundle: FeatureBundle, cfg: SipConfig | None = None
) -> dict[int, ActivationMap]:
    """Region-averaged maps for every class in the bundle, clustering once."""
    cfg = cfg or SipConfig()
    labelmaps = cluster_labelmaps(bundle, cfg)
    return {
        cid: region_cam(bundle, cid, cfg, labelmaps=labelmaps)
        for cid in bundle.class_ids()
    }
