"""Region-level class activation maps from CNN features and gradients.

The pipeline turns a per-image feature bundle (per-layer feature maps plus
per-class score gradients) into class activation maps whose values are
averaged over superpixel regions clustered from the network's own features,
then evaluates them for segmentation seeding, object localization, and
occlusion analysis.
"""

from .bundle import ClassRecord, FeatureBundle, LayerRecord, read_bundle, write_bundle
from .clustering import KMeansResult, LabelMap, cluster_layer, kmeans_cosine
from .errors import RegionCamError
from .localize import (
    BBox,
    LocCase,
    LocRecord,
    LocSweepReport,
    box_iou,
    largest_component_bbox,
    loc_scores,
    loc_sweep,
    locate_case,
    threshold_mask,
)
from .npyio import load_array, save_array
from .occlusion import OcclusionReport, apply_occlusion, occlusion_mask, occlusion_report
from .ops import bilinear_resize, minmax_normalize, nearest_resize_labels
from .propagation import (
    SipConfig,
    cluster_labelmaps,
    compute_sim_stack,
    finalize_map,
    propagate_cascade,
    propagate_once,
    region_cam,
    region_cam_all,
    sim_only_map,
)
from .saliency import (
    ActivationMap,
    SimStack,
    baseline_cam,
    baseline_gradcam,
    compute_sim,
    fuse_sims,
)
from .seeds import (
    ConfusionMatrix,
    SeedMask,
    SweepReport,
    default_grid,
    make_seed,
    miou,
    sweep_thresholds,
    update_confusion,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationMap",
    "BBox",
    "ClassRecord",
    "ConfusionMatrix",
    "FeatureBundle",
    "KMeansResult",
    "LabelMap",
    "LayerRecord",
    "LocCase",
    "LocRecord",
    "LocSweepReport",
    "OcclusionReport",
    "RegionCamError",
    "SeedMask",
    "SimStack",
    "SipConfig",
    "SweepReport",
    "apply_occlusion",
    "baseline_cam",
    "baseline_gradcam",
    "bilinear_resize",
    "box_iou",
    "cluster_labelmaps",
    "cluster_layer",
    "compute_sim",
    "compute_sim_stack",
    "default_grid",
    "finalize_map",
    "fuse_sims",
    "kmeans_cosine",
    "largest_component_bbox",
    "load_array",
    "loc_scores",
    "loc_sweep",
    "locate_case",
    "make_seed",
    "minmax_normalize",
    "miou",
    "nearest_resize_labels",
    "occlusion_mask",
    "occlusion_report",
    "propagate_cascade",
    "propagate_once",
    "read_bundle",
    "region_cam",
    "region_cam_all",
    "save_array",
    "sim_only_map",
    "sweep_thresholds",
    "threshold_mask",
    "update_confusion",
    "write_bundle",
]
