"""PyTorch-side exporter for the feature-bundle interchange format."""

from .converters import VOC_CLASS_IDS, boxes_from_xml, convert_box_dir, convert_mask_dir, palette_png_to_npy
from .export import LayerTap, capture, export_bundle
from .models import gap_head_weights, taps_by_module_name, vgg16_taps
from .preprocess import MEAN, STD, load_image_rgb01, normalize
from .reclassify import classify_images, items_from_bundles, items_from_occlusion_manifest

__all__ = [
    "LayerTap",
    "MEAN",
    "STD",
    "VOC_CLASS_IDS",
    "boxes_from_xml",
    "capture",
    "classify_images",
    "convert_box_dir",
    "convert_mask_dir",
    "export_bundle",
    "gap_head_weights",
    "items_from_bundles",
    "items_from_occlusion_manifest",
    "load_image_rgb01",
    "normalize",
    "palette_png_to_npy",
    "taps_by_module_name",
    "vgg16_taps",
]
