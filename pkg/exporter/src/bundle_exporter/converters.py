"""Ground-truth converters: palette PNG masks and VOC XML boxes."""
from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
from PIL import Image

VOC_CLASSES = (
    "aeroplane", "bicycle", "bird", "boat", "bottle", "bus", "car", "cat",
    "chair", "cow", "diningtable", "dog", "horse", "motorbike", "person",
    "pottedplant", "sheep", "sofa", "train", "tvmonitor",
)
# 1-based ids; 0 is background, 255 the ignore/boundary label
VOC_CLASS_IDS = {name: idx + 1 for idx, name in enumerate(VOC_CLASSES)}


def palette_png_to_npy(png_path, out_path) -> np.ndarray:
    """Palette-indexed PNG -> int32 .npy of the palette indices."""
    img = Image.open(png_path)
    if img.mode != "P":
        raise ValueError(f"{png_path}: expected a palette (P-mode) PNG, got {img.mode}")
    arr = np.asarray(img, dtype=np.int32)
    np.save(out_path, arr)
    return arr


def convert_mask_dir(png_dir, out_dir) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    for png in sorted(Path(png_dir).glob("*.png")):
        palette_png_to_npy(png, out / f"{png.stem}.npy")
        count += 1
    if count == 0:
        raise ValueError(f"no .png masks under {png_dir}")
    return count


def boxes_from_xml(xml_path, class_ids: dict[str, int] | None = None) -> list[list[int]]:
    """One annotation file -> [[x0, y0, x1, y1, class_id], ...].

    VOC bounding boxes are 1-based inclusive; converted here to 0-based
    inclusive-exclusive pixel coordinates.
    """
    class_ids = class_ids or VOC_CLASS_IDS
    root = ET.parse(xml_path).getroot()
    boxes = []
    for obj in root.iter("object"):
        name = obj.findtext("name")
        if name not in class_ids:
            raise KeyError(f"{xml_path}: unknown class {name!r}")
        bnd = obj.find("bndbox")
        x0 = int(float(bnd.findtext("xmin"))) - 1
        y0 = int(float(bnd.findtext("ymin"))) - 1
        x1 = int(float(bnd.findtext("xmax")))
        y1 = int(float(bnd.findtext("ymax")))
        boxes.append([max(x0, 0), max(y0, 0), x1, y1, class_ids[name]])
    return boxes


def convert_box_dir(xml_dir, out_path, class_ids: dict[str, int] | None = None) -> dict:
    sidecar = {}
    for xml in sorted(Path(xml_dir).glob("*.xml")):
        sidecar[xml.stem] = boxes_from_xml(xml, class_ids)
    if not sidecar:
        raise ValueError(f"no .xml annotations under {xml_dir}")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar
