"""Exporter command line.

``export`` hooks a model and writes one bundle per image; ``reclassify``
scores original or occluded image tensors into the metrics JSON the drops
table consumes; ``convert-masks`` / ``convert-boxes`` turn VOC ground truth
into the engine's mask/box formats.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from .export import export_bundle
from .models import gap_head_weights, taps_by_module_name, vgg16_taps
from .preprocess import load_image_rgb01, normalize
from .converters import convert_box_dir, convert_mask_dir
from .reclassify import classify_images, items_from_bundles, items_from_occlusion_manifest


def _load_model(spec: str) -> torch.nn.Module:
    """Instantiate the backbone from a spec string.

    ``vgg16[:weights.pt]`` builds the torchvision VGG16;
    ``py:file.py:factory[:weights.pt]`` imports a user model file and calls
    the named zero-argument factory (the route for custom backbones);
    ``script:path.pt`` loads TorchScript (re-classification only: scripted
    modules cannot take the forward hooks export needs).
    """
    if spec.startswith("script:"):
        return torch.jit.load(spec.split(":", 1)[1], map_location="cpu")
    if spec.startswith("py:"):
        parts = spec.split(":")
        if len(parts) not in (3, 4):
            raise SystemExit(f"bad model spec {spec!r}; use py:file.py:factory[:weights.pt]")
        _, file, factory = parts[:3]
        import importlib.util

        module_spec = importlib.util.spec_from_file_location("user_backbone", file)
        module = importlib.util.module_from_spec(module_spec)
        module_spec.loader.exec_module(module)
        model = getattr(module, factory)()
        if len(parts) == 4:
            model.load_state_dict(torch.load(parts[3], map_location="cpu"))
        return model
    name, _, weights = spec.partition(":")
    if name == "vgg16":
        from torchvision.models import vgg16

        model = vgg16(weights=None)
        if weights:
            model.load_state_dict(torch.load(weights, map_location="cpu"))
        return model
    raise SystemExit(
        f"unknown model spec {spec!r}; use vgg16[:weights], py:file.py:factory, or script:path"
    )


def cmd_export(args) -> int:
    model = _load_model(args.model)
    if args.taps:
        taps = taps_by_module_name(model, args.taps.split(","))
    else:
        taps = vgg16_taps(model)
    gap_rows = gap_head_weights(model, args.gap_linear) if args.gap_linear else None

    with open(args.images, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    out_root = Path(args.out)
    for entry in entries:
        image_id = entry["image_id"]
        image01 = load_image_rgb01(entry["file"], size=args.size)
        if entry.get("classes"):
            class_ids = [int(c) for c in entry["classes"]]
        elif args.topk:
            model.eval()
            with torch.no_grad():
                logits = model(normalize(image01))
            class_ids = torch.argsort(logits[0], descending=True)[: args.topk].tolist()
        else:
            raise SystemExit(f"{image_id}: entry needs 'classes', or pass --topk")
        export_bundle(
            image01,
            model,
            taps,
            class_ids,
            out_root / image_id,
            image_id=image_id,
            gap_weight_rows=gap_rows,
            gt_class=entry.get("gt_class"),
            class_offset=args.class_offset,
            model_name=args.model,
            force=args.force,
        )
        print(f"exported {image_id} ({len(class_ids)} classes)")
    return 0


def cmd_reclassify(args) -> int:
    model = _load_model(args.model)
    if args.manifest:
        items = items_from_occlusion_manifest(args.manifest, class_offset=args.class_offset)
    else:
        items = items_from_bundles(args.bundles, class_offset=args.class_offset)
    report = classify_images(model, items)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if report["records"]:
        acc1, acc5, conf1, conf5 = report["records"][0]
        print(f"reclassify: top1 {acc1:.4f}, top5 {acc5:.4f}, conf1 {conf1:.4f}, conf5 {conf5:.4f}")
    return 0


def cmd_convert_masks(args) -> int:
    count = convert_mask_dir(args.png_dir, args.out)
    print(f"converted {count} masks")
    return 0


def cmd_convert_boxes(args) -> int:
    sidecar = convert_box_dir(args.xml_dir, args.out)
    print(f"converted boxes for {len(sidecar)} images")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bundle-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="write feature bundles for listed images")
    p.add_argument("--model", required=True, help="vgg16[:weights.pt] or script:model.pt")
    p.add_argument("--images", required=True,
                   help="JSON list of {image_id, file, classes, gt_class?}")
    p.add_argument("--taps", default=None,
                   help="comma list of module names, deepest first (default: vgg16 stages 4..1)")
    p.add_argument("--gap-linear", default=None,
                   help="name of the GAP-head Linear module to export weights from")
    p.add_argument("--topk", type=int, default=None,
                   help="derive class list from top-k predictions when an entry lists none")
    p.add_argument("--size", type=int, default=224,
                   help="square resize for localization protocols; keep-original not supported here")
    p.add_argument("--class-offset", type=int, default=0,
                   help="added to model class indices in the manifest (1 for 0-based label sets)")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("reclassify", help="score original or occluded image tensors")
    p.add_argument("--model", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--manifest", help="occluded_manifest.json from the occlude command")
    group.add_argument("--bundles", help="bundle directory (scores the original images)")
    p.add_argument("--class-offset", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_reclassify)

    p = sub.add_parser("convert-masks", help="palette PNG masks -> int32 .npy")
    p.add_argument("--png-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_convert_masks)

    p = sub.add_parser("convert-boxes", help="VOC XML annotations -> boxes JSON")
    p.add_argument("--xml-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_convert_boxes)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
