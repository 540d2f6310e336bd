"""Command-line pipeline driver.

Subcommands mirror the evaluation protocols: ``map`` (activation maps for
one bundle), ``seed`` (argmax seed masks), ``sweep`` (mIoU over a threshold
grid), ``locate`` (box localization and its sweep), ``occlude`` /
``occlude-report`` (occlusion images and before/after drops), ``ablate``
(layer-subset and centroid-count grids).

Exit codes: 0 on success, 1 when an ``--assert`` bound fails, 2 on input
errors.  Commands are deterministic for a fixed ``--seed`` regardless of
``--threads``.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .bundle import FeatureBundle, read_bundle
from .errors import ConfigError, RegionCamError
from .localize import BBox, LocCase, loc_scores, loc_sweep, locate_case
from .npyio import load_array, save_array
from .occlusion import DEFAULT_FILL, apply_occlusion, occlusion_mask, occlusion_report
from .propagation import SipConfig, finalize_map, region_cam_all, sim_only_map
from .report import (
    save_json,
    write_ablation_report,
    write_loc_report,
    write_occlusion_report,
    write_sweep_report,
)
from .saliency import ActivationMap, baseline_cam, baseline_gradcam
from .seeds import (
    ConfusionMatrix,
    default_grid,
    make_seed,
    summarize_sweep,
    sweep_confusions,
)
from .viz import heatmap_rgb, image_preview_rgb, seed_rgb, write_ppm

METHODS = ("region_cam", "cam", "gradcam", "sim_only")


# --- argument plumbing -------------------------------------------------------

def _parse_layers(value: str | None) -> list[str] | None:
    if value is None:
        return None
    value = value.strip()
    if not value:
        return []
    return [v.strip() for v in value.split(",") if v.strip()]


def parse_grid(spec: str) -> list[float]:
    """Parse ``start:step:end`` (inclusive) or a comma list of thresholds."""
    spec = spec.strip()
    if ":" in spec:
        try:
            start, step, end = (float(v) for v in spec.split(":"))
        except ValueError as exc:
            raise ConfigError(f"bad grid spec {spec!r}") from exc
        if step <= 0 or end < start:
            raise ConfigError(f"bad grid spec {spec!r}")
        count = int(round((end - start) / step)) + 1
        return [round(start + i * step, 10) for i in range(count)]
    try:
        return [float(v) for v in spec.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad grid spec {spec!r}") from exc


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return cfg


def _pick(flag_value, config: dict, key: str, default):
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _sip_config(args, config: dict) -> SipConfig:
    layers = _parse_layers(args.layers)
    if layers is None and "layers" in config:
        layers = list(config["layers"])
    sim_layers = _parse_layers(args.sim_layers)
    if sim_layers is None and "sim_layers" in config:
        sim_layers = list(config["sim_layers"])
    tanh_shallow = False if args.no_tanh else bool(config.get("tanh_shallow", True))
    return SipConfig(
        sip_layers=layers,
        sim_layers=sim_layers,
        centroids=int(_pick(args.centroids, config, "centroids", 10)),
        seed=int(_pick(args.seed, config, "seed", 0)),
        tanh_shallow=tanh_shallow,
        kmeans_restarts=int(_pick(args.restarts, config, "restarts", 1)),
    )


def _find_bundles(path: str) -> list[Path]:
    base = Path(path)
    if (base / "manifest.json").is_file():
        return [base]
    if not base.is_dir():
        raise ConfigError(f"no such bundle directory: {base}")
    found = sorted(p.parent for p in base.glob("*/manifest.json"))
    if not found:
        raise ConfigError(f"no bundles under {base}")
    return found


def _pool_map(fn, items, threads: int) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def compute_maps(bundle: FeatureBundle, method: str, cfg: SipConfig) -> dict[int, ActivationMap]:
    """Per-class [0,1] maps at image resolution for any supported method."""
    if method == "region_cam":
        return region_cam_all(bundle, cfg)
    if method == "sim_only":
        return {cid: sim_only_map(bundle, cid, cfg) for cid in bundle.class_ids()}
    deepest = bundle.layers[0]
    out = {}
    for rec in bundle.classes:
        if method == "cam":
            amap = baseline_cam(deepest.features, rec.gap_weights, rec.class_id)
        elif method == "gradcam":
            amap = baseline_gradcam(deepest.features, rec.grads[deepest.name], rec.class_id)
        else:
            raise ConfigError(f"unknown method {method!r}; pick one of {METHODS}")
        out[rec.class_id] = finalize_map(amap.data, bundle.image_hw, rec.class_id)
    return out


def _load_gt(gt_dir: str, image_id: str) -> np.ndarray:
    path = Path(gt_dir) / f"{image_id}.npy"
    if not path.is_file():
        raise ConfigError(f"missing ground-truth mask: {path}")
    return load_array(path)


def _infer_num_classes(bundles, gt_arrays, ignore_label: int) -> int:
    top = 0
    for b in bundles:
        ids = b.class_ids()
        if ids:
            top = max(top, max(ids))
    for gt in gt_arrays:
        vals = gt[gt != ignore_label]
        if vals.size:
            top = max(top, int(vals.max()))
    if top < 1:
        raise ConfigError("cannot infer class count; pass --num-classes")
    return top


_ASSERT_RE = re.compile(r"^\s*([A-Za-z0-9_.]+)\s*(>=|<=|==|>|<)\s*([-+0-9.eE]+)\s*$")


def check_assertions(assertions: list[str], values: dict) -> list[str]:
    """Evaluate ``key OP number`` bounds against a flat report dict."""
    failures = []
    for spec in assertions or []:
        match = _ASSERT_RE.match(spec)
        if not match:
            raise ConfigError(f"bad --assert expression {spec!r}")
        key, op, bound_s = match.groups()
        if key not in values:
            raise ConfigError(f"--assert key {key!r} not in report keys {sorted(values)}")
        try:
            actual = float(values[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"--assert key {key!r} is not a scalar metric") from exc
        bound = float(bound_s)
        ok = {
            ">=": actual >= bound,
            "<=": actual <= bound,
            ">": actual > bound,
            "<": actual < bound,
            "==": actual == bound,
        }[op]
        if not ok:
            failures.append(f"assertion failed: {key}={actual:.6g} not {op} {bound:.6g}")
    return failures


# --- subcommands -------------------------------------------------------------

def cmd_map(args) -> int:
    config = _load_config(args.config)
    cfg = _sip_config(args, config)
    method = _pick(args.method, config, "method", "region_cam")
    bundle = read_bundle(args.bundle_dir)
    maps = compute_maps(bundle, method, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for cid in sorted(maps):
        save_array(out / f"map_{cid}.npy", maps[cid].data)
        write_ppm(out / f"heatmap_{cid}.ppm", heatmap_rgb(maps[cid].data))
    save_json(
        out / "maps.json",
        {
            "image_id": bundle.image_id,
            "method": method,
            "classes": sorted(maps),
            "image_hw": list(bundle.image_hw),
            "seed": cfg.seed,
            "centroids": cfg.centroids,
        },
    )
    return 0


def _seed_one(bundle_dir: Path, method: str, cfg: SipConfig, bg: float):
    bundle = read_bundle(bundle_dir)
    maps = compute_maps(bundle, method, cfg)
    mask = make_seed(maps, bg)
    return bundle.image_id, mask


def cmd_seed(args) -> int:
    config = _load_config(args.config)
    cfg = _sip_config(args, config)
    method = _pick(args.method, config, "method", "region_cam")
    bg = float(_pick(args.bg, config, "bg", 0.3))
    bundles = _find_bundles(args.bundles)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = _pool_map(lambda d: _seed_one(d, method, cfg, bg), bundles, args.threads)
    for image_id, mask in results:
        save_array(out / f"seed_{image_id}.npy", mask.labels)
        write_ppm(out / f"seed_{image_id}.ppm", seed_rgb(mask.labels))
    save_json(
        out / "seeds.json",
        {"bg_threshold": bg, "method": method, "images": [r[0] for r in results]},
    )
    return 0


def _sweep_totals(args, config, cfg, method, grid, ignore_label):
    bundle_dirs = _find_bundles(args.bundles)
    loaded = [read_bundle(d) for d in bundle_dirs]
    gts = [_load_gt(args.gt_dir, b.image_id) for b in loaded]
    num_classes = _pick(args.num_classes, config, "num_classes", None)
    if num_classes is None:
        num_classes = _infer_num_classes(loaded, gts, ignore_label)
    num_classes = int(num_classes)

    def one(pair):
        bundle, gt = pair
        maps = compute_maps(bundle, method, cfg)
        return sweep_confusions(maps, gt, grid, num_classes, ignore_label)

    per_image = _pool_map(one, zip(loaded, gts), args.threads)
    totals = [ConfusionMatrix.empty(num_classes) for _ in grid]
    for image_cms in per_image:
        totals = [a.merge(b) for a, b in zip(totals, image_cms)]
    return totals, num_classes


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    cfg = _sip_config(args, config)
    method = _pick(args.method, config, "method", "region_cam")
    ignore_label = int(_pick(args.ignore_label, config, "ignore_label", 255))
    grid = parse_grid(args.bg_grid) if args.bg_grid else list(config.get("bg_grid") or default_grid())
    totals, num_classes = _sweep_totals(args, config, cfg, method, grid, ignore_label)
    report = summarize_sweep(grid, totals, num_classes)
    write_sweep_report(report, args.out, figures=not args.no_figures)
    print(
        f"sweep: {len(grid)} thresholds, best mIoU {report.best_miou:.4f} "
        f"@ {report.best_threshold:.2f}, grid mean {report.mean_miou:.4f}"
    )
    failures = check_assertions(args.assertions, report.as_dict() | {"num_thresholds": len(grid)})
    for line in failures:
        print(line, file=sys.stderr)
    return 1 if failures else 0


def _load_gt_boxes(path: str) -> dict[str, list[tuple[BBox, int]]]:
    box_path = Path(path)
    if not box_path.is_file():
        raise ConfigError(f"missing ground-truth boxes file: {box_path}")
    with open(box_path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    out = {}
    for image_id, entries in raw.items():
        boxes = []
        for entry in entries:
            x0, y0, x1, y1, cid = entry
            boxes.append((BBox(int(x0), int(y0), int(x1), int(y1)), int(cid)))
        out[image_id] = boxes
    return out


def _loc_cases(args, config, cfg, method) -> list[LocCase]:
    gt_boxes = _load_gt_boxes(args.gt_boxes)
    bundles = [read_bundle(d) for d in _find_bundles(args.bundles)]

    def one(bundle: FeatureBundle) -> LocCase:
        if not bundle.classes:
            raise ConfigError(f"bundle {bundle.image_id!r} has no classes")
        target = bundle.classes[0].class_id
        maps = compute_maps(bundle, method, cfg)
        if bundle.image_id not in gt_boxes:
            raise ConfigError(f"no ground-truth boxes for image {bundle.image_id!r}")
        boxes = [box for box, cid in gt_boxes[bundle.image_id] if cid == target]
        if not boxes:
            raise ConfigError(
                f"no ground-truth boxes of class {target} for image {bundle.image_id!r}"
            )
        if bundle.top1_correct is None or bundle.top5_correct is None:
            raise ConfigError(
                f"bundle {bundle.image_id!r} lacks top1/top5 flags; re-export with gt_class"
            )
        return LocCase(
            image_id=bundle.image_id,
            map=maps[target],
            gt_boxes=boxes,
            top1_correct=bool(bundle.top1_correct),
            top5_correct=bool(bundle.top5_correct),
        )

    return _pool_map(one, bundles, args.threads)


def cmd_locate(args) -> int:
    config = _load_config(args.config)
    cfg = _sip_config(args, config)
    method = _pick(args.method, config, "method", "region_cam")
    frac = float(_pick(args.frac, config, "frac", 0.35))
    cases = _loc_cases(args, config, cfg, method)
    records = [locate_case(c, frac) for c in cases]
    loc1, loc5 = loc_scores(records)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "frac": frac,
        "loc1": loc1,
        "loc5": loc5,
        "records": [
            {
                "image_id": r.image_id,
                "pred_box": [r.pred_box.x0, r.pred_box.y0, r.pred_box.x1, r.pred_box.y1],
                "top1_correct": r.top1_correct,
                "top5_correct": r.top5_correct,
            }
            for r in records
        ],
    }
    save_json(out / "localization.json", payload)
    print(f"locate: frac {frac:.2f}, loc1 {loc1:.4f}, loc5 {loc5:.4f} over {len(records)} images")
    flat = {"loc1": loc1, "loc5": loc5}
    if args.grid:
        sweep = loc_sweep(cases, parse_grid(args.grid))
        write_loc_report(sweep, out, figures=not args.no_figures)
        flat |= {"ave_loc1": sweep.ave_loc1, "ave_loc5": sweep.ave_loc5}
    failures = check_assertions(args.assertions, flat)
    for line in failures:
        print(line, file=sys.stderr)
    return 1 if failures else 0


def cmd_occlude(args) -> int:
    config = _load_config(args.config)
    cfg = _sip_config(args, config)
    method = _pick(args.method, config, "method", "region_cam")
    frac = float(_pick(args.frac, config, "frac", 0.85))
    fill = tuple(float(v) for v in args.fill.split(",")) if args.fill else tuple(
        config.get("fill", DEFAULT_FILL)
    )
    if len(fill) != 3:
        raise ConfigError(f"fill must be r,g,b in [0,1], got {fill}")
    bundles = [read_bundle(d) for d in _find_bundles(args.bundles)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def one(bundle: FeatureBundle):
        if bundle.image_rgb is None:
            raise ConfigError(f"bundle {bundle.image_id!r} has no image tensor; re-export with it")
        if not bundle.classes:
            raise ConfigError(f"bundle {bundle.image_id!r} has no classes")
        target = bundle.classes[0].class_id
        maps = compute_maps(bundle, method, cfg)
        mask = occlusion_mask(maps[target], frac)
        occluded = apply_occlusion(bundle.image_rgb, mask, fill)
        return bundle.image_id, target, occluded

    results = _pool_map(one, bundles, args.threads)
    entries = []
    for image_id, target, occluded in results:
        save_array(out / f"occluded_{image_id}.npy", occluded)
        write_ppm(out / f"occluded_{image_id}.ppm", image_preview_rgb(occluded))
        entries.append(
            {"image_id": image_id, "class_id": target, "file": f"occluded_{image_id}.npy"}
        )
    save_json(out / "occluded_manifest.json", {"frac": frac, "fill": list(fill), "images": entries})
    print(f"occlude: wrote {len(entries)} occluded images at frac {frac:.2f}")
    return 0


def _load_metric_records(path: str) -> list:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"missing metrics file: {p}")
    with open(p, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return raw["records"] if isinstance(raw, dict) and "records" in raw else raw


def cmd_occlude_report(args) -> int:
    before = _load_metric_records(args.before)
    after = _load_metric_records(args.after)
    report = occlusion_report(before, after)
    write_occlusion_report(report, args.out, figures=not args.no_figures)
    if report.mean:
        drops = ", ".join(f"{k} drop {v['drop']:.4f}" for k, v in report.mean.items())
        print(f"occlude-report: {drops}")
    failures = check_assertions(
        args.assertions,
        {f"{k}_drop": v["drop"] for k, v in report.mean.items()} if report.mean else {},
    )
    for line in failures:
        print(line, file=sys.stderr)
    return 1 if failures else 0


def cmd_ablate(args) -> int:
    config = _load_config(args.config)
    base_cfg = _sip_config(args, config)
    method = _pick(args.method, config, "method", "region_cam")
    ignore_label = int(_pick(args.ignore_label, config, "ignore_label", 255))
    grid = parse_grid(args.bg_grid) if args.bg_grid else list(config.get("bg_grid") or default_grid())
    subsets = [
        _parse_layers(part) or []
        for part in (args.layer_subsets.split(";") if args.layer_subsets else [""])
    ]
    if args.layer_subsets is None:
        subsets = [None]
    centroid_grid = (
        [int(v) for v in args.centroid_grid.split(",")] if args.centroid_grid else [base_cfg.centroids]
    )
    rows = []
    for subset in subsets:
        for m in centroid_grid:
            cfg = SipConfig(
                sip_layers=subset,
                sim_layers=base_cfg.sim_layers,
                centroids=m,
                seed=base_cfg.seed,
                tanh_shallow=base_cfg.tanh_shallow,
                kmeans_restarts=base_cfg.kmeans_restarts,
            )
            totals, num_classes = _sweep_totals(args, config, cfg, method, grid, ignore_label)
            report = summarize_sweep(grid, totals, num_classes)
            label_layers = subset if subset is not None else ["<default>"]
            rows.append(
                {
                    "label": f"{'+'.join(label_layers) or 'none'}/m={m}",
                    "layers": label_layers,
                    "centroids": m,
                    "best_threshold": report.best_threshold,
                    "best_miou": report.best_miou,
                    "mean_miou": report.mean_miou,
                }
            )
            print(f"ablate: {rows[-1]['label']}: best mIoU {report.best_miou:.4f}")
    write_ablation_report(rows, args.out, figures=not args.no_figures)
    return 0


# --- parser ------------------------------------------------------------------

def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=METHODS, default=None)
    p.add_argument("--layers", default=None,
                   help="comma-separated superpixel layers, deep to shallow; empty for none")
    p.add_argument("--sim-layers", default=None,
                   help="comma-separated gradient-map layers, deep to shallow")
    p.add_argument("--centroids", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--no-tanh", action="store_true",
                   help="disable tanh damping of shallow gradient maps")
    p.add_argument("--config", default=None, help="JSON config file; flags override it")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--assert", dest="assertions", action="append", default=[],
                   metavar="KEY{>=,<=,>,<,==}VALUE",
                   help="fail with exit 1 unless the report satisfies the bound")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regioncam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map", help="write per-class activation maps for one bundle")
    p.add_argument("--bundle-dir", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(fn=cmd_map)

    p = sub.add_parser("seed", help="write argmax seed masks for a directory of bundles")
    p.add_argument("--bundles", required=True)
    p.add_argument("--bg", type=float, default=None, help="background threshold in [0,1]")
    _add_pipeline_flags(p)
    p.set_defaults(fn=cmd_seed)

    p = sub.add_parser("sweep", help="mIoU over a background-threshold grid")
    p.add_argument("--bundles", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--bg-grid", default=None, help="start:step:end or comma list (default 0:0.01:1)")
    p.add_argument("--num-classes", type=int, default=None)
    p.add_argument("--ignore-label", type=int, default=None)
    _add_pipeline_flags(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("locate", help="box localization at a threshold, optionally swept")
    p.add_argument("--bundles", required=True)
    p.add_argument("--gt-boxes", required=True, help="JSON: image_id -> [[x0,y0,x1,y1,class_id],...]")
    p.add_argument("--frac", type=float, default=None, help="mask threshold (default 0.35)")
    p.add_argument("--grid", default=None, help="also sweep thresholds, e.g. 0:0.01:1")
    _add_pipeline_flags(p)
    p.set_defaults(fn=cmd_locate)

    p = sub.add_parser("occlude", help="write occluded image tensors for re-classification")
    p.add_argument("--bundles", required=True)
    p.add_argument("--frac", type=float, default=None, help="mask threshold (default 0.85)")
    p.add_argument("--fill", default=None, help="occlusion color r,g,b in [0,1]")
    _add_pipeline_flags(p)
    p.set_defaults(fn=cmd_occlude)

    p = sub.add_parser("occlude-report", help="before/after drops from re-classification metrics")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--assert", dest="assertions", action="append", default=[],
                   metavar="KEY{>=,<=,>,<,==}VALUE")
    p.set_defaults(fn=cmd_occlude_report)

    p = sub.add_parser("ablate", help="grid over superpixel layer subsets and centroid counts")
    p.add_argument("--bundles", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--layer-subsets", default=None,
                   help="semicolon-separated comma lists, e.g. 'b4,b3,b2,b1;b4'")
    p.add_argument("--centroid-grid", default=None, help="comma list, e.g. '5,10,15'")
    p.add_argument("--bg-grid", default=None)
    p.add_argument("--num-classes", type=int, default=None)
    p.add_argument("--ignore-label", type=int, default=None)
    _add_pipeline_flags(p)
    p.set_defaults(fn=cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except RegionCamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
