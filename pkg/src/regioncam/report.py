"""Report serialization (JSON/CSV) and the figures rendered alongside them."""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .localize import LocSweepReport
from .occlusion import METRICS, OcclusionReport
from .seeds import SweepReport


def _sanitize(obj):
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    return obj


def save_json(path: str | os.PathLike, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_sanitize(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_csv(path: str | os.PathLike, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# --- sweep reports -----------------------------------------------------------

def write_sweep_report(report: SweepReport, out_dir: str | os.PathLike, figures: bool = True) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_json(out / "sweep.json", report.as_dict())
    save_csv(
        out / "sweep.csv",
        ["threshold", "miou"],
        [[t, m] for t, m in zip(report.thresholds, report.miou)],
    )
    save_csv(
        out / "per_class_at_best.csv",
        ["class_id", "iou"],
        [[cid, "" if math.isnan(v) else v] for cid, v in enumerate(report.per_class_at_best)],
    )
    if figures:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(report.thresholds, report.miou, lw=1.5)
        ax.axvline(report.best_threshold, ls="--", c="gray", lw=0.8)
        ax.set_xlabel("background threshold")
        ax.set_ylabel("mIoU")
        ax.set_title(
            f"best {report.best_miou:.4f} @ {report.best_threshold:.2f}, "
            f"grid mean {report.mean_miou:.4f}"
        )
        fig.tight_layout()
        fig.savefig(out / "sweep.png", dpi=150)
        plt.close(fig)


def write_loc_report(report: LocSweepReport, out_dir: str | os.PathLike, figures: bool = True) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_json(out / "loc_sweep.json", report.as_dict())
    save_csv(
        out / "loc_sweep.csv",
        ["threshold", "loc1", "loc5"],
        [[t, a, b] for t, a, b in zip(report.thresholds, report.loc1, report.loc5)],
    )
    if figures:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(report.thresholds, report.loc1, lw=1.5, label="loc1")
        ax.plot(report.thresholds, report.loc5, lw=1.5, label="loc5")
        ax.set_xlabel("mask threshold (fraction of max)")
        ax.set_ylabel("localization accuracy")
        ax.set_title(f"avg loc1 {report.ave_loc1:.4f}, avg loc5 {report.ave_loc5:.4f}")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "loc_sweep.png", dpi=150)
        plt.close(fig)


def write_ablation_report(rows: list[dict], out_dir: str | os.PathLike, figures: bool = True) -> None:
    """Rows: {:label, :layers, :centroids, :best_threshold, :best_miou, :mean_miou}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_json(out / "ablation.json", {"rows": rows})
    save_csv(
        out / "ablation.csv",
        ["label", "layers", "centroids", "best_threshold", "best_miou", "mean_miou"],
        [
            [r["label"], "|".join(r["layers"]), r["centroids"], r["best_threshold"],
             r["best_miou"], r["mean_miou"]]
            for r in rows
        ],
    )
    if figures and rows:
        fig, ax = plt.subplots(figsize=(max(6, 0.9 * len(rows)), 4))
        labels = [r["label"] for r in rows]
        ax.bar(range(len(rows)), [r["best_miou"] for r in rows], color="steelblue")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
        ax.set_ylabel("best mIoU")
        fig.tight_layout()
        fig.savefig(out / "ablation.png", dpi=150)
        plt.close(fig)


def write_occlusion_report(report: OcclusionReport, out_dir: str | os.PathLike, figures: bool = True) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_json(out / "occlusion_report.json", report.as_dict())
    rows = []
    for idx, row in enumerate(report.rows):
        for metric in METRICS:
            cell = row[metric]
            rows.append([idx, metric, cell["before"], cell["after"], cell["drop"]])
    save_csv(out / "occlusion_report.csv", ["row", "metric", "before", "after", "drop"], rows)
    if figures and report.mean:
        fig, ax = plt.subplots(figsize=(6, 4))
        x = range(len(METRICS))
        before = [report.mean[m]["before"] for m in METRICS]
        after = [report.mean[m]["after"] for m in METRICS]
        ax.bar([i - 0.2 for i in x], before, width=0.4, label="before")
        ax.bar([i + 0.2 for i in x], after, width=0.4, label="after")
        ax.set_xticks(list(x))
        ax.set_xticklabels(METRICS, rotation=20, ha="right", fontsize=8)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "occlusion_report.png", dpi=150)
        plt.close(fig)
