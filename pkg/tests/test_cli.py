"""CLI contract: subcommands, exit codes, determinism, file outputs."""
import json

import numpy as np
import pytest

from regioncam import load_array, write_bundle
from regioncam.cli import check_assertions, main, parse_grid
from regioncam.errors import ConfigError
from synthbundles import make_planted_bundle, planted_gt, planted_mask


@pytest.fixture
def bundle_dir(tmp_path):
    bundle, _ = make_planted_bundle(image_id="one", with_gap=True)
    path = tmp_path / "bundle_one"
    write_bundle(bundle, path)
    return path


@pytest.fixture
def dataset(tmp_path):
    """Three bundles plus ground-truth masks and boxes."""
    root = tmp_path / "bundles"
    gt_dir = tmp_path / "gt"
    gt_dir.mkdir()
    boxes = {}
    for i in range(3):
        bundle, mask = make_planted_bundle(image_id=f"img{i}", seed=20 + i)
        write_bundle(bundle, root / f"img{i}")
        np.save(gt_dir / f"img{i}.npy", planted_gt(mask))
        rows, cols = np.nonzero(mask)
        boxes[f"img{i}"] = [
            [int(cols.min()), int(rows.min()), int(cols.max()) + 1, int(rows.max()) + 1, 1]
        ]
    boxes_path = tmp_path / "boxes.json"
    boxes_path.write_text(json.dumps(boxes))
    return root, gt_dir, boxes_path


def read_tree(path):
    return {
        p.relative_to(path).as_posix(): p.read_bytes()
        for p in sorted(path.rglob("*"))
        if p.is_file()
    }


class TestHelpers:
    def test_parse_grid_range(self):
        grid = parse_grid("0:0.01:1")
        assert len(grid) == 101
        assert grid[0] == 0.0 and grid[-1] == 1.0

    def test_parse_grid_list(self):
        assert parse_grid("0.1,0.5") == [0.1, 0.5]

    def test_parse_grid_bad(self):
        with pytest.raises(ConfigError):
            parse_grid("1:0:-1")

    def test_check_assertions(self):
        assert check_assertions(["a>=0.5"], {"a": 0.6}) == []
        assert check_assertions(["a>=0.7"], {"a": 0.6}) != []
        with pytest.raises(ConfigError):
            check_assertions(["missing>=1"], {"a": 0.6})
        with pytest.raises(ConfigError):
            check_assertions(["a ~ 1"], {"a": 0.6})


class TestMap:
    def test_writes_maps_and_heatmaps(self, bundle_dir, tmp_path):
        out = tmp_path / "maps"
        code = main(["map", "--bundle-dir", str(bundle_dir), "--out", str(out),
                     "--centroids", "2", "--seed", "3"])
        assert code == 0
        assert (out / "map_1.npy").is_file()
        assert (out / "heatmap_1.ppm").is_file()
        data = load_array(out / "map_1.npy")
        assert data.shape == (48, 48)
        assert data.min() >= 0.0 and data.max() <= 1.0

    def test_same_invocation_identical_bytes(self, bundle_dir, tmp_path):
        args = ["map", "--bundle-dir", str(bundle_dir), "--centroids", "2", "--seed", "3"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        assert read_tree(tmp_path / "a") == read_tree(tmp_path / "b")

    def test_sim_only_equals_empty_cascade(self, bundle_dir, tmp_path):
        assert main(["map", "--bundle-dir", str(bundle_dir), "--method", "sim_only",
                     "--out", str(tmp_path / "s")]) == 0
        assert main(["map", "--bundle-dir", str(bundle_dir), "--method", "region_cam",
                     "--layers", "", "--out", str(tmp_path / "r")]) == 0
        a = load_array(tmp_path / "s" / "map_1.npy")
        b = load_array(tmp_path / "r" / "map_1.npy")
        np.testing.assert_array_equal(a, b)

    def test_cam_without_gap_weights_exits_2(self, tmp_path):
        bundle, _ = make_planted_bundle(image_id="nogap", with_gap=False)
        path = tmp_path / "nogap"
        write_bundle(bundle, path)
        code = main(["map", "--bundle-dir", str(path), "--method", "cam",
                     "--out", str(tmp_path / "out")])
        assert code == 2

    def test_cam_and_gradcam_run(self, bundle_dir, tmp_path):
        for method in ("cam", "gradcam"):
            assert main(["map", "--bundle-dir", str(bundle_dir), "--method", method,
                         "--out", str(tmp_path / method)]) == 0
            assert (tmp_path / method / "map_1.npy").is_file()

    def test_missing_bundle_exits_2(self, tmp_path):
        assert main(["map", "--bundle-dir", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "o")]) == 2


class TestSeed:
    def test_writes_seed_files(self, dataset, tmp_path):
        root, _, _ = dataset
        out = tmp_path / "seeds"
        code = main(["seed", "--bundles", str(root), "--bg", "0.5", "--out", str(out),
                     "--centroids", "2", "--seed", "1"])
        assert code == 0
        for i in range(3):
            assert (out / f"seed_img{i}.npy").is_file()
            assert (out / f"seed_img{i}.ppm").is_file()
        labels = load_array(out / "seed_img0.npy")
        mask = planted_mask((48, 48))
        iou = ((labels == 1) & mask).sum() / ((labels == 1) | mask).sum()
        assert iou > 0.9

    def test_thread_count_does_not_change_bytes(self, dataset, tmp_path):
        root, _, _ = dataset
        trees = []
        for threads in (1, 2, 8):
            out = tmp_path / f"t{threads}"
            assert main(["seed", "--bundles", str(root), "--bg", "0.5", "--out", str(out),
                         "--centroids", "2", "--seed", "1", "--threads", str(threads)]) == 0
            trees.append(read_tree(out))
        assert trees[0] == trees[1] == trees[2]


class TestSweep:
    def test_default_grid_has_101_entries(self, dataset, tmp_path):
        root, gt_dir, _ = dataset
        out = tmp_path / "sweep"
        code = main(["sweep", "--bundles", str(root), "--gt-dir", str(gt_dir),
                     "--out", str(out), "--centroids", "2", "--seed", "1"])
        assert code == 0
        payload = json.loads((out / "sweep.json").read_text())
        assert len(payload["thresholds"]) == 101
        assert len(payload["miou"]) == 101
        assert payload["best_miou"] > 0.9
        assert (out / "sweep.csv").is_file()
        assert (out / "sweep.png").is_file()

    def test_no_figures_flag(self, dataset, tmp_path):
        root, gt_dir, _ = dataset
        out = tmp_path / "sweep"
        assert main(["sweep", "--bundles", str(root), "--gt-dir", str(gt_dir),
                     "--out", str(out), "--centroids", "2", "--seed", "1",
                     "--bg-grid", "0.3,0.5", "--no-figures"]) == 0
        assert not (out / "sweep.png").exists()

    def test_missing_gt_exits_2(self, dataset, tmp_path, capsys):
        root, _, _ = dataset
        code = main(["sweep", "--bundles", str(root), "--gt-dir", str(tmp_path / "missing"),
                     "--out", str(tmp_path / "o")])
        assert code == 2
        assert "img0.npy" in capsys.readouterr().err

    def test_assert_mode_gates_exit(self, dataset, tmp_path):
        root, gt_dir, _ = dataset
        base = ["sweep", "--bundles", str(root), "--gt-dir", str(gt_dir),
                "--centroids", "2", "--seed", "1", "--bg-grid", "0.4,0.6"]
        assert main(base + ["--out", str(tmp_path / "a"), "--assert", "best_miou>=0.9"]) == 0
        assert main(base + ["--out", str(tmp_path / "b"), "--assert", "best_miou>1"]) == 1


class TestLocate:
    def test_scores_and_sweep(self, dataset, tmp_path):
        root, _, boxes = dataset
        out = tmp_path / "loc"
        code = main(["locate", "--bundles", str(root), "--gt-boxes", str(boxes),
                     "--out", str(out), "--centroids", "2", "--seed", "1",
                     "--grid", "0.2,0.35,0.5"])
        assert code == 0
        payload = json.loads((out / "localization.json").read_text())
        assert payload["loc1"] == 1.0 and payload["loc5"] == 1.0
        assert len(payload["records"]) == 3
        assert (out / "loc_sweep.csv").is_file()
        assert (out / "loc_sweep.png").is_file()

    def test_missing_boxes_exits_2(self, dataset, tmp_path):
        root, _, _ = dataset
        assert main(["locate", "--bundles", str(root), "--gt-boxes",
                     str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 2


class TestOcclude:
    def test_writes_occluded_images(self, dataset, tmp_path):
        root, _, _ = dataset
        out = tmp_path / "occ"
        code = main(["occlude", "--bundles", str(root), "--out", str(out),
                     "--centroids", "2", "--seed", "1", "--frac", "0.85"])
        assert code == 0
        manifest = json.loads((out / "occluded_manifest.json").read_text())
        assert len(manifest["images"]) == 3
        occluded = load_array(out / "occluded_img0.npy")
        assert occluded.shape == (48, 48, 3)
        assert (out / "occluded_img0.ppm").is_file()
        # the planted object region is painted with the fill color
        mask = planted_mask((48, 48))
        fill = np.asarray([0.485, 0.456, 0.406], np.float32)
        inner = np.zeros_like(mask)
        inner[18:30, 18:30] = True
        np.testing.assert_allclose(occluded[inner], np.tile(fill, (inner.sum(), 1)), atol=1e-6)

    def test_report_roundtrip(self, tmp_path):
        before = {"records": [[0.8, 0.9, 0.7, 0.6]]}
        after = {"records": [[0.5, 0.6, 0.4, 0.3]]}
        (tmp_path / "before.json").write_text(json.dumps(before))
        (tmp_path / "after.json").write_text(json.dumps(after))
        out = tmp_path / "report"
        code = main(["occlude-report", "--before", str(tmp_path / "before.json"),
                     "--after", str(tmp_path / "after.json"), "--out", str(out)])
        assert code == 0
        payload = json.loads((out / "occlusion_report.json").read_text())
        assert payload["mean"]["top1_accuracy"]["drop"] == pytest.approx(0.3)


class TestAblate:
    def test_row_per_configuration(self, dataset, tmp_path):
        root, gt_dir, _ = dataset
        bundle, _ = make_planted_bundle()
        names = bundle.layer_names()
        subsets = f"{names[1]},{names[2]};{names[2]}"
        out = tmp_path / "ablate"
        code = main(["ablate", "--bundles", str(root), "--gt-dir", str(gt_dir),
                     "--out", str(out), "--layer-subsets", subsets,
                     "--centroid-grid", "2,3", "--bg-grid", "0.4,0.6", "--seed", "1"])
        assert code == 0
        payload = json.loads((out / "ablation.json").read_text())
        assert len(payload["rows"]) == 4  # 2 subsets x 2 centroid counts
        assert (out / "ablation.csv").is_file()


class TestConfigFile:
    def test_config_supplies_defaults_flags_override(self, dataset, tmp_path):
        root, _, _ = dataset
        cfg = {"centroids": 2, "seed": 1, "bg": 0.5}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        out_a = tmp_path / "a"
        assert main(["seed", "--bundles", str(root), "--config", str(cfg_path),
                     "--out", str(out_a)]) == 0
        out_b = tmp_path / "b"
        assert main(["seed", "--bundles", str(root), "--config", str(cfg_path),
                     "--bg", "0.5", "--centroids", "2", "--seed", "1",
                     "--out", str(out_b)]) == 0
        assert read_tree(out_a) == read_tree(out_b)
