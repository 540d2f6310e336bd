"""Region averaging semantics, cascade behavior, and the full map pipeline."""
import numpy as np
import pytest

from regioncam import (
    ActivationMap,
    LabelMap,
    SipConfig,
    propagate_cascade,
    propagate_once,
    region_cam,
    sim_only_map,
)
from regioncam.errors import (
    ConfigError,
    EmptyCascade,
    ShapeMismatch,
    UnknownClass,
    UnknownLayer,
)
from synthbundles import make_planted_bundle, planted_mask


def amap(data):
    return ActivationMap(class_id=1, data=np.asarray(data, np.float32), resolution="working")


def lmap(labels, m=None):
    labels = np.asarray(labels, np.int32)
    return LabelMap(layer_name="L", labels=labels, m=m or int(labels.max()) + 1)


def region_mean_oracle(values, labels):
    """Two-pass per-region means in float64."""
    out = np.zeros(values.shape, dtype=np.float64)
    for r in np.unique(labels):
        sel = labels == r
        out[sel] = values[sel].astype(np.float64).mean()
    return out


def random_partition(rng, shape, regions):
    """Random connected-ish partition: nearest of `regions` seed pixels."""
    h, w = shape
    seeds = rng.choice(h * w, size=regions, replace=False)
    sy, sx = np.divmod(seeds, w)
    yy, xx = np.mgrid[0:h, 0:w]
    dist = (yy[..., None] - sy) ** 2 + (xx[..., None] - sx) ** 2
    return np.argmin(dist, axis=2).astype(np.int32)


class TestPropagateOnce:
    def test_two_region_hand_case(self):
        out = propagate_once(amap([[1, 3], [5, 7]]), lmap([[0, 0], [1, 1]]))
        np.testing.assert_array_equal(out.data, [[2, 2], [6, 6]])

    def test_single_region_is_global_mean(self):
        rng = np.random.default_rng(0)
        values = rng.uniform(0, 5, (4, 4)).astype(np.float32)
        out = propagate_once(amap(values), lmap(np.zeros((4, 4), np.int32)))
        np.testing.assert_allclose(out.data, values.astype(np.float64).mean(), rtol=1e-6)

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            values = rng.uniform(0, 10, (8, 8)).astype(np.float32)
            labels = random_partition(rng, (8, 8), 5)
            out = propagate_once(amap(values), lmap(labels))
            np.testing.assert_allclose(
                out.data, region_mean_oracle(values, labels), rtol=1e-6
            )

    def test_idempotent_bitwise(self):
        rng = np.random.default_rng(2)
        values = rng.uniform(0, 3, (9, 7)).astype(np.float32)
        labels = random_partition(rng, (9, 7), 6)
        once = propagate_once(amap(values), lmap(labels))
        twice = propagate_once(once, lmap(labels))
        assert once.data.tobytes() == twice.data.tobytes()

    def test_piecewise_constant_exactly(self):
        rng = np.random.default_rng(3)
        values = rng.uniform(0, 3, (10, 10)).astype(np.float32)
        labels = random_partition(rng, (10, 10), 4)
        out = propagate_once(amap(values), lmap(labels)).data
        for r in np.unique(labels):
            region = out[labels == r].astype(np.float64)
            assert region.std() == 0.0

    def test_region_means_preserved(self):
        rng = np.random.default_rng(4)
        values = rng.uniform(0, 3, (12, 12)).astype(np.float32)
        labels = random_partition(rng, (12, 12), 7)
        out = propagate_once(amap(values), lmap(labels)).data
        for r in np.unique(labels):
            sel = labels == r
            np.testing.assert_allclose(
                out[sel].mean(), values[sel].astype(np.float64).mean(), rtol=1e-6
            )

    def test_bounds_cannot_widen(self):
        rng = np.random.default_rng(5)
        values = rng.uniform(-2, 3, (8, 8)).astype(np.float32)
        labels = random_partition(rng, (8, 8), 5)
        out = propagate_once(amap(values), lmap(labels)).data
        assert out.min() >= values.min() and out.max() <= values.max()

    def test_argmax_in_best_region(self):
        rng = np.random.default_rng(6)
        values = rng.uniform(0, 3, (8, 8)).astype(np.float32)
        labels = random_partition(rng, (8, 8), 5)
        out = propagate_once(amap(values), lmap(labels)).data
        best_region = labels[np.unravel_index(np.argmax(out), out.shape)]
        means = {r: values[labels == r].mean() for r in np.unique(labels)}
        assert best_region == max(means, key=means.get)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            propagate_once(amap(np.zeros((2, 2))), lmap(np.zeros((3, 3), np.int32)))


class TestCascade:
    def test_single_map_equals_once(self):
        rng = np.random.default_rng(7)
        values = rng.uniform(0, 3, (6, 6)).astype(np.float32)
        labels = random_partition(rng, (6, 6), 3)
        a = propagate_cascade(amap(values), [lmap(labels)])
        b = propagate_once(amap(values), lmap(labels))
        np.testing.assert_array_equal(a.data, b.data)

    def test_repeated_partition_is_noop(self):
        rng = np.random.default_rng(8)
        values = rng.uniform(0, 3, (6, 6)).astype(np.float32)
        labels = random_partition(rng, (6, 6), 3)
        a = propagate_cascade(amap(values), [lmap(labels), lmap(labels)])
        b = propagate_once(amap(values), lmap(labels))
        assert a.data.tobytes() == b.data.tobytes()

    def test_nested_refinement_matches_composed_oracle(self):
        rng = np.random.default_rng(9)
        values = rng.uniform(0, 3, (8, 8)).astype(np.float32)
        deep = random_partition(rng, (8, 8), 3)
        # shallow refines deep: split each deep region by parity of columns
        shallow = (deep * 2 + (np.arange(8)[None, :] % 2)).astype(np.int32)
        out = propagate_cascade(amap(values), [lmap(deep), lmap(shallow)])
        expected = region_mean_oracle(region_mean_oracle(values, deep), shallow)
        np.testing.assert_allclose(out.data, expected, rtol=1e-6)

    def test_labels_resized_to_working_grid(self):
        values = np.arange(16, dtype=np.float32).reshape(4, 4)
        labels = np.array([[0, 1], [2, 3]], np.int32)  # coarser than the map
        out = propagate_cascade(amap(values), [lmap(labels)])
        expected = region_mean_oracle(values, np.repeat(np.repeat(labels, 2, 0), 2, 1))
        np.testing.assert_allclose(out.data, expected, rtol=1e-6)

    def test_empty_cascade_rejected(self):
        with pytest.raises(EmptyCascade):
            propagate_cascade(amap(np.zeros((2, 2))), [])


class TestRegionCam:
    def test_planted_object_recovered(self):
        bundle, mask = make_planted_bundle()
        out = region_cam(bundle, 1, SipConfig(centroids=2, seed=3))
        assert out.data.shape == bundle.image_hw
        assert out.resolution == "image"
        # interior of the object saturates at 1, background at 0
        inner = mask.copy()
        inner[:1] = inner[-1:] = False
        np.testing.assert_allclose(out.data[mask].mean(), 1.0, atol=0.05)
        assert out.data[~mask].mean() < 0.05

    def test_zero_gradients_zero_map(self):
        bundle, _ = make_planted_bundle()
        for name in bundle.layer_names():
            bundle.classes[0].grads[name] = np.zeros_like(bundle.classes[0].grads[name])
        out = region_cam(bundle, 1, SipConfig(centroids=2, seed=3))
        np.testing.assert_array_equal(out.data, np.zeros(bundle.image_hw, np.float32))

    def test_deterministic_bytes(self):
        bundle, _ = make_planted_bundle()
        cfg = SipConfig(centroids=3, seed=5)
        a = region_cam(bundle, 1, cfg)
        b = region_cam(bundle, 1, cfg)
        assert a.data.tobytes() == b.data.tobytes()

    def test_empty_sip_subset_degenerates_to_fused_map(self):
        bundle, _ = make_planted_bundle()
        cfg = SipConfig(sip_layers=[], seed=0)
        a = region_cam(bundle, 1, cfg)
        b = sim_only_map(bundle, 1, cfg)
        np.testing.assert_array_equal(a.data, b.data)

    def test_output_normalized(self):
        bundle, _ = make_planted_bundle()
        out = region_cam(bundle, 1, SipConfig(centroids=2, seed=1))
        assert out.data.min() == 0.0 and out.data.max() == 1.0

    def test_unknown_class(self):
        bundle, _ = make_planted_bundle()
        with pytest.raises(UnknownClass):
            region_cam(bundle, 99, SipConfig())

    def test_unknown_layer(self):
        bundle, _ = make_planted_bundle()
        with pytest.raises(UnknownLayer):
            region_cam(bundle, 1, SipConfig(sip_layers=["nope"]))

    def test_misordered_subset_rejected(self):
        bundle, _ = make_planted_bundle()
        names = bundle.layer_names()
        with pytest.raises(ConfigError):
            region_cam(bundle, 1, SipConfig(sip_layers=[names[1], names[0]]))

    def test_seed_changes_partition_not_contract(self):
        bundle, mask = make_planted_bundle()
        for seed in (0, 1, 2):
            out = region_cam(bundle, 1, SipConfig(centroids=2, seed=seed))
            assert out.data.min() >= 0.0 and out.data.max() <= 1.0
