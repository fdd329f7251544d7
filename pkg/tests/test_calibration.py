import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from proxyvos.calibration import (
    CLWeights,
    CascadeConfig,
    aggregate_others,
    cascade_calibrate,
    conditional_decode,
    conditioning_layer,
    confidence_gate,
    discriminative_condition_code,
    fetch_stage_weights,
    head_param_table,
    merge_masks,
    proxy_summary_map,
    stage_param_table,
)
from proxyvos.errors import DimensionError
from proxyvos.grids import ConditionCode, FeatureMap, LabelMask
from proxyvos.proxies import ClusterSchedule, build_adaptive_proxy
from proxyvos.weights import WeightBundle, WeightStore, synthesize_array


def single(values):
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return FeatureMap(arr)


class TestConfidenceGate:
    def test_beta_zero_identity(self, rng):
        m = FeatureMap(rng.random((4, 4, 1)).astype(np.float32))
        np.testing.assert_array_equal(confidence_gate(m, 0.0).data, m.data)

    def test_percentile_rank(self):
        vals = np.arange(1, 11, dtype=np.float32).reshape(2, 5, 1)
        out = confidence_gate(FeatureMap(vals), 0.3)
        expected = vals.copy()
        expected[expected < 3] = 0
        np.testing.assert_array_equal(out.data, expected)

    def test_constant_map_unchanged(self):
        m = FeatureMap(np.full((3, 3, 1), 2.5, dtype=np.float32))
        for beta in (0.0, 0.3, 0.9):
            np.testing.assert_array_equal(confidence_gate(m, beta).data, m.data)

    def test_bad_beta(self):
        m = FeatureMap(np.ones((2, 2, 1), dtype=np.float32))
        with pytest.raises(ValueError):
            confidence_gate(m, 1.0)
        with pytest.raises(ValueError):
            confidence_gate(m, -0.1)

    @given(arrays(np.float32, (4, 5, 1), elements=st.floats(0, 100, width=32)),
           st.floats(0, 0.99))
    def test_idempotent_on_nonnegative(self, vals, beta):
        m = FeatureMap(vals)
        once = confidence_gate(m, beta)
        twice = confidence_gate(once, beta)
        np.testing.assert_array_equal(once.data, twice.data)


def make_cl(rng, cin, c_m):
    return CLWeights(
        phi_kernel=(rng.random((1, 1, cin, 1)) - 0.5).astype(np.float32),
        phi_bias=(rng.random(1) - 0.5).astype(np.float32),
        w1=(rng.random((cin, c_m)) - 0.5).astype(np.float32),
        b1=(rng.random(c_m) - 0.5).astype(np.float32),
        w2=(rng.random((c_m, c_m)) - 0.5).astype(np.float32),
        b2=(rng.random(c_m) - 0.5).astype(np.float32),
    )


def scalar_conditioning_oracle(z, cl, beta):
    """Independent per-cell reimplementation of the conditioning layer."""
    h, w, c = z.shape
    conf = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            acc = float(cl.phi_bias[0])
            for k in range(c):
                acc += float(z[i, j, k]) * float(cl.phi_kernel[0, 0, k, 0])
            conf[i, j] = max(acc, 0.0)
    rank = int(beta * h * w)
    if rank > 0:
        threshold = sorted(conf.reshape(-1).tolist())[rank - 1]
        conf = np.where(conf >= threshold, conf, 0.0)
    pooled = np.zeros(c)
    for k in range(c):
        acc = 0.0
        for i in range(h):
            for j in range(w):
                acc += float(z[i, j, k]) * conf[i, j]
        pooled[k] = acc / (h * w)
    hidden = np.maximum(pooled @ np.asarray(cl.w1, dtype=np.float64) + cl.b1, 0.0)
    return hidden @ np.asarray(cl.w2, dtype=np.float64) + cl.b2


class TestConditioningLayer:
    def test_zero_input_bias_path(self, rng):
        cl = make_cl(rng, 4, 6)
        z = FeatureMap(np.zeros((3, 3, 4), dtype=np.float32))
        out = conditioning_layer(z, cl, 0.3)
        expected = np.maximum(np.zeros(6) + cl.b1, 0.0) @ cl.w2.astype(np.float64) + cl.b2
        np.testing.assert_allclose(out.values, expected.astype(np.float32), atol=1e-6)

    def test_constant_confidence(self, rng):
        cl = make_cl(rng, 3, 5)
        cl = CLWeights(np.zeros((1, 1, 3, 1), dtype=np.float32),
                       np.array([0.7], dtype=np.float32),
                       cl.w1, cl.b1, cl.w2, cl.b2)
        z = FeatureMap(rng.random((4, 4, 3)).astype(np.float32))
        out = conditioning_layer(z, cl, 0.3)
        gap = z.data.astype(np.float64).mean(axis=(0, 1)) * 0.7
        expected = np.maximum(gap @ cl.w1.astype(np.float64) + cl.b1, 0.0) \
            @ cl.w2.astype(np.float64) + cl.b2
        np.testing.assert_allclose(out.values, expected, atol=1e-5)

    def test_scalar_loop_oracle(self, rng):
        cl = make_cl(rng, 32, 32)
        z = FeatureMap(rng.random((8, 8, 32)).astype(np.float32))
        out = conditioning_layer(z, cl, 0.3)
        expected = scalar_conditioning_oracle(z.data, cl, 0.3)
        np.testing.assert_allclose(out.values, expected, atol=1e-5)


IDENTITY_1X1 = np.eye(4, dtype=np.float32).reshape(1, 1, 4, 4)


class TestAggregateOthers:
    def test_single_map_zero(self, rng):
        m = FeatureMap(rng.random((3, 3, 4)).astype(np.float32))
        out = aggregate_others([m], 0, IDENTITY_1X1, np.zeros(4, dtype=np.float32))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-7)

    def test_permutation_invariant(self, rng):
        maps = [FeatureMap(rng.random((3, 3, 4)).astype(np.float32)) for _ in range(4)]
        k = (rng.random((1, 1, 4, 4)) - 0.5).astype(np.float32)
        b = rng.random(4).astype(np.float32)
        out1 = aggregate_others(maps, 2, k, b)
        out2 = aggregate_others([maps[3], maps[1], maps[2], maps[0]], 2, k, b)
        assert out1.data.tobytes() == out2.data.tobytes()

    def test_two_map_arithmetic(self):
        a = FeatureMap(np.array([[[1.0], [5.0]]], dtype=np.float32))
        b = FeatureMap(np.array([[[3.0], [2.0]]], dtype=np.float32))
        ident = np.ones((1, 1, 1, 1), dtype=np.float32)
        out = aggregate_others([a, b], 0, ident, np.zeros(1, dtype=np.float32))
        np.testing.assert_allclose(out.data[0, :, 0], [2.0, 0.0], atol=1e-7)

    def test_shape_mismatch(self):
        a = FeatureMap(np.ones((2, 2, 1), dtype=np.float32))
        b = FeatureMap(np.ones((2, 3, 1), dtype=np.float32))
        with pytest.raises(DimensionError):
            aggregate_others([a, b], 0, IDENTITY_1X1, None)


SMALL_CFG = CascadeConfig(num_stages=3, beta=0.3, upsample_stages=frozenset({2}),
                          lowlevel_stage=3, c_m=8)


def build_objects(rng, num_objects=3, c_m=8, side=6):
    f_r = FeatureMap(rng.random((side, side, 3)).astype(np.float32))
    labels = rng.integers(0, num_objects + 1, size=(side, side)).astype(np.int32)
    y_r = LabelMask(labels, num_objects)
    schedule = ClusterSchedule((1, 2))
    proxies = [build_adaptive_proxy([f_r], [y_r], i, schedule, seed=1)
               for i in range(num_objects + 1)]
    maps = [FeatureMap(rng.random((side, side, c_m)).astype(np.float32))
            for _ in range(num_objects + 1)]
    low = FeatureMap(rng.random((side, side, 2)).astype(np.float32))
    return maps, proxies, low


class TestDiscriminativeCode:
    def test_fusion_bias_only(self, rng):
        maps, proxies, _ = build_objects(rng)
        summary = proxy_summary_map(proxies[1])
        bundle = WeightBundle()
        bias = rng.random(8).astype(np.float32)
        for spec in stage_param_table(1, SMALL_CFG, summary.channels, 2):
            if spec.path == "cal/s1/fusion/b2":
                bundle.add(spec.path, bias)
            else:
                bundle.add(spec.path, np.zeros(spec.shape, dtype=np.float32))
        sw = fetch_stage_weights(WeightStore(bundle=bundle), 1, SMALL_CFG, summary.channels, 2)
        for i in range(len(maps)):
            code = discriminative_condition_code(maps, proxy_summary_map(proxies[i]), i, sw, 0.3)
            np.testing.assert_allclose(code.values, bias, atol=1e-7)

    def test_invariant_to_other_object_order(self, rng):
        maps, proxies, _ = build_objects(rng)
        summary = proxy_summary_map(proxies[1])
        sw = fetch_stage_weights(WeightStore(seed=5), 1, SMALL_CFG, summary.channels, 2)
        code = discriminative_condition_code(maps, summary, 1, sw, 0.3)
        shuffled = [maps[3], maps[1], maps[0], maps[2]]  # target now at index 1
        code2 = discriminative_condition_code(shuffled, summary, 1, sw, 0.3)
        assert code.values.tobytes() == code2.values.tobytes()

    def test_distinct_objects_distinct_codes(self, rng):
        maps, proxies, _ = build_objects(rng)
        sw = fetch_stage_weights(WeightStore(seed=5), 1, SMALL_CFG,
                                 proxy_summary_map(proxies[0]).channels, 2)
        c1 = discriminative_condition_code(maps, proxy_summary_map(proxies[1]), 1, sw, 0.3)
        c2 = discriminative_condition_code(maps, proxy_summary_map(proxies[2]), 2, sw, 0.3)
        assert not np.array_equal(c1.values, c2.values)


def identity_stage_bundle(cfg, proxy_channels, low_channels, head_seed=3):
    """Zero codes, skip-only decoders, identity low-level fuse, seeded head."""
    bundle = WeightBundle()
    for stage in range(1, cfg.num_stages + 1):
        for spec in stage_param_table(stage, cfg, proxy_channels, low_channels):
            if spec.path.endswith("lowfuse/kernel"):
                k = np.zeros(spec.shape, dtype=np.float32)
                for c in range(cfg.c_m):
                    k[0, 0, c, c] = 1.0
                bundle.add(spec.path, k)
            else:
                bundle.add(spec.path, np.zeros(spec.shape, dtype=np.float32))
    for spec in head_param_table(cfg.c_m):
        bundle.add(spec.path, synthesize_array(head_seed, spec))
    return bundle


class TestConditionalDecode:
    def test_zero_code_skip_only_identity(self, rng):
        maps, proxies, low = build_objects(rng)
        cfg = CascadeConfig(num_stages=1, upsample_stages=frozenset(), lowlevel_stage=1, c_m=8)
        bundle = identity_stage_bundle(cfg, proxy_summary_map(proxies[0]).channels, low.channels)
        sw = fetch_stage_weights(WeightStore(bundle=bundle), 1, cfg,
                                 proxy_summary_map(proxies[0]).channels, low.channels)
        code = ConditionCode(np.zeros(8, dtype=np.float32))
        out = conditional_decode(maps[0], code, sw, cfg, 1, low_level=low)
        np.testing.assert_array_equal(out.data, maps[0].data)

    def test_all_ones_code_doubles(self, rng):
        maps, proxies, low = build_objects(rng)
        cfg = CascadeConfig(num_stages=2, upsample_stages=frozenset(), lowlevel_stage=2, c_m=8)
        bundle = identity_stage_bundle(cfg, proxy_summary_map(proxies[0]).channels, low.channels)
        sw = fetch_stage_weights(WeightStore(bundle=bundle), 1, cfg,
                                 proxy_summary_map(proxies[0]).channels, low.channels)
        code = ConditionCode(np.ones(8, dtype=np.float32))
        out = conditional_decode(maps[0], code, sw, cfg, 1)
        np.testing.assert_allclose(out.data, 2 * maps[0].data, atol=1e-6)

    def test_upsample_stage_doubles_resolution(self, rng):
        maps, proxies, low = build_objects(rng)
        sw = fetch_stage_weights(WeightStore(seed=2), 2, SMALL_CFG,
                                 proxy_summary_map(proxies[0]).channels, low.channels)
        code = ConditionCode(np.zeros(8, dtype=np.float32))
        out = conditional_decode(maps[0], code, sw, SMALL_CFG, 2)
        assert out.spatial == (12, 12)

    def test_low_level_contract(self, rng):
        maps, proxies, low = build_objects(rng)
        sw = fetch_stage_weights(WeightStore(seed=2), 3, SMALL_CFG,
                                 proxy_summary_map(proxies[0]).channels, low.channels)
        code = ConditionCode(np.zeros(8, dtype=np.float32))
        with pytest.raises(ValueError):
            conditional_decode(maps[0], code, sw, SMALL_CFG, 3)  # missing low_level
        sw1 = fetch_stage_weights(WeightStore(seed=2), 1, SMALL_CFG,
                                  proxy_summary_map(proxies[0]).channels, low.channels)
        with pytest.raises(ValueError):
            conditional_decode(maps[0], code, sw1, SMALL_CFG, 1, low_level=low)


class TestCascade:
    def test_identity_configuration(self, rng):
        from proxyvos.netops import conv2d

        maps, proxies, low = build_objects(rng)
        cfg = CascadeConfig(num_stages=3, beta=0.3, upsample_stages=frozenset(),
                            lowlevel_stage=2, c_m=8)
        proxy_channels = proxy_summary_map(proxies[0]).channels
        bundle = identity_stage_bundle(cfg, proxy_channels, low.channels)
        store = WeightStore(bundle=bundle)
        out = cascade_calibrate(maps, proxies, low, store, cfg, maps[0].spatial)
        head_k = bundle.get("cal/head/kernel")
        head_b = bundle.get("cal/head/bias")
        for m, score in zip(maps, out):
            expected = conv2d(m.data, head_k, head_b).astype(np.float32)
            np.testing.assert_allclose(score.data, expected, atol=1e-6)

    def test_object_permutation_equivariance(self, rng):
        maps, proxies, low = build_objects(rng, num_objects=3)
        store = WeightStore(seed=11)
        out = cascade_calibrate(maps, proxies, low, store, SMALL_CFG, (12, 12))
        perm = [0, 3, 1, 2]  # background stays, objects 1..3 permuted
        maps_p = [maps[i] for i in perm]
        proxies_p = [proxies[i] for i in perm]
        out_p = cascade_calibrate(maps_p, proxies_p, low, store, SMALL_CFG, (12, 12))
        for dst, src in enumerate(perm):
            assert out_p[dst].data.tobytes() == out[src].data.tobytes()

    def test_default_geometry_restores_image_size(self, rng):
        # stride-4 maps, two x2 upsamplings, final resize: back to image size
        maps, proxies, low = build_objects(rng, side=4)
        cfg = CascadeConfig(num_stages=6, upsample_stages=frozenset({4, 5}),
                            lowlevel_stage=5, c_m=8)
        out = cascade_calibrate(maps, proxies, low, WeightStore(seed=0), cfg, (16, 16))
        assert all(s.spatial == (16, 16) and s.channels == 1 for s in out)


class TestMergeMasks:
    def test_background_dominates(self):
        bg = single(np.full((2, 2), 0.9))
        fg = single(np.full((2, 2), 0.1))
        out = merge_masks([bg, fg])
        assert (out.labels == 0).all()
        assert out.num_objects == 1

    def test_tie_goes_to_background(self):
        a = single(np.full((2, 2), 0.5))
        out = merge_masks([a, a])
        assert (out.labels == 0).all()

    def test_per_pixel_argmax(self):
        bg = single(np.array([[0.1, 0.9]]))
        fg = single(np.array([[0.9, 0.1]]))
        out = merge_masks([bg, fg])
        np.testing.assert_array_equal(out.labels, [[1, 0]])

    def test_empty_error(self):
        with pytest.raises(ValueError):
            merge_masks([])

    @given(st.integers(0, 100), st.integers(1, 4))
    def test_labels_in_range(self, seed, n):
        local = np.random.Generator(np.random.Philox(key=seed))
        scores = [single(local.random((3, 3)).astype(np.float32)) for _ in range(n + 1)]
        out = merge_masks(scores)
        assert out.labels.min() >= 0 and out.labels.max() <= n
