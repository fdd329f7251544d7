import numpy as np
import pytest

from proxyvos.correlation import (
    l2_similarity,
    nearest_proxy_classify,
    proto_map_from_similarities,
    proto_param_table,
    generate_proto_map,
    similarity_map,
    similarity_stack,
)
from proxyvos.errors import DimensionError
from proxyvos.grids import FeatureMap, LabelMask
from proxyvos.proxies import K_FULL, ClusterSchedule, build_adaptive_proxy
from proxyvos.weights import WeightBundle, WeightStore


class TestL2Similarity:
    def test_equal_vectors(self):
        assert l2_similarity(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 1.0

    def test_unit_distance(self):
        assert l2_similarity(np.array([0.0]), np.array([1.0])) == 0.5

    def test_three_four_five(self):
        assert l2_similarity(np.array([0.0, 0.0]), np.array([3.0, 4.0])) == pytest.approx(1 / 26)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            l2_similarity(np.zeros(2), np.zeros(3))


class TestSimilarityMap:
    def test_exact_match_everywhere(self):
        f = FeatureMap(np.full((3, 3, 2), 1.25, dtype=np.float32))
        out = similarity_map(f, np.array([[1.25, 1.25]], dtype=np.float32))
        np.testing.assert_array_equal(out.data, np.ones((3, 3, 1), dtype=np.float32))

    def test_empty_centroids(self):
        f = FeatureMap(np.ones((2, 2, 1), dtype=np.float32))
        assert not similarity_map(f, np.zeros((0, 1))).data.any()

    def test_two_centroid_oracle(self):
        f = FeatureMap(np.array([[[0.0], [2.0], [9.0]]], dtype=np.float32))
        cents = np.array([[0.0], [10.0]])
        out = similarity_map(f, cents)
        # brute-force max over both centroids per cell
        np.testing.assert_allclose(out.data[0, :, 0], [1.0, 1 / 5, 1 / 2], atol=1e-7)

    def test_values_in_unit_interval(self, rng):
        f = FeatureMap(rng.random((4, 4, 3)).astype(np.float32) * 10)
        cents = rng.random((5, 3)) * 10
        out = similarity_map(f, cents)
        assert (out.data > 0).all() and (out.data <= 1).all()

    def test_adding_centroid_monotone(self, rng):
        f = FeatureMap(rng.random((4, 4, 2)).astype(np.float32))
        cents = rng.random((3, 2))
        more = np.concatenate([cents, rng.random((1, 2))])
        base = similarity_map(f, cents).data
        grown = similarity_map(f, more).data
        assert (grown >= base).all()

    def test_channel_mismatch(self):
        f = FeatureMap(np.ones((2, 2, 2), dtype=np.float32))
        with pytest.raises(DimensionError):
            similarity_map(f, np.ones((1, 3)))


def build_test_proxies(rng, f_channels=3, num_objects=1, schedule=ClusterSchedule((1, 2))):
    f_r = FeatureMap(rng.random((4, 4, f_channels)).astype(np.float32))
    labels = rng.integers(0, num_objects + 1, size=(4, 4)).astype(np.int32)
    y_r = LabelMask(labels, num_objects)
    return [
        build_adaptive_proxy([f_r], [y_r], i, schedule, seed=4)
        for i in range(num_objects + 1)
    ]


class TestProtoMap:
    def test_zero_weights_reduce_to_skip_projection(self, rng):
        f_t = FeatureMap(rng.random((5, 5, 3)).astype(np.float32))
        n_entries, c_s, c_m = 2, 4, 6
        table = proto_param_table(n_entries, 3, c_s, c_m)
        bundle = WeightBundle()
        skip_rng = np.random.Generator(np.random.Philox(key=2))
        for spec in table:
            if spec.path == "proto/ens/b1/skip/kernel":
                bundle.add(spec.path, skip_rng.random(spec.shape).astype(np.float32))
            else:
                bundle.add(spec.path, np.zeros(spec.shape, dtype=np.float32))
        store = WeightStore(bundle=bundle)
        sims = np.zeros((5, 5, n_entries), dtype=np.float32)
        out = proto_map_from_similarities(sims, f_t, store, c_s=c_s, c_m=c_m)
        assert out.channels == c_m
        # skip projection of [0; f_t]: only the f_t channels contribute
        skip_k = bundle.get("proto/ens/b1/skip/kernel").astype(np.float64)
        expected = np.einsum("hwc,co->hwo", f_t.data.astype(np.float64), skip_k[0, 0, c_s:])
        np.testing.assert_allclose(out.data, expected.astype(np.float32), atol=1e-6)

    def test_deterministic(self, rng):
        proxies = build_test_proxies(rng)
        f_t = FeatureMap(rng.random((4, 4, 3)).astype(np.float32))
        store = WeightStore(seed=3)
        a = generate_proto_map(f_t, proxies[1], store, c_s=4, c_m=8)
        b = generate_proto_map(f_t, proxies[1], store, c_s=4, c_m=8)
        assert a.data.tobytes() == b.data.tobytes()

    def test_perturbation_receptive_field(self, rng):
        # two 3x3 convs in the ensembler: influence radius is 2 cells
        f_t = FeatureMap(rng.random((9, 9, 3)).astype(np.float32))
        store = WeightStore(seed=6)
        sims = rng.random((9, 9, 2)).astype(np.float32)
        base = proto_map_from_similarities(sims, f_t, store, c_s=4, c_m=8)
        bumped = sims.copy()
        bumped[4, 4, 1] += 0.25
        out = proto_map_from_similarities(bumped, f_t, store, c_s=4, c_m=8)
        diff = np.abs(out.data.astype(np.float64) - base.data.astype(np.float64)).sum(axis=2)
        changed = np.argwhere(diff > 0)
        assert len(changed) > 0
        assert (np.abs(changed - 4).max(axis=1) <= 2).all()

    def test_missing_weights_config_error(self, rng):
        from proxyvos.errors import ConfigError

        f_t = FeatureMap(rng.random((4, 4, 3)).astype(np.float32))
        store = WeightStore(bundle=WeightBundle())
        with pytest.raises(ConfigError):
            proto_map_from_similarities(np.zeros((4, 4, 2), dtype=np.float32), f_t, store)


class TestNearestProxyClassify:
    def test_dominant_object(self):
        f_t = FeatureMap(np.full((3, 3, 1), 5.0, dtype=np.float32))
        from proxyvos.proxies import build_proxy_entry, ProxySet

        bg_e = FeatureMap(np.full((3, 3, 1), -50.0, dtype=np.float32))
        fg_e = FeatureMap(np.full((3, 3, 1), 5.0, dtype=np.float32))
        bg = ProxySet(0, (build_proxy_entry(bg_e, np.arange(9), 1, 0, ref_index=1),))
        fg = ProxySet(1, (build_proxy_entry(fg_e, np.arange(9), 1, 0, ref_index=1),))
        out = nearest_proxy_classify(f_t, [bg, fg])
        assert (out.labels == 1).all()

    def test_ties_to_lowest_index(self, rng):
        f_t = FeatureMap(rng.random((3, 3, 2)).astype(np.float32))
        proxies = build_test_proxies(rng, f_channels=2, num_objects=1)
        twin = type(proxies[1])(1, proxies[0].entries)  # object 1 shares object 0's proxies
        out = nearest_proxy_classify(f_t, [proxies[0], twin])
        assert (out.labels == 0).all()

    def test_two_color_exact_segmentation(self):
        # reference and target share the same two flat colors
        colors = np.zeros((4, 6, 1), dtype=np.float32)
        colors[:, 3:] = 8.0
        f = FeatureMap(colors)
        y = LabelMask((colors[:, :, 0] > 0).astype(np.int32), 1)
        proxies = [
            build_adaptive_proxy([f], [y], i, ClusterSchedule((1,)), seed=0)
            for i in range(2)
        ]
        out = nearest_proxy_classify(f, proxies)
        # brute-force per-pixel argmax oracle
        expected = np.zeros((4, 6), dtype=np.int32)
        for h in range(4):
            for w in range(6):
                sims = []
                for ps in proxies:
                    best = 0.0
                    for e in ps.entries:
                        for c in e.centroids:
                            best = max(best, l2_similarity(f.data[h, w], c))
                    sims.append(best)
                expected[h, w] = int(np.argmax(sims))
        np.testing.assert_array_equal(out.labels, expected)
        np.testing.assert_array_equal(out.labels, y.labels)

    def test_full_schedule_matches_exhaustive_nn(self, rng):
        # oracle: double loop over all reference pixels, bit-exact
        f_r = FeatureMap((rng.random((4, 4, 3)) * 4).astype(np.float32))
        y_r = LabelMask(rng.integers(0, 2, size=(4, 4)).astype(np.int32), 1)
        f_t = FeatureMap((rng.random((4, 4, 3)) * 4).astype(np.float32))
        proxies = [
            build_adaptive_proxy([f_r], [y_r], i, ClusterSchedule((K_FULL,)), seed=0)
            for i in range(2)
        ]
        ours = nearest_proxy_classify(f_t, proxies)
        ref_cells = f_r.data.reshape(-1, 3).astype(np.float64)
        tgt_cells = f_t.data.reshape(-1, 3).astype(np.float64)
        ref_labels = y_r.labels.reshape(-1)
        expected = np.zeros(16, dtype=np.int32)
        for q in range(16):
            best = [-np.inf, -np.inf]
            for p in range(16):
                d = tgt_cells[q] - ref_cells[p]
                sim = 1.0 / (1.0 + np.sum(d * d))
                lbl = int(ref_labels[p])
                best[lbl] = max(best[lbl], sim)
            expected[q] = int(np.argmax(best))
        np.testing.assert_array_equal(ours.labels.reshape(-1), expected)

    def test_requires_contiguous_objects(self, rng):
        proxies = build_test_proxies(rng, num_objects=1)
        with pytest.raises(ValueError):
            nearest_proxy_classify(FeatureMap(np.ones((2, 2, 3), dtype=np.float32)),
                                   [proxies[1], proxies[0]])
        with pytest.raises(ValueError):
            nearest_proxy_classify(FeatureMap(np.ones((2, 2, 3), dtype=np.float32)), [])


class TestSimilarityStack:
    def test_fixed_order_and_absent_zeros(self, rng):
        f_r = FeatureMap(rng.random((4, 4, 2)).astype(np.float32))
        y_r = LabelMask(np.zeros((4, 4), dtype=np.int32), 1)  # object 1 absent
        ps = build_adaptive_proxy([f_r], [y_r], 1, ClusterSchedule((1, K_FULL)), seed=0)
        stack = similarity_stack(FeatureMap(rng.random((4, 4, 2)).astype(np.float32)), ps)
        assert len(stack.maps) == 2
        for m in stack.maps:
            assert not m.data.any()
