"""Reference-to-target correlation: similarity maps and proto-map synthesis.

Similarity is the bounded inverse-quadratic 1 / (1 + ||a - b||^2), so an
exact feature match scores 1 and scores decay smoothly with squared L2
distance. Per proxy entry, a cell's score is the max over that entry's
distinct centroids, which makes K=1 behave like object-mean matching and
K=full like exhaustive pixel-level matching.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .grids import FeatureMap, LabelMask
from .netops import bottleneck_block, conv2d
from .proxies import ProxySet
from .weights import ParamSpec, WeightStore

_CENTROID_CHUNK = 2048  # caps the (cells x centroids x channels) workspace


@dataclass(frozen=True)
class SimilarityStack:
    """One single-channel similarity map per proxy entry, fixed (r, K) order."""

    object_index: int
    maps: tuple[FeatureMap, ...]


def l2_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """1 / (1 + squared L2 distance), in (0, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"vector lengths differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(1.0 / (1.0 + np.sum(d * d)))


def similarity_map(f_t: FeatureMap, centroids: np.ndarray) -> FeatureMap:
    """Per-cell max similarity against a centroid list; zeros when the list is empty."""
    h, w, c = f_t.data.shape
    cents = np.asarray(centroids, dtype=np.float64)
    if len(cents) == 0:
        return FeatureMap(np.zeros((h, w, 1), dtype=np.float32))
    if cents.ndim != 2 or cents.shape[1] != c:
        raise DimensionError(f"centroids must be (K, {c}), got {cents.shape}")
    cells = f_t.data.reshape(-1, c).astype(np.float64)
    best = np.full(len(cells), -np.inf)
    for lo in range(0, len(cents), _CENTROID_CHUNK):
        block = cents[lo : lo + _CENTROID_CHUNK]
        diff = cells[:, None, :] - block[None, :, :]
        sim = 1.0 / (1.0 + np.sum(diff * diff, axis=-1))
        best = np.maximum(best, sim.max(axis=1))
    return FeatureMap(best.reshape(h, w, 1).astype(np.float32))


def similarity_stack(f_t: FeatureMap, proxies: ProxySet) -> SimilarityStack:
    maps = tuple(similarity_map(f_t, e.centroids) for e in proxies.entries)
    return SimilarityStack(proxies.object_index, maps)


def proto_param_table(n_entries: int, f_channels: int, c_s: int, c_m: int) -> list[ParamSpec]:
    """Parameter table for the proto-map head; the stacked-similarity width
    (one channel per proxy entry) is baked into the phi_s path."""
    cin = c_s + f_channels
    return [
        ParamSpec(f"proto/phi_s/in{n_entries}/kernel", (1, 1, n_entries, c_s), n_entries),
        ParamSpec(f"proto/phi_s/in{n_entries}/bias", (c_s,), n_entries),
        ParamSpec("proto/ens/b1/c1/kernel", (1, 1, cin, c_m), cin),
        ParamSpec("proto/ens/b1/c1/bias", (c_m,), cin),
        ParamSpec("proto/ens/b1/c2/kernel", (3, 3, c_m, c_m), 9 * c_m),
        ParamSpec("proto/ens/b1/c2/bias", (c_m,), 9 * c_m),
        ParamSpec("proto/ens/b1/c3/kernel", (1, 1, c_m, c_m), c_m),
        ParamSpec("proto/ens/b1/c3/bias", (c_m,), c_m),
        ParamSpec("proto/ens/b1/skip/kernel", (1, 1, cin, c_m), cin),
        ParamSpec("proto/ens/b1/skip/bias", (c_m,), cin),
        ParamSpec("proto/ens/b2/c1/kernel", (1, 1, c_m, c_m), c_m),
        ParamSpec("proto/ens/b2/c1/bias", (c_m,), c_m),
        ParamSpec("proto/ens/b2/c2/kernel", (3, 3, c_m, c_m), 9 * c_m),
        ParamSpec("proto/ens/b2/c2/bias", (c_m,), 9 * c_m),
        ParamSpec("proto/ens/b2/c3/kernel", (1, 1, c_m, c_m), c_m),
        ParamSpec("proto/ens/b2/c3/bias", (c_m,), c_m),
    ]


def generate_proto_map(f_t: FeatureMap, proxies: ProxySet, store: WeightStore,
                       c_s: int = 8, c_m: int = 32) -> FeatureMap:
    """Stack entry similarities, project, concatenate target features, and
    run the two-block ensembler down to C_m channels."""
    stack = similarity_stack(f_t, proxies)
    sims = np.concatenate([m.data for m in stack.maps], axis=2)
    return proto_map_from_similarities(sims, f_t, store, c_s=c_s, c_m=c_m)


def proto_map_from_similarities(sims: np.ndarray, f_t: FeatureMap, store: WeightStore,
                                c_s: int = 8, c_m: int = 32) -> FeatureMap:
    """The proto-map head on an already-stacked (H, W, n_entries) similarity
    volume; the entry count selects the projection weights."""
    if sims.shape[:2] != f_t.spatial:
        raise DimensionError(f"similarity stack {sims.shape[:2]} vs features {f_t.spatial}")
    n_entries = sims.shape[2]
    sims = np.asarray(sims, dtype=np.float64)
    table = {s.path: s for s in proto_param_table(n_entries, f_t.channels, c_s, c_m)}

    def p(name):
        return store.get(table[name])

    prefix = f"proto/phi_s/in{n_entries}"
    projected = conv2d(sims, p(f"{prefix}/kernel"), p(f"{prefix}/bias"))
    x = np.concatenate([projected, f_t.data.astype(np.float64)], axis=2)
    x = bottleneck_block(
        x,
        p("proto/ens/b1/c1/kernel"), p("proto/ens/b1/c1/bias"),
        p("proto/ens/b1/c2/kernel"), p("proto/ens/b1/c2/bias"),
        p("proto/ens/b1/c3/kernel"), p("proto/ens/b1/c3/bias"),
        skip_kernel=p("proto/ens/b1/skip/kernel"), skip_bias=p("proto/ens/b1/skip/bias"),
    )
    x = bottleneck_block(
        x,
        p("proto/ens/b2/c1/kernel"), p("proto/ens/b2/c1/bias"),
        p("proto/ens/b2/c2/kernel"), p("proto/ens/b2/c2/bias"),
        p("proto/ens/b2/c3/kernel"), p("proto/ens/b2/c3/bias"),
    )
    return FeatureMap(x.astype(np.float32))


def nearest_proxy_classify(f_t: FeatureMap, all_proxies: Sequence[ProxySet]) -> LabelMask:
    """Label each cell with the object whose proxies match it best.

    all_proxies must cover objects 0..N in order; ties resolve to the
    lowest object index (background wins ties).
    """
    if len(all_proxies) == 0:
        raise ValueError("no objects to classify")
    for i, ps in enumerate(all_proxies):
        if ps.object_index != i:
            raise ValueError(f"proxy sets must cover objects 0..N in order, got {ps.object_index} at {i}")
    scores = []
    for ps in all_proxies:
        per_entry = [similarity_map(f_t, e.centroids).data[:, :, 0] for e in ps.entries]
        scores.append(np.maximum.reduce(per_entry))
    labels = np.argmax(np.stack(scores, axis=0), axis=0).astype(np.int32)
    return LabelMask(labels, len(all_proxies) - 1)
