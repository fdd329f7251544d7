"""Discriminative mask calibration: gated conditioning, cross-object
aggregation, modulation decoding, and the staged refinement cascade.

Every stage recomputes each object's condition code from the current
proto-maps (its own map, an order-invariant aggregate of all maps minus
its own, and its reference proxies), then decodes every object with the
shared stage weights. Weights are shared across objects within a stage
and distinct across stages.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .grids import (
    ConditionCode,
    FeatureMap,
    LabelMask,
    bilinear_resize,
    channel_concat,
    channelwise_modulate,
    global_avg_pool,
)
from .netops import conv2d, linear, mlp2, relu
from .proxies import ProxySet
from .weights import ParamSpec, WeightStore


@dataclass(frozen=True)
class CascadeConfig:
    num_stages: int = 6
    beta: float = 0.3
    upsample_stages: frozenset[int] = frozenset({4, 5})
    lowlevel_stage: int = 5
    c_m: int = 32

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must be in [0, 1), got {self.beta}")
        if self.num_stages < 1:
            raise ValueError("num_stages must be >= 1")
        stages = set(range(1, self.num_stages + 1))
        if not set(self.upsample_stages) <= stages:
            raise ValueError(f"upsample_stages {set(self.upsample_stages)} outside 1..{self.num_stages}")
        if self.lowlevel_stage not in stages:
            raise ValueError(f"lowlevel_stage {self.lowlevel_stage} outside 1..{self.num_stages}")
        object.__setattr__(self, "upsample_stages", frozenset(self.upsample_stages))


@dataclass(frozen=True)
class CLWeights:
    """One conditioning layer: 1x1 confidence conv plus a two-layer MLP."""

    phi_kernel: np.ndarray
    phi_bias: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass(frozen=True)
class CalibratorStageWeights:
    cl1: CLWeights
    cl2: CLWeights
    cl3: CLWeights
    agg_kernel: np.ndarray
    agg_bias: np.ndarray
    fusion_w1: np.ndarray
    fusion_b1: np.ndarray
    fusion_w2: np.ndarray
    fusion_b2: np.ndarray
    dec_k1: np.ndarray
    dec_b1: np.ndarray
    dec_k2: np.ndarray
    dec_b2: np.ndarray
    lowfuse_kernel: np.ndarray | None = None
    lowfuse_bias: np.ndarray | None = None


def _cl_param_specs(prefix: str, in_channels: int, c_m: int) -> list[ParamSpec]:
    return [
        ParamSpec(f"{prefix}/phi/kernel", (1, 1, in_channels, 1), in_channels),
        ParamSpec(f"{prefix}/phi/bias", (1,), in_channels),
        ParamSpec(f"{prefix}/mlp/w1", (in_channels, c_m), in_channels),
        ParamSpec(f"{prefix}/mlp/b1", (c_m,), in_channels),
        ParamSpec(f"{prefix}/mlp/w2", (c_m, c_m), c_m),
        ParamSpec(f"{prefix}/mlp/b2", (c_m,), c_m),
    ]


def stage_param_table(stage: int, cfg: CascadeConfig, proxy_channels: int,
                      low_channels: int) -> list[ParamSpec]:
    """All arrays of one cascade stage. The CL3 widths depend on the
    concatenated proxy channel count, which the path records."""
    c_m = cfg.c_m
    p = f"cal/s{stage}"
    specs = _cl_param_specs(f"{p}/cl1", c_m, c_m)
    specs += _cl_param_specs(f"{p}/cl2", c_m, c_m)
    specs += _cl_param_specs(f"{p}/cl3/in{proxy_channels}", proxy_channels, c_m)
    specs += [
        ParamSpec(f"{p}/agg/kernel", (1, 1, c_m, c_m), c_m),
        ParamSpec(f"{p}/agg/bias", (c_m,), c_m),
        ParamSpec(f"{p}/fusion/w1", (3 * c_m, c_m), 3 * c_m),
        ParamSpec(f"{p}/fusion/b1", (c_m,), 3 * c_m),
        ParamSpec(f"{p}/fusion/w2", (c_m, c_m), c_m),
        ParamSpec(f"{p}/fusion/b2", (c_m,), c_m),
        ParamSpec(f"{p}/dec/k1", (3, 3, c_m, c_m), 9 * c_m),
        ParamSpec(f"{p}/dec/b1", (c_m,), 9 * c_m),
        ParamSpec(f"{p}/dec/k2", (3, 3, c_m, c_m), 9 * c_m),
        ParamSpec(f"{p}/dec/b2", (c_m,), 9 * c_m),
    ]
    if stage == cfg.lowlevel_stage:
        cin = c_m + low_channels
        specs += [
            ParamSpec(f"{p}/lowfuse/kernel", (1, 1, cin, c_m), cin),
            ParamSpec(f"{p}/lowfuse/bias", (c_m,), cin),
        ]
    return specs


def head_param_table(c_m: int) -> list[ParamSpec]:
    return [
        ParamSpec("cal/head/kernel", (1, 1, c_m, 1), c_m),
        ParamSpec("cal/head/bias", (1,), c_m),
    ]


def _fetch_cl(store: WeightStore, prefix: str, in_channels: int, c_m: int) -> CLWeights:
    s = {spec.path: spec for spec in _cl_param_specs(prefix, in_channels, c_m)}
    return CLWeights(
        store.get(s[f"{prefix}/phi/kernel"]), store.get(s[f"{prefix}/phi/bias"]),
        store.get(s[f"{prefix}/mlp/w1"]), store.get(s[f"{prefix}/mlp/b1"]),
        store.get(s[f"{prefix}/mlp/w2"]), store.get(s[f"{prefix}/mlp/b2"]),
    )


def fetch_stage_weights(store: WeightStore, stage: int, cfg: CascadeConfig,
                        proxy_channels: int, low_channels: int) -> CalibratorStageWeights:
    table = {s.path: s for s in stage_param_table(stage, cfg, proxy_channels, low_channels)}
    p = f"cal/s{stage}"

    def g(name):
        return store.get(table[name])

    kwargs = {}
    if stage == cfg.lowlevel_stage:
        kwargs = {"lowfuse_kernel": g(f"{p}/lowfuse/kernel"), "lowfuse_bias": g(f"{p}/lowfuse/bias")}
    return CalibratorStageWeights(
        cl1=_fetch_cl(store, f"{p}/cl1", cfg.c_m, cfg.c_m),
        cl2=_fetch_cl(store, f"{p}/cl2", cfg.c_m, cfg.c_m),
        cl3=_fetch_cl(store, f"{p}/cl3/in{proxy_channels}", proxy_channels, cfg.c_m),
        agg_kernel=g(f"{p}/agg/kernel"), agg_bias=g(f"{p}/agg/bias"),
        fusion_w1=g(f"{p}/fusion/w1"), fusion_b1=g(f"{p}/fusion/b1"),
        fusion_w2=g(f"{p}/fusion/w2"), fusion_b2=g(f"{p}/fusion/b2"),
        dec_k1=g(f"{p}/dec/k1"), dec_b1=g(f"{p}/dec/b1"),
        dec_k2=g(f"{p}/dec/k2"), dec_b2=g(f"{p}/dec/b2"),
        **kwargs,
    )


def confidence_gate(values: FeatureMap, beta: float) -> FeatureMap:
    """Zero cells below the floor(beta * M)-th smallest value (1-indexed).

    floor(beta * M) = 0 disables the gate. Intended for non-negative
    confidence maps, where the gate is idempotent.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must be in [0, 1), got {beta}")
    if values.channels != 1:
        raise DimensionError("confidence_gate expects a single-channel map")
    flat = values.data.reshape(-1)
    rank = int(beta * flat.size)
    if rank == 0:
        return values
    threshold = np.partition(flat, rank - 1)[rank - 1]
    return FeatureMap(np.where(values.data >= threshold, values.data, np.float32(0.0)))


def conditioning_layer(z_in: FeatureMap, cl: CLWeights, beta: float) -> ConditionCode:
    """Confidence-gated pooling compressed to a condition vector:
    MLP(GAP(z_in * gate(phi(z_in))))."""
    conf = relu(conv2d(z_in.data, cl.phi_kernel, cl.phi_bias))
    gated = confidence_gate(FeatureMap(conf.astype(np.float32)), beta)
    weighted = z_in.data.astype(np.float64) * gated.data.astype(np.float64)
    pooled = global_avg_pool(FeatureMap(weighted.astype(np.float32)))
    out = mlp2(pooled.values, cl.w1, cl.b1, cl.w2, cl.b2)
    return ConditionCode(out.astype(np.float32))


def aggregate_others(maps: Sequence[FeatureMap], target: int,
                     agg_kernel: np.ndarray, agg_bias: np.ndarray) -> FeatureMap:
    """Order-invariant cross-object discrepancy: conv1x1(elementwise max of
    all maps) minus the target's own map."""
    if len(maps) == 0:
        raise ValueError("aggregate_others needs at least one map")
    shape = maps[0].data.shape
    for m in maps[1:]:
        if m.data.shape != shape:
            raise DimensionError(f"proto-map shapes differ: {m.data.shape} vs {shape}")
    pooled = np.maximum.reduce([m.data.astype(np.float64) for m in maps])
    agg = conv2d(pooled, agg_kernel, agg_bias)
    return FeatureMap((agg - maps[target].data.astype(np.float64)).astype(np.float32))


def discriminative_condition_code(
    maps: Sequence[FeatureMap],
    proxy_summary: FeatureMap,
    target: int,
    sw: CalibratorStageWeights,
    beta: float,
) -> ConditionCode:
    """Fuse the target's own cues, the cross-object discrepancy, and the
    reference proxies into one modulation code."""
    m_in = maps[target]
    code1 = conditioning_layer(m_in, sw.cl1, beta)
    others = aggregate_others(maps, target, sw.agg_kernel, sw.agg_bias)
    code2 = conditioning_layer(others, sw.cl2, beta)
    summary = proxy_summary
    if summary.spatial != m_in.spatial:
        summary = bilinear_resize(summary, *m_in.spatial)
    code3 = conditioning_layer(summary, sw.cl3, beta)
    stacked = np.concatenate([code1.values, code2.values, code3.values]).astype(np.float64)
    # tanh hidden keeps codes bounded for seeded (untrained) weights; without
    # it the modulate-pool-modulate loop grows map magnitudes past float32
    hidden = np.tanh(linear(stacked, sw.fusion_w1, sw.fusion_b1))
    fused = linear(hidden, sw.fusion_w2, sw.fusion_b2)
    return ConditionCode(fused.astype(np.float32))


def conditional_decode(
    m_in: FeatureMap,
    code: ConditionCode,
    sw: CalibratorStageWeights,
    cfg: CascadeConfig,
    stage: int,
    low_level: FeatureMap | None = None,
) -> FeatureMap:
    """Modulate, optionally fuse low-level features, refine, optionally upsample."""
    if (stage == cfg.lowlevel_stage) != (low_level is not None):
        raise ValueError(
            f"low_level must be provided exactly at stage {cfg.lowlevel_stage}, got stage {stage}"
        )
    h = m_in.data.astype(np.float64) + channelwise_modulate(m_in, code).data.astype(np.float64)
    if low_level is not None:
        if low_level.spatial != m_in.spatial:
            low_level = bilinear_resize(low_level, *m_in.spatial)
        h = np.concatenate([h, low_level.data.astype(np.float64)], axis=2)
        h = conv2d(h, sw.lowfuse_kernel, sw.lowfuse_bias)
    out = h + conv2d(relu(conv2d(h, sw.dec_k1, sw.dec_b1)), sw.dec_k2, sw.dec_b2)
    result = FeatureMap(out.astype(np.float32))
    if stage in cfg.upsample_stages:
        result = bilinear_resize(result, 2 * result.height, 2 * result.width)
    return result


def proxy_summary_map(proxies: ProxySet) -> FeatureMap:
    """Channel-concatenate every entry's proxy map (absent entries are zero
    maps, so the channel layout is stable)."""
    return channel_concat([e.proxy_map for e in proxies.entries])


def cascade_calibrate(
    proto_maps: Sequence[FeatureMap],
    proxies: Sequence[ProxySet],
    low_level: FeatureMap,
    store: WeightStore,
    cfg: CascadeConfig,
    out_size: tuple[int, int],
) -> list[FeatureMap]:
    """Run the full refinement cascade; returns one single-channel score map
    per object at `out_size` resolution, in object order."""
    if len(proto_maps) != len(proxies):
        raise ValueError("need one proxy set per proto-map")
    summaries = [proxy_summary_map(ps) for ps in proxies]
    proxy_channels = summaries[0].channels
    if any(s.channels != proxy_channels for s in summaries):
        raise DimensionError("proxy sets must share one (reference, K) entry layout")
    low_channels = low_level.channels

    maps = list(proto_maps)
    for stage in range(1, cfg.num_stages + 1):
        sw = fetch_stage_weights(store, stage, cfg, proxy_channels, low_channels)
        codes = [
            discriminative_condition_code(maps, summaries[i], i, sw, cfg.beta)
            for i in range(len(maps))
        ]
        low = low_level if stage == cfg.lowlevel_stage else None
        maps = [
            conditional_decode(maps[i], codes[i], sw, cfg, stage, low_level=low)
            for i in range(len(maps))
        ]

    head = {s.path: s for s in head_param_table(cfg.c_m)}
    k, b = store.get(head["cal/head/kernel"]), store.get(head["cal/head/bias"])
    scores = []
    for m in maps:
        s = FeatureMap(conv2d(m.data, k, b).astype(np.float32))
        scores.append(bilinear_resize(s, *out_size))
    return scores


def merge_masks(scores: Sequence[FeatureMap]) -> LabelMask:
    """Per-cell argmax over object score maps; ties go to the lowest index."""
    if len(scores) == 0:
        raise ValueError("merge_masks needs at least one score map")
    shape = scores[0].data.shape
    for s in scores[1:]:
        if s.data.shape != shape:
            raise DimensionError(f"score map shapes differ: {s.data.shape} vs {shape}")
    if shape[2] != 1:
        raise DimensionError("score maps must be single-channel")
    stacked = np.stack([s.data[:, :, 0] for s in scores], axis=0)
    return LabelMask(np.argmax(stacked, axis=0).astype(np.int32), len(scores) - 1)
