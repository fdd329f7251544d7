"""Sequential inference: reference scheduling, per-frame propagation, config.

Frame 1 passes its given annotation through; every later frame encodes
the target, rebuilds per-object proxies from the scheduled references
(given mask for frame 1, own predictions for the rest), and decodes
either through the full calibration cascade or, in matching-only mode,
by nearest-proxy classification. Ground truth beyond frame 1 is never
read.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .calibration import CascadeConfig, cascade_calibrate, head_param_table, merge_masks, stage_param_table
from .correlation import generate_proto_map, nearest_proxy_classify, proto_param_table
from .dataset import SequenceRecord, read_image, read_mask
from .encoder import STRIDE, EncoderConfig, encode, encoder_param_table
from .errors import ConfigError, DataError
from .grids import FeatureMap, LabelMask, downsample_mask
from .proxies import ClusterSchedule, ProxySet, build_adaptive_proxy
from .weights import ParamSpec, WeightBundle, WeightStore, load_weights

MODES = ("full", "matching_only")


@dataclass(frozen=True)
class ReferenceSchedule:
    """Which past frames guide frame t: base = {1, t-1}; multi_frame =
    {1, 1+delta, 1+2*delta, ...} with t-1 appended when absent."""

    mode: str = "base"
    delta: int = 5

    def __post_init__(self):
        if self.mode not in ("base", "multi_frame"):
            raise ValueError(f"unknown reference mode {self.mode!r}")
        if self.delta < 1:
            raise ValueError("delta must be >= 1")


def select_references(schedule: ReferenceSchedule, t: int) -> list[int]:
    """Strictly increasing reference frame indices in [1, t-1]."""
    if t < 2:
        raise ValueError(f"target frame must be >= 2, got {t}")
    if schedule.mode == "base":
        return [1] if t == 2 else [1, t - 1]
    refs = list(range(1, t, schedule.delta))
    if refs[-1] != t - 1:
        refs.append(t - 1)
    return refs


@dataclass(frozen=True)
class PipelineConfig:
    schedule: ClusterSchedule = ClusterSchedule()
    beta: float = 0.3
    num_stages: int = 6
    c_m: int = 32
    c_s: int = 8
    upsample_stages: tuple[int, ...] = (4, 5)
    lowlevel_stage: int = 5
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    references: ReferenceSchedule = field(default_factory=ReferenceSchedule)
    seed: int = 0
    mode: str = "full"
    weights_path: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.cascade()  # validates stage geometry

    def cascade(self) -> CascadeConfig:
        return CascadeConfig(
            num_stages=self.num_stages,
            beta=self.beta,
            upsample_stages=frozenset(self.upsample_stages),
            lowlevel_stage=self.lowlevel_stage,
            c_m=self.c_m,
        )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "clusters": str(self.schedule),
            "beta": self.beta,
            "stages": self.num_stages,
            "c_m": self.c_m,
            "c_s": self.c_s,
            "upsample_stages": sorted(self.upsample_stages),
            "lowlevel_stage": self.lowlevel_stage,
            "refs": self.references.mode,
            "delta": self.references.delta,
            "weights": self.weights_path,
            "encoder": {
                "output_channels": self.encoder.output_channels,
                "low_level_channels": self.encoder.low_level_channels,
                "num_random_layers": self.encoder.num_random_layers,
            },
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        cfg = cls()
        enc_raw = raw.get("encoder", {})
        try:
            encoder = EncoderConfig(
                output_channels=int(enc_raw.get("output_channels", cfg.encoder.output_channels)),
                low_level_channels=int(enc_raw.get("low_level_channels", cfg.encoder.low_level_channels)),
                seed=int(raw.get("seed", cfg.seed)),
                num_random_layers=int(enc_raw.get("num_random_layers", cfg.encoder.num_random_layers)),
            )
            return cls(
                schedule=ClusterSchedule.parse(str(raw.get("clusters", str(cfg.schedule)))),
                beta=float(raw.get("beta", cfg.beta)),
                num_stages=int(raw.get("stages", cfg.num_stages)),
                c_m=int(raw.get("c_m", cfg.c_m)),
                c_s=int(raw.get("c_s", cfg.c_s)),
                upsample_stages=tuple(raw.get("upsample_stages", cfg.upsample_stages)),
                lowlevel_stage=int(raw.get("lowlevel_stage", cfg.lowlevel_stage)),
                encoder=encoder,
                references=ReferenceSchedule(str(raw.get("refs", cfg.references.mode)),
                                             int(raw.get("delta", cfg.references.delta))),
                seed=int(raw.get("seed", cfg.seed)),
                mode=str(raw.get("mode", cfg.mode)).replace("-", "_"),
                weights_path=raw.get("weights"),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad configuration value: {exc}") from exc


def parameter_table(cfg: PipelineConfig, ref_counts: tuple[int, ...] = (1, 2)) -> list[ParamSpec]:
    """The declared parameter table for a config.

    Widths that scale with the number of references are emitted for each
    count in `ref_counts` (base mode uses 1 reference at t=2 and 2 after).
    Multi-frame runs with more references synthesize the extra arrays in
    seeded mode.
    """
    specs = list(encoder_param_table(cfg.encoder))
    n_k = len(cfg.schedule.counts)
    c = cfg.encoder.output_channels
    cascade = cfg.cascade()
    seen = set()
    for n_refs in ref_counts:
        entries = n_refs * n_k
        for spec in proto_param_table(entries, c, cfg.c_s, cfg.c_m):
            if spec.path not in seen:
                seen.add(spec.path)
                specs.append(spec)
        for stage in range(1, cfg.num_stages + 1):
            for spec in stage_param_table(stage, cascade, entries * c,
                                          cfg.encoder.low_level_channels):
                if spec.path not in seen:
                    seen.add(spec.path)
                    specs.append(spec)
    specs.extend(head_param_table(cfg.c_m))
    return specs


def make_store(cfg: PipelineConfig) -> WeightStore:
    if cfg.weights_path is not None:
        return WeightStore(bundle=load_weights(cfg.weights_path))
    return WeightStore(seed=cfg.seed)


def default_weight_bundle(cfg: PipelineConfig) -> WeightBundle:
    from .weights import init_weights

    return init_weights(cfg.seed, parameter_table(cfg))


def _upsample_labels(mask: LabelMask, out_h: int, out_w: int) -> LabelMask:
    up = np.repeat(np.repeat(mask.labels, STRIDE, axis=0), STRIDE, axis=1)
    return LabelMask(up[:out_h, :out_w], mask.num_objects)


def propagate_sequence(record: SequenceRecord, cfg: PipelineConfig,
                       store: WeightStore | None = None) -> list[LabelMask]:
    """Predict a label mask for every frame of a sequence.

    Returns one mask per frame in order; index 0 is the given first-frame
    annotation. Deterministic given (record, cfg, weights).
    """
    if store is None:
        store = make_store(cfg)
    first = read_mask(record.first_annotation)
    num_objects = record.num_objects
    cascade_cfg = cfg.cascade()

    features: dict[int, tuple[FeatureMap, FeatureMap]] = {}

    def encoded(t: int) -> tuple[FeatureMap, FeatureMap]:
        if t not in features:
            img = read_image(record.frame_paths[t - 1])
            features[t] = encode(img, cfg.encoder, store)
        return features[t]

    predictions: list[LabelMask] = [first]
    image_size = first.spatial

    for t in range(2, len(record.frame_paths) + 1):
        f_t, low = encoded(t)
        refs = select_references(cfg.references, t)
        f_refs, y_refs = [], []
        for r in refs:
            f_r, _ = encoded(r)
            y_r = downsample_mask(predictions[r - 1], STRIDE)
            if y_r.spatial != f_r.spatial:
                raise DataError(
                    f"sequence {record.sequence_id!r}: mask size for frame {r} does "
                    f"not match its image size"
                )
            f_refs.append(f_r)
            y_refs.append(y_r)

        proxies: list[ProxySet] = [
            build_adaptive_proxy(f_refs, y_refs, i, cfg.schedule, cfg.seed, ref_indices=refs)
            for i in range(num_objects + 1)
        ]

        if cfg.mode == "matching_only":
            coarse = nearest_proxy_classify(f_t, proxies)
            predictions.append(_upsample_labels(coarse, *image_size))
            continue

        proto_maps = [generate_proto_map(f_t, ps, store, c_s=cfg.c_s, c_m=cfg.c_m)
                      for ps in proxies]
        scores = cascade_calibrate(proto_maps, proxies, low, store, cascade_cfg, image_size)
        predictions.append(merge_masks(scores))

    return predictions


def default_config() -> PipelineConfig:
    return PipelineConfig()


def with_overrides(cfg: PipelineConfig, **kwargs) -> PipelineConfig:
    """Functional update helper used by the CLI flag overrides."""
    enc = kwargs.pop("encoder", None)
    if enc is not None:
        kwargs["encoder"] = enc
    if "seed" in kwargs and "encoder" not in kwargs:
        kwargs["encoder"] = replace(cfg.encoder, seed=kwargs["seed"])
    return replace(cfg, **kwargs)
