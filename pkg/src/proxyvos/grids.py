"""Dense map primitives: images, feature maps, label masks, condition codes.

Layout convention for the whole package: channel-last, row-major. Values
are stored as float32; reductions (pooling, interpolation) accumulate in
float64 so results are reproducible bit for bit. All operations are pure
functions over effectively immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Image:
    """H x W x 3 frame of 8-bit RGB intensities."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype != np.uint8:
            # casting would wrap silently; reject out-of-range values instead
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("image intensities must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.ascontiguousarray(arr)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DimensionError(f"image must be (H, W, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError("image must have positive spatial size")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class FeatureMap:
    """H x W x C map of finite float32 values."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise DimensionError(f"feature map must be (H, W, C), got {arr.shape}")
        if min(arr.shape) < 1:
            raise DimensionError("feature map must have positive extent on every axis")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature map contains NaN or Inf")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def spatial(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]


@dataclass(frozen=True)
class LabelMask:
    """H x W integer label map over objects {0..num_objects}, 0 = background."""

    labels: np.ndarray
    num_objects: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.labels, dtype=np.int32)
        if arr.ndim != 2:
            raise DimensionError(f"label mask must be (H, W), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError("label mask must have positive spatial size")
        if self.num_objects < 0:
            raise ValueError("num_objects must be non-negative")
        if arr.size and (arr.min() < 0 or arr.max() > self.num_objects):
            raise ValueError(
                f"labels must lie in [0, {self.num_objects}], "
                f"got range [{arr.min()}, {arr.max()}]"
            )
        object.__setattr__(self, "labels", _freeze(arr))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def spatial(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class ConditionCode:
    """Per-channel modulation weights, length = channel count of the map it conditions."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float32)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise DimensionError(f"condition code must be a non-empty vector, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("condition code contains NaN or Inf")
        object.__setattr__(self, "values", _freeze(arr))

    def __len__(self) -> int:
        return self.values.shape[0]


def channel_concat(maps: Sequence[FeatureMap]) -> FeatureMap:
    """Concatenate maps along the channel axis, preserving list order."""
    if len(maps) == 0:
        raise ValueError("channel_concat needs at least one map")
    spatial = maps[0].spatial
    for m in maps[1:]:
        if m.spatial != spatial:
            raise DimensionError(f"spatial size mismatch: {m.spatial} vs {spatial}")
    return FeatureMap(np.concatenate([m.data for m in maps], axis=2))


def channelwise_modulate(z_in: FeatureMap, w: ConditionCode) -> FeatureMap:
    """Scale channel m of z_in by w[m] at every cell."""
    if len(w) != z_in.channels:
        raise DimensionError(
            f"code length {len(w)} does not match {z_in.channels} channels"
        )
    return FeatureMap(z_in.data * w.values[None, None, :])


def elementwise_mask(f: FeatureMap, indicator: LabelMask, object_index: int) -> FeatureMap:
    """Keep f where the indicator equals object_index, zero elsewhere."""
    if indicator.spatial != f.spatial:
        raise DimensionError(
            f"mask size {indicator.spatial} does not match map size {f.spatial}"
        )
    if object_index > indicator.num_objects or object_index < 0:
        raise ValueError(
            f"object {object_index} outside [0, {indicator.num_objects}]"
        )
    keep = (indicator.labels == object_index)[:, :, None]
    return FeatureMap(np.where(keep, f.data, np.float32(0.0)))


def downsample_mask(y: LabelMask, factor: int) -> LabelMask:
    """Nearest-neighbor downsampling, top-left anchor, ceil-divided sizes."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    return LabelMask(y.labels[::factor, ::factor].copy(), y.num_objects)


def bilinear_resize(f: FeatureMap, out_h: int, out_w: int) -> FeatureMap:
    """Bilinear sampling with align-corners-false coordinates and edge clamping."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {out_h}x{out_w}")
    in_h, in_w = f.spatial
    src = f.data.astype(np.float64)

    ys = np.clip((np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5, 0.0, in_h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    top = src[y0][:, x0] * (1.0 - wx) + src[y0][:, x1] * wx
    bot = src[y1][:, x0] * (1.0 - wx) + src[y1][:, x1] * wx
    out = top * (1.0 - wy) + bot * wy
    return FeatureMap(out.astype(np.float32))


def global_avg_pool(z: FeatureMap) -> ConditionCode:
    """Per-channel mean over all cells, accumulated in float64."""
    means = z.data.astype(np.float64).mean(axis=(0, 1))
    return ConditionCode(means.astype(np.float32))
