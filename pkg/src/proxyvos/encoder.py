"""Deterministic surrogate encoder producing stride-4 feature maps.

Stands in for a pretrained backbone: handcrafted color and gradient
channels give genuinely discriminative features on synthetic scenes, and
seeded random convolutions mix them so downstream matching is exercised
with realistic channel counts. No training anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import FeatureMap, Image
from .netops import conv2d, relu
from .weights import ParamSpec, WeightStore

STRIDE = 4

# classic Sobel taps; gradients taken per RGB channel on the normalized image
_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T

BASE_CHANNELS = 9  # 3 normalized colors + |Gx| and |Gy| for each


@dataclass(frozen=True)
class EncoderConfig:
    output_channels: int = 32
    low_level_channels: int = 8
    seed: int = 0
    num_random_layers: int = 2

    def __post_init__(self):
        if self.output_channels < 4:
            raise ValueError("output_channels must be >= 4")
        if self.low_level_channels < 1 or self.num_random_layers < 1:
            raise ValueError("channel and layer counts must be positive")


def encoder_param_table(cfg: EncoderConfig) -> list[ParamSpec]:
    specs = []
    cin = BASE_CHANNELS
    for j in range(cfg.num_random_layers):
        cout = cfg.output_channels
        fan = 9 * cin
        specs.append(ParamSpec(f"encoder/layer{j}/kernel", (3, 3, cin, cout), fan))
        specs.append(ParamSpec(f"encoder/layer{j}/bias", (cout,), fan))
        cin = cout
    fan = 9 * BASE_CHANNELS
    specs.append(ParamSpec("encoder/lowlevel/kernel", (3, 3, BASE_CHANNELS, cfg.low_level_channels), fan))
    specs.append(ParamSpec("encoder/lowlevel/bias", (cfg.low_level_channels,), fan))
    return specs


def _base_features(x: Image) -> np.ndarray:
    """Normalized RGB plus per-channel Sobel gradient magnitudes, full resolution."""
    rgb = x.data.astype(np.float64) / 255.0
    kx = np.zeros((3, 3, 3, 3))
    ky = np.zeros((3, 3, 3, 3))
    for c in range(3):
        kx[:, :, c, c] = _SOBEL_X
        ky[:, :, c, c] = _SOBEL_Y
    gx = np.abs(conv2d(rgb, kx))
    gy = np.abs(conv2d(rgb, ky))
    return np.concatenate([rgb, gx, gy], axis=2)


def _avg_pool_stride4(x: np.ndarray) -> np.ndarray:
    """Average pooling into ceil(H/4) x ceil(W/4) blocks; partial edge blocks
    average over the pixels they actually cover."""
    h, w, _ = x.shape
    row_starts = np.arange(0, h, STRIDE)
    col_starts = np.arange(0, w, STRIDE)
    pooled = np.add.reduceat(x, row_starts, axis=0)
    pooled = np.add.reduceat(pooled, col_starts, axis=1)
    row_sizes = np.minimum(row_starts + STRIDE, h) - row_starts
    col_sizes = np.minimum(col_starts + STRIDE, w) - col_starts
    return pooled / (row_sizes[:, None, None] * col_sizes[None, :, None])


def encode(x: Image, cfg: EncoderConfig, store: WeightStore) -> tuple[FeatureMap, FeatureMap]:
    """Image -> (stride-4 feature map, stride-4 low-level map), deterministic."""
    pooled = _avg_pool_stride4(_base_features(x))

    table = {spec.path: spec for spec in encoder_param_table(cfg)}
    low = relu(conv2d(pooled, store.get(table["encoder/lowlevel/kernel"]),
                      store.get(table["encoder/lowlevel/bias"])))
    h = pooled
    for j in range(cfg.num_random_layers):
        h = relu(conv2d(h, store.get(table[f"encoder/layer{j}/kernel"]),
                        store.get(table[f"encoder/layer{j}/bias"])))
    return FeatureMap(h.astype(np.float32)), FeatureMap(low.astype(np.float32))


def feature_size(image_h: int, image_w: int) -> tuple[int, int]:
    return -(-image_h // STRIDE), -(-image_w // STRIDE)
