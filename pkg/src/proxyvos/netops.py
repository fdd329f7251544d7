"""Small network primitives: convolution, linear layers, residual blocks.

Everything computes in float64 with a fixed accumulation order (plain
einsum, no BLAS dispatch) so outputs are bit-reproducible across hosts
and thread counts. Kernels are laid out (kh, kw, c_in, c_out); linear
weights (d_in, d_out).
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _pad_reflect(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    # reflect-101 borders; axes of extent 1 fall back to edge replication,
    # which is the only consistent reflection there
    mode_h = "reflect" if x.shape[0] > 1 else "edge"
    mode_w = "reflect" if x.shape[1] > 1 else "edge"
    x = np.pad(x, ((ph, ph), (0, 0), (0, 0)), mode=mode_h)
    return np.pad(x, ((0, 0), (pw, pw), (0, 0)), mode=mode_w)


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Same-size 2-D convolution (cross-correlation) with reflect padding.

    x: (H, W, C_in) array, any float dtype; returns float64 (H, W, C_out).
    Taps accumulate in a fixed (dy, dx) scan order.
    """
    if x.ndim != 3 or kernel.ndim != 4:
        raise DimensionError("conv2d expects (H,W,C) input and (kh,kw,cin,cout) kernel")
    kh, kw, cin, cout = kernel.shape
    if x.shape[2] != cin:
        raise DimensionError(f"input has {x.shape[2]} channels, kernel expects {cin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("kernel extents must be odd")
    h, w = x.shape[:2]
    xp = _pad_reflect(np.asarray(x, dtype=np.float64), kh // 2, kw // 2)
    k64 = np.asarray(kernel, dtype=np.float64)
    out = np.zeros((h, w, cout))
    for dy in range(kh):
        for dx in range(kw):
            view = xp[dy : dy + h, dx : dx + w, :]
            out += np.einsum("hwc,co->hwo", view, k64[dy, dx], optimize=False)
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)[None, None, :]
    return out


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Vector-matrix product in float64: (d_in,) @ (d_in, d_out) + bias."""
    if x.shape[0] != weight.shape[0]:
        raise DimensionError(f"vector length {x.shape[0]} vs weight rows {weight.shape[0]}")
    out = np.einsum(
        "i,io->o",
        np.asarray(x, dtype=np.float64),
        np.asarray(weight, dtype=np.float64),
        optimize=False,
    )
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)
    return out


def mlp2(x: np.ndarray, w1, b1, w2, b2) -> np.ndarray:
    """Two-layer perceptron with a ReLU between layers."""
    return linear(relu(linear(x, w1, b1)), w2, b2)


def bottleneck_block(
    x: np.ndarray,
    k1, b1, k2, b2, k3, b3,
    skip_kernel=None, skip_bias=None,
) -> np.ndarray:
    """1x1 conv, ReLU, 3x3 conv, ReLU, 1x1 conv, plus an additive skip.

    The skip is the identity when channel counts agree, otherwise a 1x1
    projection. No activation after the addition, so a zero-weight main
    path leaves the skip untouched.
    """
    main = conv2d(relu(conv2d(relu(conv2d(x, k1, b1)), k2, b2)), k3, b3)
    if skip_kernel is not None:
        skip = conv2d(x, skip_kernel, skip_bias)
    else:
        if x.shape[2] != main.shape[2]:
            raise DimensionError("identity skip needs matching channel counts")
        skip = np.asarray(x, dtype=np.float64)
    return main + skip
