"""Deterministic randomness for every stochastic corner of the package.

All draws come from numpy's Philox engine, a publicly specified
counter-based 64-bit generator, keyed by sub-seeds derived with BLAKE2b.
Sub-seeds are derived per task (per cluster run, per frame, per parameter
array), never drawn from a shared stream, so results are independent of
execution order and of how much work ran before.

Derivation scheme (fixed, do not change): an 8-byte BLAKE2b digest over
the root seed (8 bytes little-endian) followed by each part, where an
integer part is encoded as ``b"i" + 8 bytes LE`` and a string part as
``b"s" + 4-byte LE length + UTF-8 bytes``.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(root: int, *parts: int | str) -> int:
    """Mix a root seed with identifying parts into a fresh 64-bit sub-seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update((root & MASK64).to_bytes(8, "little"))
    for p in parts:
        if isinstance(p, str):
            raw = p.encode("utf-8")
            h.update(b"s" + len(raw).to_bytes(4, "little") + raw)
        elif isinstance(p, (int, np.integer)):
            h.update(b"i" + (int(p) & MASK64).to_bytes(8, "little"))
        else:
            raise TypeError(f"seed parts must be int or str, got {type(p).__name__}")
    return int.from_bytes(h.digest(), "little")


def generator(seed: int) -> np.random.Generator:
    """Philox generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=seed & MASK64))


def normals(rng: np.random.Generator, count: int) -> np.ndarray:
    """Standard normals via Box-Muller over Philox uniform doubles.

    Uniforms are consumed pairwise in stream order; each pair (u1, u2)
    yields the cosine branch then the sine branch, so draw order is fully
    specified and reproducible in any language with a Philox
    implementation.
    """
    if count == 0:
        return np.zeros(0)
    pairs = (count + 1) // 2
    u = rng.random(2 * pairs)
    u1 = 1.0 - u[0::2]  # (0, 1]: keeps log() finite
    u2 = u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return z[:count]
