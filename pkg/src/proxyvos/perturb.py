"""Image perturbations for the robustness benchmark.

Six perturbations ship by default: Gaussian noise (sigma 10 and 30),
salt-and-pepper noise (1000 and 5000 points), and Gaussian blur (7x7 and
9x9 kernels). Every random draw comes from a Philox stream keyed by a
per-frame sub-seed, so perturbing a dataset is reproducible and
independent of processing order. Golden hashes are taken over decoded
pixel buffers, not PNG byte streams, since PNG encoders differ.
"""

from __future__ import annotations

import hashlib
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .grids import Image
from .rng import derive_seed, generator, normals

KINDS = ("gaussian_noise", "salt_pepper", "gaussian_blur", "identity")


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str
    parameter: float | int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "gaussian_noise" and (self.parameter is None or self.parameter < 0):
            raise ValueError("gaussian_noise needs sigma >= 0")
        if self.kind == "salt_pepper" and (self.parameter is None or int(self.parameter) < 0):
            raise ValueError("salt_pepper needs a point count >= 0")
        if self.kind == "gaussian_blur":
            k = int(self.parameter) if self.parameter is not None else 0
            if k < 3 or k % 2 == 0:
                raise ValueError("gaussian_blur needs an odd kernel size >= 3")

    def label(self) -> str:
        if self.kind == "identity":
            return "identity"
        if self.kind == "gaussian_blur":
            k = int(self.parameter)
            return f"gaussian_blur_{k}x{k}"
        return f"{self.kind}_{self.parameter:g}"


def noise_field(height: int, width: int, sigma: float, seed: int) -> np.ndarray:
    """The raw normal(0, sigma) field added by gaussian_noise, before
    rounding and clamping. Draw order: row-major cells, channel fastest."""
    rng = generator(seed)
    return sigma * normals(rng, height * width * 3).reshape(height, width, 3)


def gaussian_noise(x: Image, sigma: float, seed: int) -> Image:
    """Additive zero-mean Gaussian intensity noise, clamped to [0, 255]."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return x
    noisy = x.data.astype(np.float64) + noise_field(x.height, x.width, sigma, seed)
    # floor(v + 0.5) matches half-away-from-zero on every value that
    # survives the clamp, and is branch-free
    return Image(np.clip(np.floor(noisy + 0.5), 0, 255).astype(np.uint8))


def salt_pepper(x: Image, n: int, seed: int) -> Image:
    """Set n distinct pixels (uniform, without replacement) to pure white or
    black with equal probability.

    Locations come from a partial Fisher-Yates shuffle driven by one
    uniform draw per step; colors use one further draw per chosen pixel,
    in selection order.
    """
    if n < 0:
        raise ValueError("point count must be >= 0")
    total = x.height * x.width
    n = min(int(n), total)
    if n == 0:
        return x
    rng = generator(seed)
    pool = np.arange(total, dtype=np.int64)
    steps = rng.random(n)
    for i in range(n):
        j = i + int(steps[i] * (total - i))
        pool[i], pool[j] = pool[j], pool[i]
    chosen = pool[:n]
    white = rng.random(n) < 0.5
    out = x.data.reshape(-1, 3).copy()
    out[chosen[white]] = 255
    out[chosen[~white]] = 0
    return Image(out.reshape(x.height, x.width, 3))


def blur_sigma(k: int) -> float:
    """Default blur sigma for kernel size k (1.4 at k=7, 1.7 at k=9)."""
    return 0.3 * ((k - 1) * 0.5 - 1.0) + 0.8


def blur_kernel(k: int, sigma: float | None = None) -> np.ndarray:
    if k < 3 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 3, got {k}")
    if sigma is None:
        sigma = blur_sigma(k)
    j = np.arange(k, dtype=np.float64)
    g = np.exp(-((j - (k - 1) / 2.0) ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def gaussian_blur(x: Image, k: int, sigma: float | None = None) -> Image:
    """Separable Gaussian blur with reflect-101 borders, horizontal pass
    first, rounded half-away-from-zero back to 8 bits."""
    g = blur_kernel(k, sigma)
    pad = k // 2
    data = x.data.astype(np.float64)

    padded = np.pad(data, ((0, 0), (pad, pad), (0, 0)), mode="reflect") \
        if x.width > 1 else np.pad(data, ((0, 0), (pad, pad), (0, 0)), mode="edge")
    horiz = np.zeros_like(data)
    for t in range(k):
        horiz += g[t] * padded[:, t : t + x.width, :]

    padded = np.pad(horiz, ((pad, pad), (0, 0), (0, 0)), mode="reflect") \
        if x.height > 1 else np.pad(horiz, ((pad, pad), (0, 0), (0, 0)), mode="edge")
    out = np.zeros_like(data)
    for t in range(k):
        out += g[t] * padded[t : t + x.height, :, :]

    # all values are non-negative, so half-away-from-zero is floor(x + 0.5)
    return Image(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


def apply_perturbation(x: Image, spec: PerturbationSpec, seed: int | None = None) -> Image:
    """Dispatch one spec onto one frame; `seed` overrides spec.seed (the
    dataset walker passes per-frame sub-seeds)."""
    s = spec.seed if seed is None else seed
    if spec.kind == "identity":
        return x
    if spec.kind == "gaussian_noise":
        return gaussian_noise(x, float(spec.parameter), s)
    if spec.kind == "salt_pepper":
        return salt_pepper(x, int(spec.parameter), s)
    return gaussian_blur(x, int(spec.parameter))


def frame_digest(x: Image) -> str:
    """Golden hash of a frame's decoded pixel buffer."""
    return hashlib.sha256(x.data.tobytes()).hexdigest()


def perturb_dataset(root: str | Path, spec: PerturbationSpec, out_root: str | Path) -> int:
    """Perturb every frame of every sequence under `root` into `out_root`.

    Annotation masks are copied byte for byte. The identity spec copies
    frames byte for byte too; other kinds re-encode frames as PNG (a .jpg
    source keeps its stem but gains a .png extension). Per-frame sub-seeds
    derive from (spec.seed, sequence id, frame position), so output does
    not depend on processing order. Returns the number of frames written.
    """
    from .dataset import load_dataset, read_image, write_image

    root, out_root = Path(root), Path(out_root)
    records = load_dataset(root)
    written = 0
    for rec in records:
        frame_dir = out_root / "JPEGImages" / rec.sequence_id
        frame_dir.mkdir(parents=True, exist_ok=True)
        for pos, src in enumerate(rec.frame_paths, start=1):
            if spec.kind == "identity":
                shutil.copyfile(src, frame_dir / src.name)
            else:
                try:
                    img = read_image(src)
                except DataError:
                    raise
                except OSError as exc:
                    raise DataError(f"unreadable frame {src}: {exc}") from exc
                sub = derive_seed(spec.seed, rec.sequence_id, pos)
                write_image(frame_dir / (src.stem + ".png"), apply_perturbation(img, spec, sub))
            written += 1
        ann_dir = out_root / "Annotations" / rec.sequence_id
        ann_dir.mkdir(parents=True, exist_ok=True)
        for ann in sorted(rec.annotation_paths.values()):
            shutil.copyfile(ann, ann_dir / ann.name)
    return written
