"""Synthetic fixture generator: rigid colored squares on a plain background.

Squares live in separate horizontal bands and slide sideways by whole
feature-stride steps (4 px per frame), so stride-4 features shift by
exactly one cell per frame and ground truth stays pixel-exact. Ground
truth masks are written for every frame, which lets the same clip drive
both inference and evaluation.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import write_image, write_mask
from .grids import Image, LabelMask
from .rng import derive_seed, generator

BACKGROUND = (28, 28, 30)
COLORS = (
    (200, 40, 40),
    (40, 170, 60),
    (50, 80, 200),
    (210, 190, 40),
    (170, 60, 190),
    (40, 190, 190),
)
STEP = 4  # per-frame motion, one stride-4 feature cell


def synth_sequence(frames: int, objects: int, seed: int, size: int = 96
                   ) -> tuple[list[Image], list[LabelMask]]:
    """Render one clip; returns per-frame images and exact label masks."""
    if frames < 2:
        raise ValueError("need at least 2 frames")
    if not 1 <= objects <= len(COLORS):
        raise ValueError(f"objects must be in 1..{len(COLORS)}")
    side = 6 * STEP
    margin = 4 * STEP  # larger than the encoder's receptive halo
    min_size = 2 * margin + objects * side + (objects - 1) * 4 * STEP
    if size < min_size:
        raise ValueError(f"size {size} too small for {objects} objects, need >= {min_size}")

    rng = generator(derive_seed(seed, "synth"))

    # evenly spaced bands, everything snapped to the stride grid
    gap = (size - 2 * margin - objects * side) // max(objects - 1, 1)
    span = size - 2 * margin - side
    n_positions = span // STEP + 1
    tops, lefts, vels = [], [], []
    for i in range(objects):
        tops.append((margin + i * (side + gap)) // STEP * STEP)
        lefts.append(margin + STEP * int(rng.integers(n_positions)))
        vels.append(STEP if rng.random() < 0.5 else -STEP)

    images, masks = [], []
    xs = list(lefts)
    for _ in range(frames):
        frame = np.empty((size, size, 3), dtype=np.uint8)
        frame[:] = BACKGROUND
        labels = np.zeros((size, size), dtype=np.int32)
        for i in range(objects):
            x, y = xs[i], tops[i]
            frame[y : y + side, x : x + side] = COLORS[i]
            labels[y : y + side, x : x + side] = i + 1
        images.append(Image(frame))
        masks.append(LabelMask(labels, objects))
        for i in range(objects):
            nxt = xs[i] + vels[i]
            if nxt < margin or nxt + side > size - margin:
                vels[i] = -vels[i]
                nxt = xs[i] + vels[i]
            xs[i] = nxt
    return images, masks


def synth_dataset(out_root: str | Path, frames: int = 5, objects: int = 2,
                  seed: int = 0, size: int = 96, sequence_id: str | None = None) -> str:
    """Write a synthetic clip in the standard dataset layout. Returns the
    sequence id."""
    out_root = Path(out_root)
    seq = sequence_id or f"clip{seed:04d}"
    frame_dir = out_root / "JPEGImages" / seq
    ann_dir = out_root / "Annotations" / seq
    frame_dir.mkdir(parents=True, exist_ok=True)
    ann_dir.mkdir(parents=True, exist_ok=True)
    images, masks = synth_sequence(frames, objects, seed, size)
    for t, (img, mask) in enumerate(zip(images, masks)):
        stem = f"{t:05d}"
        write_image(frame_dir / f"{stem}.png", img)
        write_mask(ann_dir / f"{stem}.png", mask)
    return seq
