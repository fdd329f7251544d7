"""Dataset ingestion and mask I/O.

Layout follows the common VOS convention so real data drops in:

    <root>/JPEGImages/<sequence>/<frame>.png|.jpg
    <root>/Annotations/<sequence>/<frame>.png   (indexed-palette PNG,
                                                 pixel value = object label)

Frames sort by numeric stem. The first frame must carry an annotation;
later annotations are optional and only used for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import DataError, FormatError
from .grids import Image, LabelMask

FRAME_SUFFIXES = (".png", ".jpg", ".jpeg")


def _build_palette() -> bytes:
    """256-entry palette with visually distinct low indices (0 = black)."""
    base = [
        (0, 0, 0), (230, 25, 75), (60, 180, 75), (255, 225, 25),
        (0, 130, 200), (245, 130, 48), (145, 30, 180), (70, 240, 240),
        (240, 50, 230), (210, 245, 60), (250, 190, 190), (0, 128, 128),
        (230, 190, 255), (170, 110, 40), (255, 250, 200), (128, 0, 0),
    ]
    table = list(base)
    for i in range(len(base), 256):
        table.append(((i * 53) % 256, (i * 97) % 256, (i * 151) % 256))
    return bytes(v for rgb in table for v in rgb)


MASK_PALETTE = _build_palette()


@dataclass(frozen=True)
class SequenceRecord:
    sequence_id: str
    frame_paths: tuple[Path, ...]
    first_annotation: Path
    annotation_paths: dict[str, Path]  # frame stem -> mask path
    num_objects: int

    @property
    def frame_stems(self) -> list[str]:
        return [p.stem for p in self.frame_paths]


def _numeric_stem(path: Path) -> int:
    try:
        return int(path.stem)
    except ValueError as exc:
        raise DataError(f"frame stem {path.stem!r} is not numeric ({path})") from exc


def read_image(path: str | Path) -> Image:
    path = Path(path)
    try:
        with PILImage.open(path) as img:
            rgb = img.convert("RGB")
            return Image(np.asarray(rgb, dtype=np.uint8))
    except FileNotFoundError as exc:
        raise DataError(f"missing frame image: {path}") from exc
    except OSError as exc:
        raise FormatError(f"cannot decode image {path}: {exc}") from exc


def write_image(path: str | Path, image: Image) -> None:
    PILImage.fromarray(image.data, mode="RGB").save(Path(path), format="PNG")


def read_mask(path: str | Path, num_objects: int | None = None) -> LabelMask:
    """Read an indexed-palette PNG label mask. Any other mode is a format error."""
    path = Path(path)
    try:
        with PILImage.open(path) as img:
            if img.mode != "P":
                raise FormatError(f"mask {path} is not an indexed-palette PNG (mode {img.mode})")
            labels = np.asarray(img, dtype=np.int32)
    except FileNotFoundError as exc:
        raise DataError(f"missing mask: {path}") from exc
    except FormatError:
        raise
    except OSError as exc:
        raise FormatError(f"cannot decode mask {path}: {exc}") from exc
    if num_objects is None:
        num_objects = int(labels.max()) if labels.size else 0
    return LabelMask(labels, num_objects)


def write_mask(path: str | Path, mask: LabelMask) -> None:
    if mask.labels.max(initial=0) > 255:
        raise DataError("indexed PNG masks support at most 255 objects")
    img = PILImage.fromarray(mask.labels.astype(np.uint8), mode="P")
    img.putpalette(MASK_PALETTE)
    img.save(Path(path), format="PNG")


def load_dataset(root: str | Path) -> list[SequenceRecord]:
    """Scan a dataset root into sequence records, sorted by sequence id."""
    root = Path(root)
    frames_root = root / "JPEGImages"
    ann_root = root / "Annotations"
    if not frames_root.is_dir():
        return []
    records = []
    for seq_dir in sorted(p for p in frames_root.iterdir() if p.is_dir()):
        seq = seq_dir.name
        frames = [p for p in seq_dir.iterdir() if p.suffix.lower() in FRAME_SUFFIXES]
        frames.sort(key=_numeric_stem)
        if len(frames) < 2:
            raise DataError(f"sequence {seq!r} has {len(frames)} frames, need at least 2")
        ann_dir = ann_root / seq
        annotations = {}
        if ann_dir.is_dir():
            annotations = {p.stem: p for p in ann_dir.glob("*.png")}
        first_stem = frames[0].stem
        if first_stem not in annotations:
            raise DataError(f"sequence {seq!r} is missing the first-frame annotation "
                            f"Annotations/{seq}/{first_stem}.png")
        first_ann = annotations[first_stem]
        num_objects = int(read_mask(first_ann).labels.max())
        records.append(SequenceRecord(seq, tuple(frames), first_ann, annotations, num_objects))
    return records


def save_predictions(out_root: str | Path, sequence_id: str,
                     stems: list[str], masks: list[LabelMask]) -> None:
    """Write per-frame prediction masks mirroring the Annotations layout."""
    if len(stems) != len(masks):
        raise ValueError("one mask per frame stem required")
    seq_dir = Path(out_root) / sequence_id
    seq_dir.mkdir(parents=True, exist_ok=True)
    for stem, mask in zip(stems, masks):
        write_mask(seq_dir / f"{stem}.png", mask)


def load_predictions(pred_root: str | Path, record: SequenceRecord) -> list[LabelMask]:
    """Read back predictions for every frame of a sequence."""
    seq_dir = Path(pred_root) / record.sequence_id
    masks = []
    for stem in record.frame_stems:
        path = seq_dir / f"{stem}.png"
        if not path.is_file():
            raise DataError(f"missing prediction {path}")
        masks.append(read_mask(path, record.num_objects))
    return masks


def load_category_manifest(path: str | Path) -> dict[tuple[str, int], str]:
    """CSV manifest ``sequence,object,seen|unseen`` (header optional)."""
    manifest = {}
    lines = Path(path).read_text().splitlines()
    for ln in lines:
        ln = ln.strip()
        if not ln or ln.lower().startswith("sequence,"):
            continue
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) != 3 or parts[2] not in ("seen", "unseen"):
            raise FormatError(f"bad manifest line: {ln!r}")
        manifest[(parts[0], int(parts[1]))] = parts[2]
    return manifest
