"""Segmentation quality metrics: region J, boundary F, their aggregates,
seen/unseen splits, robustness scores, and the temporal decay curve.

Averaging order is fixed and documented: per-frame values average into a
per-object mean, objects average into a per-sequence mean, sequences
average into the benchmark score. Frames where an object has no ground
truth are excluded from that object's mean. First-frame (given)
annotations never enter scoring; the evaluation harness drops them by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage

from .errors import DataError, DimensionError
from .grids import LabelMask


def region_j(pred: LabelMask, gt: LabelMask, object_index: int) -> float:
    """Intersection over union of one object's binary masks.

    Both empty counts as a perfect 1.0; exactly one empty counts as 0.0.
    """
    if pred.spatial != gt.spatial:
        raise DimensionError(f"mask sizes differ: {pred.spatial} vs {gt.spatial}")
    p = pred.labels == object_index
    g = gt.labels == object_index
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return float(np.count_nonzero(p & g) / union)


def _boundary(mask: np.ndarray) -> np.ndarray:
    """Object pixels with at least one 4-neighbor outside the object; the
    image border counts as outside."""
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return mask & ~interior


def default_boundary_tolerance(height: int, width: int) -> int:
    """Standard radius: ceil(0.008 * image diagonal)."""
    return int(np.ceil(0.008 * np.sqrt(height * height + width * width)))


def boundary_f(pred: LabelMask, gt: LabelMask, object_index: int,
               tolerance: int | None = None) -> float:
    """Boundary F-measure: precision and recall of boundary pixels matched
    within a Euclidean distance tolerance (exact distance transform, which
    equals the all-pairs definition)."""
    if pred.spatial != gt.spatial:
        raise DimensionError(f"mask sizes differ: {pred.spatial} vs {gt.spatial}")
    if tolerance is None:
        tolerance = default_boundary_tolerance(*pred.spatial)
    pb = _boundary(pred.labels == object_index)
    gb = _boundary(gt.labels == object_index)
    n_p, n_g = np.count_nonzero(pb), np.count_nonzero(gb)
    if n_p == 0 and n_g == 0:
        return 1.0
    if n_p == 0 or n_g == 0:
        return 0.0
    dist_to_g = ndimage.distance_transform_edt(~gb)
    dist_to_p = ndimage.distance_transform_edt(~pb)
    precision = np.count_nonzero(pb & (dist_to_g <= tolerance)) / n_p
    recall = np.count_nonzero(gb & (dist_to_p <= tolerance)) / n_g
    if precision + recall == 0.0:
        return 0.0
    return float(2.0 * precision * recall / (precision + recall))


@dataclass
class ObjectScore:
    """Per-frame J and F values of one object, parallel lists keyed by frame index."""

    frames: list[int] = field(default_factory=list)
    j: list[float] = field(default_factory=list)
    f: list[float] = field(default_factory=list)

    def add(self, frame: int, j: float, f: float) -> None:
        self.frames.append(frame)
        self.j.append(j)
        self.f.append(f)

    @property
    def mean_j(self) -> float:
        return float(np.mean(self.j))

    @property
    def mean_f(self) -> float:
        return float(np.mean(self.f))

    @property
    def jf(self) -> float:
        return 0.5 * (self.mean_j + self.mean_f)


@dataclass
class SequenceScore:
    sequence_id: str
    objects: dict[int, ObjectScore] = field(default_factory=dict)
    frame_count: int = 0

    def scored_objects(self) -> list[int]:
        return sorted(i for i, s in self.objects.items() if s.frames)

    @property
    def jf(self) -> float:
        objs = self.scored_objects()
        if not objs:
            raise ValueError(f"sequence {self.sequence_id} has no scored objects")
        return float(np.mean([self.objects[i].jf for i in objs]))

    def frame_jf_series(self) -> list[float]:
        """Mean (J+F)/2 over objects present, one value per scored frame, in order."""
        per_frame: dict[int, list[float]] = {}
        for score in self.objects.values():
            for frame, j, f in zip(score.frames, score.j, score.f):
                per_frame.setdefault(frame, []).append(0.5 * (j + f))
        return [float(np.mean(per_frame[t])) for t in sorted(per_frame)]


def score_sequence(sequence_id: str, preds: Sequence[LabelMask], gts: Mapping[int, LabelMask],
                   num_objects: int, skip_frames: Sequence[int] = (1,)) -> SequenceScore:
    """Score objects 1..N over all ground-truthed frames, excluding the given
    (first) annotation. `gts` maps 1-based frame indices to masks; `preds`
    is the full prediction list, index 0 = frame 1."""
    result = SequenceScore(sequence_id, {i: ObjectScore() for i in range(1, num_objects + 1)},
                           frame_count=len(preds))
    for t in sorted(gts):
        if t in skip_frames:
            continue
        pred, gt = preds[t - 1], gts[t]
        for i in range(1, num_objects + 1):
            if not np.any(gt.labels == i):
                continue  # absent ground-truth object: frame excluded for it
            result.objects[i].add(t, region_j(pred, gt, i), boundary_f(pred, gt, i))
    return result


def jf_mean(scores: Sequence[SequenceScore]) -> float:
    """Benchmark J&F: frames -> object -> objects -> sequences."""
    if len(scores) == 0:
        raise ValueError("no sequences to average")
    return float(np.mean([s.jf for s in scores]))


def _benchmark_mean(scores: Sequence[SequenceScore], attr: str) -> float:
    per_seq = []
    for s in scores:
        objs = s.scored_objects()
        if objs:
            per_seq.append(float(np.mean([getattr(s.objects[i], attr) for i in objs])))
    return float(np.mean(per_seq))


def j_mean(scores: Sequence[SequenceScore]) -> float:
    return _benchmark_mean(scores, "mean_j")


def f_mean(scores: Sequence[SequenceScore]) -> float:
    return _benchmark_mean(scores, "mean_f")


def split_scores(
    scores: Sequence[SequenceScore],
    manifest: Mapping[tuple[str, int], str],
) -> tuple[float | None, float | None, float | None, float | None]:
    """Per-partition means (J_seen, J_unseen, F_seen, F_unseen).

    The manifest maps (sequence id, object index) to "seen" or "unseen"
    and must cover every scored object. Empty partitions come back None.
    """
    j: dict[str, list[float]] = {"seen": [], "unseen": []}
    f: dict[str, list[float]] = {"seen": [], "unseen": []}
    for s in scores:
        for i in s.scored_objects():
            key = (s.sequence_id, i)
            if key not in manifest:
                raise DataError(f"object {i} of sequence {s.sequence_id!r} missing from category manifest")
            part = manifest[key]
            if part not in ("seen", "unseen"):
                raise DataError(f"bad category {part!r} for {key}")
            j[part].append(s.objects[i].mean_j)
            f[part].append(s.objects[i].mean_f)

    def mean_or_none(vals):
        return float(np.mean(vals)) if vals else None

    return (mean_or_none(j["seen"]), mean_or_none(j["unseen"]),
            mean_or_none(f["seen"]), mean_or_none(f["unseen"]))


def after_perturbation_accuracy(q_eps: Sequence[float]) -> float:
    """Mean score across the perturbation set."""
    if len(q_eps) == 0:
        raise ValueError("need at least one per-perturbation score")
    return float(np.mean(np.asarray(q_eps, dtype=np.float64)))


def perturbation_robustness(q_c: float, q_p: float) -> float:
    """Clean-minus-perturbed score; smaller means more robust."""
    return float(q_c - q_p)


@dataclass(frozen=True)
class RobustnessReport:
    """Clean score, per-perturbation scores in a fixed row order, and the
    derived Q_p / R_p. The optional identity row is a harness sanity check
    and never enters Q_p."""

    q_c: float
    per_perturbation: tuple[tuple[str, float], ...]
    q_p: float
    r_p: float
    identity_q: float | None = None

    def __post_init__(self):
        expect_qp = after_perturbation_accuracy([q for _, q in self.per_perturbation])
        if abs(self.q_p - expect_qp) > 1e-9:
            raise ValueError(f"Q_p {self.q_p} inconsistent with row mean {expect_qp}")
        if abs(self.r_p - (self.q_c - self.q_p)) > 1e-9:
            raise ValueError("R_p must equal Q_c - Q_p")

    @classmethod
    def build(cls, q_c: float, rows: Sequence[tuple[str, float]],
              identity_q: float | None = None) -> "RobustnessReport":
        q_p = after_perturbation_accuracy([q for _, q in rows])
        return cls(q_c, tuple(rows), q_p, perturbation_robustness(q_c, q_p), identity_q)


def write_score_csv(scores: Sequence[SequenceScore], path,
                    splits: tuple[float | None, float | None, float | None, float | None] | None = None) -> None:
    """Per-sequence, per-object means plus a benchmark summary row."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sequence", "object", "J", "F", "JF"])
        for s in scores:
            for i in s.scored_objects():
                o = s.objects[i]
                w.writerow([s.sequence_id, i, f"{o.mean_j:.6f}", f"{o.mean_f:.6f}", f"{o.jf:.6f}"])
        w.writerow(["__mean__", "", f"{j_mean(scores):.6f}", f"{f_mean(scores):.6f}",
                    f"{jf_mean(scores):.6f}"])
        if splits is not None:
            names = ["J_seen", "J_unseen", "F_seen", "F_unseen"]
            for name, value in zip(names, splits):
                w.writerow([f"__{name}__", "", "", "", "" if value is None else f"{value:.6f}"])


def write_decay_csv(curve: Sequence[tuple[float, float]], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["position_pct", "mean_jf"])
        for center, mean in curve:
            w.writerow([f"{center:.3f}", f"{mean:.6f}"])


def temporal_decay_curve(series: Sequence[Sequence[float]], bins: int) -> list[tuple[float, float]]:
    """Bucket per-frame scores by normalized position and average per bucket.

    A frame at index i of an n-frame series sits at i/(n-1) (0 for a
    single frame). Buckets are [b/B, (b+1)/B), the last one closed.
    Returns (bin center in percent, mean) pairs; empty buckets yield NaN.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    buckets: list[list[float]] = [[] for _ in range(bins)]
    for seq in series:
        n = len(seq)
        if n == 0:
            raise ValueError("every sequence needs at least one scored frame")
        for i, v in enumerate(seq):
            pos = 0.0 if n == 1 else i / (n - 1)
            b = min(int(pos * bins), bins - 1)
            buckets[b].append(float(v))
    out = []
    for b in range(bins):
        center = 100.0 * (b + 0.5) / bins
        out.append((center, float(np.mean(buckets[b])) if buckets[b] else float("nan")))
    return out
