"""Object proxy construction: pixel-level, object-level, clustered, grid-sampled.

A proxy entry is the representation of one object from one reference at
one granularity K: the support pixels' embedding vectors are clustered
with K-means and each pixel's cell takes its centroid (K=1 collapses to
the masked mean; the sentinel ``K_FULL`` skips clustering and keeps the
raw embeddings, i.e. pixel-level matching).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grids import FeatureMap, LabelMask, elementwise_mask
from .rng import derive_seed, generator
from .weights import WeightBundle

K_FULL = 0  # sentinel granularity: one centroid per support pixel

DEFAULT_MAX_ITER = 20
DEFAULT_TOL = 1e-4


@dataclass(frozen=True)
class ClusterSchedule:
    """Ordered list of granularities K; K_FULL means K = |support|."""

    counts: tuple[int, ...] = (1, 16, K_FULL)

    def __post_init__(self):
        if len(self.counts) == 0:
            raise ValueError("cluster schedule must be non-empty")
        for k in self.counts:
            if k != K_FULL and k < 1:
                raise ValueError(f"cluster counts must be >= 1 or K_FULL, got {k}")

    @classmethod
    def parse(cls, text: str) -> "ClusterSchedule":
        counts = []
        for tok in text.split(","):
            tok = tok.strip().lower()
            counts.append(K_FULL if tok == "full" else int(tok))
        return cls(tuple(counts))

    def __str__(self) -> str:
        return ",".join("full" if k == K_FULL else str(k) for k in self.counts)


@dataclass(frozen=True)
class ClusterResult:
    centroids: np.ndarray   # (K, C) float64
    assignment: np.ndarray  # (N,) int64, nearest centroid, ties to lowest index
    inertia: float


@dataclass(frozen=True)
class ProxyEntry:
    """One (reference, K) slot of a proxy set."""

    ref_index: int
    k: int  # schedule value; K_FULL kept as-is
    proxy_map: FeatureMap
    centroids: np.ndarray             # (n_distinct, C) float32
    members: tuple[np.ndarray, ...]   # flat support indices per distinct centroid
    absent: bool


@dataclass(frozen=True)
class ProxySet:
    object_index: int
    entries: tuple[ProxyEntry, ...]


def object_embedding(f_r: FeatureMap, y_r: LabelMask, object_index: int) -> FeatureMap:
    """Reference features masked to one object's support (Eq. of the basic embedding)."""
    return elementwise_mask(f_r, y_r, object_index)


def assign_points(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest-centroid assignment by squared L2; ties go to the lowest index."""
    d2 = _sq_dists(points, centroids)
    return np.argmin(d2, axis=1)


def update_centroids(points: np.ndarray, assignment: np.ndarray, k: int,
                     fallback: np.ndarray | None = None) -> np.ndarray:
    """Mean of each cluster's members; empty clusters keep their fallback centroid."""
    c = points.shape[1]
    out = np.zeros((k, c))
    for j in range(k):
        members = points[assignment == j]
        if len(members):
            out[j] = members.mean(axis=0)
        elif fallback is not None:
            out[j] = fallback[j]
    return out


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # expanded difference keeps the summation order identical to a per-pair
    # np.sum over the channel axis, which the matching oracles rely on
    diff = points[:, None, :] - centroids[None, :, :]
    return np.sum(diff * diff, axis=-1)


def _inertia(points: np.ndarray, centroids: np.ndarray, assignment: np.ndarray) -> float:
    diff = points - centroids[assignment]
    return float(np.sum(diff * diff))


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(points, points[chosen[-1]][None, :])[:, 0]
    while len(chosen) < k:
        total = d2.sum()
        if total <= 0.0:
            # all remaining mass at distance zero: reuse the first point
            chosen.append(chosen[0])
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
        idx = min(idx, n - 1)
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(points, points[idx][None, :])[:, 0])
    return points[chosen].copy()


def kmeans(points: Sequence[Sequence[float]] | np.ndarray, k: int, seed: int,
           max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL) -> ClusterResult:
    """Seeded k-means++ plus Lloyd iterations, fully deterministic.

    If k >= the number of points, every point becomes its own centroid.
    Empty clusters are re-seeded with the point currently farthest from
    its centroid. Inertia is checked to be non-increasing every iteration.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) == 0:
        raise ValueError("kmeans needs at least one point")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")

    n = len(pts)
    if k >= n:
        centroids = pts.copy()
        assignment = assign_points(pts, centroids)
        return ClusterResult(centroids, assignment, _inertia(pts, centroids, assignment))

    rng = generator(seed)
    centroids = _kmeanspp_init(pts, k, rng)
    prev_inertia = np.inf
    for _ in range(max_iter):
        assignment = assign_points(pts, centroids)
        assignment, centroids = _fix_empty(pts, assignment, centroids, k)
        inertia = _inertia(pts, centroids, assignment)
        assert inertia <= prev_inertia + 1e-9, "Lloyd iteration increased inertia"
        prev_inertia = inertia
        new_centroids = update_centroids(pts, assignment, k, fallback=centroids)
        movement = float(np.max(np.sqrt(np.sum((new_centroids - centroids) ** 2, axis=1))))
        centroids = new_centroids
        if movement < tol:
            break
    assignment = assign_points(pts, centroids)
    return ClusterResult(centroids, assignment, _inertia(pts, centroids, assignment))


def _fix_empty(pts, assignment, centroids, k):
    """Re-seed each empty cluster with the point farthest from its centroid."""
    counts = np.bincount(assignment, minlength=k)
    if np.all(counts > 0):
        return assignment, centroids
    assignment = assignment.copy()
    centroids = centroids.copy()
    diff = pts - centroids[assignment]
    dist = np.sum(diff * diff, axis=-1)
    for j in range(k):
        if counts[j] > 0:
            continue
        far = int(np.argmax(dist))
        centroids[j] = pts[far]
        counts[assignment[far]] -= 1
        assignment[far] = j
        counts[j] = 1
        dist[far] = 0.0
    return assignment, centroids


def _distinct_rows(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stable dedup by first occurrence; returns (distinct rows, inverse index)."""
    seen: dict[bytes, int] = {}
    inverse = np.empty(len(vectors), dtype=np.int64)
    keep = []
    for i, row in enumerate(vectors):
        key = row.tobytes()
        j = seen.get(key)
        if j is None:
            j = len(keep)
            seen[key] = j
            keep.append(i)
        inverse[i] = j
    return vectors[keep], inverse


def build_proxy_entry(e_r_i: FeatureMap, support: np.ndarray, k: int, seed: int,
                      ref_index: int = 1) -> ProxyEntry:
    """Cluster one object's support embeddings at granularity k.

    support: sorted flat cell indices of the object's nonzero indicator.
    Returns an absent entry (all-zero map, no centroids) for empty support.
    """
    h, w, c = e_r_i.data.shape
    support = np.asarray(support, dtype=np.int64)
    if len(support) == 0:
        zero = FeatureMap(np.zeros((h, w, c), dtype=np.float32))
        return ProxyEntry(ref_index, k, zero, np.zeros((0, c), dtype=np.float32), (), True)

    flat = e_r_i.data.reshape(-1, c)
    vectors = flat[support]

    if k == K_FULL:
        distinct, inverse = _distinct_rows(vectors)
        members = tuple(support[inverse == j] for j in range(len(distinct)))
        # pixel-level case: the proxy map is the embedding itself, bit for bit
        return ProxyEntry(ref_index, k, e_r_i, distinct.copy(), members, False)

    result = kmeans(vectors.astype(np.float64), k, seed)
    cents32 = result.centroids.astype(np.float32)
    out = np.zeros((h * w, c), dtype=np.float32)
    out[support] = cents32[result.assignment]
    used = sorted(set(result.assignment.tolist()))
    distinct, remap = _distinct_rows(cents32[used])
    to_distinct = {orig: int(remap[pos]) for pos, orig in enumerate(used)}
    members_lists: list[list[int]] = [[] for _ in range(len(distinct))]
    for idx, a in zip(support, result.assignment):
        members_lists[to_distinct[int(a)]].append(int(idx))
    members = tuple(np.asarray(m, dtype=np.int64) for m in members_lists)
    return ProxyEntry(ref_index, k, FeatureMap(out.reshape(h, w, c)),
                      distinct.copy(), members, False)


def build_adaptive_proxy(
    f_refs: Sequence[FeatureMap],
    y_refs: Sequence[LabelMask],
    object_index: int,
    schedule: ClusterSchedule,
    seed: int,
    ref_indices: Sequence[int] | None = None,
) -> ProxySet:
    """Proxy set across references and granularities, fixed (r, K) order.

    Entries are enumerated r ascending then K in schedule order; each
    entry's clustering uses a sub-seed derived from (seed, r, K, object),
    so per-entry work can run in any order.
    """
    if len(f_refs) == 0:
        raise ValueError("at least one reference is required")
    if len(f_refs) != len(y_refs):
        raise ValueError("f_refs and y_refs must pair up")
    if ref_indices is None:
        ref_indices = list(range(1, len(f_refs) + 1))
    order = np.argsort(np.asarray(ref_indices, dtype=np.int64), kind="stable")

    entries = []
    for pos in order:
        r = int(ref_indices[pos])
        f_r, y_r = f_refs[pos], y_refs[pos]
        e = object_embedding(f_r, y_r, object_index)
        support = np.flatnonzero(y_r.labels.reshape(-1) == object_index)
        for k in schedule.counts:
            sub = derive_seed(seed, "proxy", r, k, object_index)
            entries.append(build_proxy_entry(e, support, k, sub, ref_index=r))
    return ProxySet(object_index, tuple(entries))


def build_grid_proxy(e_r_i: FeatureMap, support: np.ndarray, grid: int,
                     ref_index: int = 1) -> ProxyEntry:
    """Grid-sampled proxies: mean embedding per cell of a G x G split of the
    support bounding box, propagated back over member pixels."""
    if grid < 1:
        raise ValueError(f"grid must be >= 1, got {grid}")
    h, w, c = e_r_i.data.shape
    support = np.asarray(support, dtype=np.int64)
    if len(support) == 0:
        zero = FeatureMap(np.zeros((h, w, c), dtype=np.float32))
        return ProxyEntry(ref_index, grid, zero, np.zeros((0, c), dtype=np.float32), (), True)

    rows, cols = support // w, support % w
    r0, r1 = int(rows.min()), int(rows.max())
    c0, c1 = int(cols.min()), int(cols.max())
    bh, bw = r1 - r0 + 1, c1 - c0 + 1
    # integer split into G near-equal spans; a pixel p lands in cell (p - lo) * G // extent
    cell_r = np.minimum((rows - r0) * grid // bh, grid - 1)
    cell_c = np.minimum((cols - c0) * grid // bw, grid - 1)
    cell = cell_r * grid + cell_c

    flat = e_r_i.data.reshape(-1, c).astype(np.float64)
    out = np.zeros((h * w, c), dtype=np.float32)
    centroids = []
    members = []
    for g in range(grid * grid):
        idx = support[cell == g]
        if len(idx) == 0:
            continue
        mean = flat[idx].mean(axis=0).astype(np.float32)
        out[idx] = mean
        centroids.append(mean)
        members.append(idx)
    return ProxyEntry(ref_index, grid, FeatureMap(out.reshape(h, w, c)),
                      np.stack(centroids), tuple(members), False)


def proxyset_to_bundle(proxies: ProxySet) -> WeightBundle:
    """Dump centroids and assignment maps in the shared weight-bundle format
    for offline inspection."""
    bundle = WeightBundle()
    i = proxies.object_index
    for n, entry in enumerate(proxies.entries):
        prefix = f"clusters/obj{i}/entry{n}/r{entry.ref_index}/k{entry.k}"
        if len(entry.centroids):
            bundle.add(f"{prefix}/centroids", entry.centroids)
        h, w, _ = entry.proxy_map.data.shape
        assign = np.full(h * w, -1.0, dtype=np.float32)
        for j, m in enumerate(entry.members):
            assign[m] = float(j)
        bundle.add(f"{prefix}/assignment", assign.reshape(h, w))
    return bundle
