"""Unsupervised hot-topic mining over post embeddings.

Pipeline: PCA-reduce a slice's embedding rows, find each post's k nearest
neighbors (Euclidean), keep "pure" neighborhoods whose neighbor-average
engagement lands in the anchor's own engagement class, score User and
Engagement Diversity with Simpson's index, classify the quadrant, and
greedily drop neighborhoods overlapping a kept one on more than 80% of
members.

Neighborhood membership includes the anchor (k neighbors + anchor = k+1
members) for diversity and overlap; the purity average is over the k
neighbors only, anchor excluded.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .stats import EngagementClassBoundaries

MODALITIES = ("image", "text")
DEFAULT_K_LIST = (1, 3, 5, 10, 20, 30, 50)

QUADRANTS = (
    "general_topic",
    "user_specific_topic",
    "unreliable_high_ed_low_ud",
    "unreliable_high_ed_high_ud",
)


@dataclass(frozen=True)
class EmbeddingTable:
    post_ids: tuple[str, ...]
    vectors: np.ndarray  # n x d, finite
    modality: str

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.post_ids):
            raise ValueError("vectors must be n x d with one row per post id")
        if len(set(self.post_ids)) != len(self.post_ids):
            raise ValueError("post_ids must be unique")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding vectors contain non-finite entries")
        self.vectors.setflags(write=False)

    def __len__(self) -> int:
        return len(self.post_ids)

    def index_of(self, post_id: str) -> int:
        try:
            return self.post_ids.index(post_id)
        except ValueError:
            raise KeyError(f"unknown post id: {post_id}") from None

    def select(self, post_ids: Sequence[str]) -> "EmbeddingTable":
        rows = [self.index_of(p) for p in post_ids]
        return EmbeddingTable(
            post_ids=tuple(post_ids),
            vectors=np.array(self.vectors[rows], dtype=float),
            modality=self.modality,
        )


@dataclass(frozen=True)
class DiversityIndex:
    D: float
    N: int
    species_counts: tuple[int, ...]


@dataclass(frozen=True)
class TopicNeighborhood:
    anchor_post: str
    member_posts: tuple[str, ...]  # anchor first, then the k neighbors
    engagement_class: int
    mean_engagement: float  # average over the k neighbors
    user_diversity: float | None = None
    engagement_diversity: float | None = None
    quadrant: str | None = None
    modality: str | None = None
    slice_key: tuple | None = None

    @property
    def k(self) -> int:
        return len(self.member_posts) - 1


def save_embeddings(table: EmbeddingTable, bin_path: str | Path) -> None:
    """Write the little-endian float32 matrix plus its JSON sidecar."""
    bin_path = Path(bin_path)
    bin_path.write_bytes(np.ascontiguousarray(table.vectors, dtype="<f4").tobytes())
    sidecar = {
        "post_ids": list(table.post_ids),
        "dim": int(table.vectors.shape[1]),
        "modality": table.modality,
    }
    bin_path.with_suffix(".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_embeddings(path: str | Path, modality: str | None = None) -> EmbeddingTable:
    """Read a .bin/.json embedding pair, or a CSV (header: post_id,e0,e1,...)."""
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0] != "post_id":
                raise ValueError("embedding CSV must start with a post_id column")
            ids, rows = [], []
            for row in reader:
                ids.append(row[0])
                rows.append([float(v) for v in row[1:]])
        return EmbeddingTable(tuple(ids), np.asarray(rows, dtype=float), modality or "image")
    sidecar_path = path if path.suffix == ".json" else path.with_suffix(".json")
    bin_path = path if path.suffix == ".bin" else path.with_suffix(".bin")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    raw = np.frombuffer(bin_path.read_bytes(), dtype="<f4")
    dim = int(sidecar["dim"])
    n = len(sidecar["post_ids"])
    if raw.size != n * dim:
        raise ValueError(
            f"embedding matrix has {raw.size} floats, sidecar declares {n} x {dim}"
        )
    return EmbeddingTable(
        post_ids=tuple(sidecar["post_ids"]),
        vectors=raw.reshape(n, dim).astype(float),
        modality=sidecar.get("modality", modality or "image"),
    )


@dataclass(frozen=True)
class PcaReduction:
    table: EmbeddingTable
    explained_variance_ratio: np.ndarray
    mean: np.ndarray
    components: np.ndarray  # c x d projection rows


def pca_reduce(emb: EmbeddingTable, components: int = 100) -> PcaReduction:
    """Project onto the top principal axes of the mean-centered vectors.

    Axes are ordered by covariance eigenvalue (descending); signs are fixed
    so each axis's largest-magnitude loading is positive, which keeps the
    projection bit-reproducible across runs. ``components`` is clamped to
    min(n-1, d) with a warning when it exceeds the available rank.
    """
    n, d = emb.vectors.shape
    if n <= 1:
        raise ValueError("PCA needs at least 2 rows")
    limit = min(n - 1, d)
    if components > limit:
        warnings.warn(
            f"components={components} exceeds min(n-1, d)={limit}; clamping",
            RuntimeWarning,
            stacklevel=2,
        )
        components = limit
    X = np.asarray(emb.vectors, dtype=float)
    mean = X.mean(axis=0)
    Xc = X - mean
    U, S, Vt = np.linalg.svd(Xc, full_matrices=False)
    # deterministic sign: largest-|loading| entry of each axis made positive
    anchor = np.argmax(np.abs(Vt), axis=1)
    signs = np.sign(Vt[np.arange(Vt.shape[0]), anchor])
    signs[signs == 0] = 1.0
    Vt = Vt * signs[:, None]
    U = U * signs[None, :]
    total = float((S * S).sum())
    ratios = (S * S) / total if total > 0 else np.zeros_like(S)
    projected = U[:, :components] * S[:components]
    reduced = EmbeddingTable(
        post_ids=emb.post_ids, vectors=projected, modality=emb.modality
    )
    return PcaReduction(
        table=reduced,
        explained_variance_ratio=ratios[:components],
        mean=mean,
        components=Vt[:components],
    )


def _pid_rank(post_ids: Sequence[str]) -> np.ndarray:
    order = np.argsort(np.asarray(post_ids, dtype=object), kind="stable")
    ranks = np.empty(len(post_ids), dtype=np.int64)
    ranks[order] = np.arange(len(post_ids))
    return ranks


def _sq_distances(vectors: np.ndarray, row: int) -> np.ndarray:
    diff = vectors - vectors[row]
    return (diff * diff).sum(axis=1)


def neighbor_matrix(emb: EmbeddingTable, k: int) -> np.ndarray:
    """n x k matrix of neighbor row indices, nearest first.

    Exact brute-force Euclidean scan; the anchor is excluded from its own
    neighborhood and distance ties break by post_id order.
    """
    n = len(emb)
    if not 0 < k < n:
        raise ValueError("k must satisfy 0 < k < n")
    vectors = np.asarray(emb.vectors, dtype=float)
    pid_rank = _pid_rank(emb.post_ids)
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        d = _sq_distances(vectors, i)
        d[i] = np.inf
        order = np.lexsort((pid_rank, d))
        out[i] = order[:k]
    return out


def knn(emb: EmbeddingTable, anchor: str, k: int) -> tuple[str, ...]:
    """The k nearest post ids to ``anchor`` (anchor itself excluded)."""
    i = emb.index_of(anchor)
    n = len(emb)
    if not 0 < k < n:
        raise ValueError("k must satisfy 0 < k < n")
    d = _sq_distances(np.asarray(emb.vectors, dtype=float), i)
    d[i] = np.inf
    order = np.lexsort((_pid_rank(emb.post_ids), d))
    return tuple(emb.post_ids[j] for j in order[:k])


def purity_scan(
    emb: EmbeddingTable,
    engagement: np.ndarray,
    boundaries: EngagementClassBoundaries,
    k: int,
    slice_key: tuple | None = None,
    _neighbors: np.ndarray | None = None,
) -> list[TopicNeighborhood]:
    """Neighborhoods whose neighbor-average engagement stays in the anchor's class.

    ``engagement`` is row-aligned with ``emb``; ``boundaries`` must have been
    fitted on this slice's engagement values.
    """
    engagement = np.asarray(engagement, dtype=float)
    if engagement.size != len(emb):
        raise ValueError("engagement must align with the embedding rows")
    nbrs = neighbor_matrix(emb, k) if _neighbors is None else _neighbors[:, :k]
    classes = boundaries.classify_many(engagement)
    means = engagement[nbrs].mean(axis=1)
    mean_classes = boundaries.classify_many(means)
    out = []
    for i in np.flatnonzero(mean_classes == classes):
        members = (emb.post_ids[i],) + tuple(emb.post_ids[j] for j in nbrs[i])
        out.append(
            TopicNeighborhood(
                anchor_post=emb.post_ids[i],
                member_posts=members,
                engagement_class=int(classes[i]),
                mean_engagement=float(means[i]),
                modality=emb.modality,
                slice_key=slice_key,
            )
        )
    return out


def purity_curve(
    emb: EmbeddingTable,
    engagement: np.ndarray,
    boundaries: EngagementClassBoundaries,
    k_list: Sequence[int] = DEFAULT_K_LIST,
) -> dict[int, float]:
    """Fraction of points in a pure neighborhood, per k."""
    if max(k_list) >= len(emb):
        raise ValueError("max(k_list) must be smaller than the row count")
    nbrs = neighbor_matrix(emb, max(k_list))
    n = len(emb)
    return {
        k: len(purity_scan(emb, engagement, boundaries, k, _neighbors=nbrs)) / n
        for k in k_list
    }


def simpson_diversity(species_counts: Sequence[int]) -> DiversityIndex:
    """Simpson's diversity D = 1 - sum(n_i (n_i - 1)) / (N (N - 1)).

    Zero counts are permitted and contribute nothing (a [2, 0] census equals
    [2]); D is 0 when one species owns every sample and 1 when every sample
    is its own species.
    """
    counts = [int(c) for c in species_counts]
    if any(c < 0 for c in counts):
        raise ValueError("species counts must be non-negative")
    N = sum(counts)
    if N < 2:
        raise ValueError("Simpson diversity needs at least 2 samples")
    same_pairs = sum(c * (c - 1) for c in counts)
    D = 1.0 - same_pairs / (N * (N - 1))
    return DiversityIndex(D=D, N=N, species_counts=tuple(counts))


def classify_topic(
    nbh: TopicNeighborhood,
    influencer_by_post: Mapping[str, str],
    class_by_post: Mapping[str, int],
) -> TopicNeighborhood:
    """Attach User/Engagement Diversity and the topic-type quadrant.

    User Diversity applies Simpson's index to per-influencer post counts
    among the members; Engagement Diversity to the members' engagement-class
    counts. 0.5 splits low from high (>= 0.5 counts as high).
    """
    influencer_counts: dict[str, int] = {}
    class_counts: dict[int, int] = {}
    for pid in nbh.member_posts:
        inf = influencer_by_post[pid]
        influencer_counts[inf] = influencer_counts.get(inf, 0) + 1
        cls = class_by_post[pid]
        class_counts[cls] = class_counts.get(cls, 0) + 1
    ud = simpson_diversity(list(influencer_counts.values())).D
    ed = simpson_diversity(list(class_counts.values())).D
    if ed >= 0.5:
        quadrant = "unreliable_high_ed_high_ud" if ud >= 0.5 else "unreliable_high_ed_low_ud"
    else:
        quadrant = "general_topic" if ud >= 0.5 else "user_specific_topic"
    return replace(
        nbh, user_diversity=ud, engagement_diversity=ed, quadrant=quadrant
    )


def _priority(nbh: TopicNeighborhood):
    return (-(nbh.user_diversity or 0.0), -nbh.mean_engagement, nbh.anchor_post)


def dedup_neighborhoods(
    nbhs: Sequence[TopicNeighborhood], overlap_threshold: float = 0.8
) -> list[TopicNeighborhood]:
    """Greedy overlap dedup in priority order.

    Priority: descending user diversity, then descending mean engagement,
    then anchor id. A candidate is dropped when it shares more than
    ``overlap_threshold`` of its k+1 members with ANY kept neighborhood.
    """
    kept: list[TopicNeighborhood] = []
    kept_sets: list[set[str]] = []
    for nbh in sorted(nbhs, key=_priority):
        members = set(nbh.member_posts)
        size = len(nbh.member_posts)
        if any(len(members & ks) / size > overlap_threshold for ks in kept_sets):
            continue
        kept.append(nbh)
        kept_sets.append(members)
    return kept


def hot_topic_report(
    emb: EmbeddingTable,
    engagement: np.ndarray,
    boundaries: EngagementClassBoundaries,
    influencer_by_post: Mapping[str, str],
    k: int,
    overlap_threshold: float = 0.8,
    slice_key: tuple | None = None,
) -> list[TopicNeighborhood]:
    """Deduplicated, classified pure neighborhoods of the top engagement class.

    Returned in report order (user diversity descending); empty when the
    slice has no class-5 pure neighborhood.
    """
    pure = purity_scan(emb, engagement, boundaries, k, slice_key=slice_key)
    top = [nbh for nbh in pure if nbh.engagement_class == 5]
    if not top:
        return []
    classes = boundaries.classify_many(np.asarray(engagement, dtype=float))
    class_by_post = {pid: int(c) for pid, c in zip(emb.post_ids, classes)}
    classified = [
        classify_topic(nbh, influencer_by_post, class_by_post) for nbh in top
    ]
    return dedup_neighborhoods(classified, overlap_threshold)
