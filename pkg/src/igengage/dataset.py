"""Post ingestion, validation, window filtering, tier taxonomy, and slicing.

Input is a delimited text file (CSV with header) or JSONL with identical
field names. Required columns: post_id, influencer_id, category, followers,
likes, comments, posted_at; every remaining numeric column becomes a feature.
Rows that violate the record invariants are rejected with a per-row
diagnostic; ingestion is fatal only when zero rows survive.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CATEGORIES = (
    "Beauty",
    "Family",
    "Fashion",
    "Fitness",
    "Food",
    "Interior",
    "Pet",
    "Travel",
    "Other",
)

REQUIRED_COLUMNS = (
    "post_id",
    "influencer_id",
    "category",
    "followers",
    "likes",
    "comments",
    "posted_at",
)

METRICS = ("likes", "comments")

WINDOW_MIN_DAYS = 5
WINDOW_MAX_DAYS = 30


class IngestError(Exception):
    """Raised when an input file yields zero valid records."""


@dataclass(frozen=True)
class Diagnostic:
    row: int | None
    column: str | None
    reason: str

    def as_dict(self) -> dict:
        return {"row": self.row, "column": self.column, "reason": self.reason}


@dataclass(frozen=True)
class Tier:
    name: str
    lo: int
    hi: int | None  # half-open [lo, hi); None means unbounded

    def contains(self, followers: int) -> bool:
        return followers >= self.lo and (self.hi is None or followers < self.hi)


TIERS = (
    Tier("Nano", 1_000, 10_000),
    Tier("Micro", 10_000, 50_000),
    Tier("Mid", 50_000, 500_000),
    Tier("Macro", 500_000, 1_000_000),
    Tier("Mega", 1_000_000, None),
)

TIER_NAMES = tuple(t.name for t in TIERS)


def assign_tier(followers: int) -> Tier:
    """Tier for a follower count; sub-1000 accounts are not influencers."""
    if followers < 1:
        raise ValueError("followers must be >= 1")
    if followers < TIERS[0].lo:
        raise ValueError("sub-influencer account: followers < 1000")
    for tier in TIERS:
        if tier.contains(followers):
            return tier
    raise AssertionError("tier ranges must partition [1000, inf)")


@dataclass(frozen=True)
class EngagementMetrics:
    likes_rate: float
    comments_rate: float


@dataclass(frozen=True)
class PostRecord:
    post_id: str
    influencer_id: str
    category: str
    followers: int
    likes: int
    comments: int
    posted_at: datetime
    features: dict[str, float] = field(default_factory=dict)

    @property
    def metrics(self) -> EngagementMetrics:
        return EngagementMetrics(
            likes_rate=self.likes / self.followers,
            comments_rate=self.comments / self.followers,
        )

    def engagement(self, metric: str) -> float:
        if metric == "likes":
            return self.likes / self.followers
        if metric == "comments":
            return self.comments / self.followers
        raise ValueError(f"unknown metric: {metric!r}")


@dataclass(frozen=True)
class FeatureTable:
    """Column-oriented view of one category x tier slice.

    The matrix is row-aligned with ``rows`` (sorted by post_id) and
    column-aligned with ``feature_names``; missing cells have already been
    imputed with the per-slice column median (counts in ``imputed_counts``).
    """

    rows: tuple[PostRecord, ...]
    feature_names: tuple[str, ...]
    matrix: np.ndarray
    slice_key: tuple[str, str, str]  # (category, tier, metric)
    imputed_counts: dict[str, int]

    def __post_init__(self):
        self.matrix.setflags(write=False)

    def __len__(self) -> int:
        return len(self.rows)

    def target(self, metric: str | None = None) -> np.ndarray:
        metric = metric or self.slice_key[2]
        return np.asarray([r.engagement(metric) for r in self.rows])

    @property
    def likes_rate(self) -> np.ndarray:
        return self.target("likes")

    @property
    def comments_rate(self) -> np.ndarray:
        return self.target("comments")


def _parse_timestamp(raw: str) -> datetime:
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _parse_int(raw, column: str) -> int:
    if isinstance(raw, bool):
        raise ValueError(f"{column} must be an integer")
    if isinstance(raw, int):
        return raw
    if isinstance(raw, float):
        if not raw.is_integer():
            raise ValueError(f"{column} must be an integer")
        return int(raw)
    text = str(raw).strip()
    if not text:
        raise ValueError(f"{column} is empty")
    return int(text)


def _row_to_record(
    row: dict, feature_columns: Sequence[str], row_index: int
) -> tuple[PostRecord | None, Diagnostic | None]:
    for col in REQUIRED_COLUMNS:
        if row.get(col) in (None, ""):
            return None, Diagnostic(row_index, col, "missing value")
    try:
        followers = _parse_int(row["followers"], "followers")
    except ValueError as exc:
        return None, Diagnostic(row_index, "followers", str(exc))
    if followers < 1:
        return None, Diagnostic(row_index, "followers", "followers < 1")
    counts = {}
    for col in ("likes", "comments"):
        try:
            counts[col] = _parse_int(row[col], col)
        except ValueError as exc:
            return None, Diagnostic(row_index, col, str(exc))
        if counts[col] < 0:
            return None, Diagnostic(row_index, col, f"{col} < 0")
    category = str(row["category"]).strip()
    if category not in CATEGORIES:
        return None, Diagnostic(row_index, "category", f"unknown category: {category}")
    try:
        posted_at = _parse_timestamp(str(row["posted_at"]))
    except ValueError:
        return None, Diagnostic(row_index, "posted_at", "unparseable timestamp")

    features: dict[str, float] = {}
    for col in feature_columns:
        raw = row.get(col)
        if raw is None or (isinstance(raw, str) and not raw.strip()):
            continue  # missing cell, imputed later per slice
        try:
            value = float(raw)
        except (TypeError, ValueError):
            return None, Diagnostic(row_index, col, "non-numeric feature value")
        if not math.isfinite(value):
            return None, Diagnostic(row_index, col, "non-finite feature value")
        features[col] = value

    record = PostRecord(
        post_id=str(row["post_id"]).strip(),
        influencer_id=str(row["influencer_id"]).strip(),
        category=category,
        followers=followers,
        likes=counts["likes"],
        comments=counts["comments"],
        posted_at=posted_at,
        features=features,
    )
    return record, None


def _iter_rows(path: Path):
    # lines starting with '#' are meta comments in re-emitted artifacts
    if path.suffix.lower() in (".jsonl", ".json", ".ndjson"):
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    yield i, json.loads(line)
                except json.JSONDecodeError:
                    yield i, None
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(line for line in fh if not line.startswith("#"))
            if reader.fieldnames is None:
                return
            for i, row in enumerate(reader, start=1):
                yield i, row


def _header_columns(path: Path) -> list[str]:
    if path.suffix.lower() in (".jsonl", ".json", ".ndjson"):
        columns: list[str] = []
        seen = set()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    continue
                for key in obj:
                    if key not in seen:
                        seen.add(key)
                        columns.append(key)
        return columns
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            return next(reader)
        except StopIteration:
            return []


def ingest(
    posts_file: str | Path, schema: Sequence[str] | None = None
) -> tuple[list[PostRecord], list[Diagnostic]]:
    """Read and validate a posts file.

    ``schema`` optionally names the feature columns to keep; by default every
    column beyond the required seven is treated as a feature. Returns the
    valid records plus one diagnostic per rejected row.
    """
    path = Path(posts_file)
    if not path.exists():
        raise IngestError(f"posts file not found: {path}")
    columns = _header_columns(path)
    missing = [c for c in REQUIRED_COLUMNS if c not in columns]
    if missing:
        raise IngestError(f"missing required columns: {', '.join(missing)}")
    if schema is None:
        feature_columns = [c for c in columns if c not in REQUIRED_COLUMNS]
    else:
        feature_columns = list(schema)

    records: list[PostRecord] = []
    diagnostics: list[Diagnostic] = []
    seen_ids: set[str] = set()
    for row_index, row in _iter_rows(path):
        if row is None:
            diagnostics.append(Diagnostic(row_index, None, "unparseable row"))
            continue
        record, diag = _row_to_record(row, feature_columns, row_index)
        if diag is not None:
            diagnostics.append(diag)
            continue
        assert record is not None
        if record.post_id in seen_ids:
            diagnostics.append(Diagnostic(row_index, "post_id", "duplicate post_id"))
            continue
        seen_ids.add(record.post_id)
        records.append(record)
    if not records:
        raise IngestError(f"no valid rows in {path}")
    return records, diagnostics


def filter_window(
    posts: Iterable[PostRecord], collection_end: datetime
) -> list[PostRecord]:
    """Keep posts aged between 5 and 30 days at collection time (inclusive).

    Followers are a collection-end snapshot, so older posts would mix in
    follower growth and younger ones are still accumulating engagement.
    """
    if collection_end.tzinfo is None:
        collection_end = collection_end.replace(tzinfo=timezone.utc)
    low = timedelta(days=WINDOW_MIN_DAYS)
    high = timedelta(days=WINDOW_MAX_DAYS)
    kept = []
    for post in posts:
        age = collection_end - post.posted_at
        if age < timedelta(0):
            raise ValueError(f"post {post.post_id} is dated after collection_end")
        if low <= age <= high:
            kept.append(post)
    return kept


def drop_sub_influencers(
    posts: Iterable[PostRecord],
) -> tuple[list[PostRecord], list[Diagnostic]]:
    """Split off accounts below the 1K-follower influencer threshold."""
    kept, diags = [], []
    for post in posts:
        if post.followers < TIERS[0].lo:
            diags.append(
                Diagnostic(None, "followers", f"sub-influencer account: {post.post_id}")
            )
        else:
            kept.append(post)
    return kept, diags


def slice_posts(
    posts: Iterable[PostRecord], category: str, tier: str | Tier
) -> list[PostRecord]:
    """Posts of one category x tier cell, sorted by post_id for reproducibility."""
    tier_name = tier.name if isinstance(tier, Tier) else tier
    if category not in CATEGORIES:
        raise ValueError(f"unknown category: {category}")
    if tier_name not in TIER_NAMES:
        raise ValueError(f"unknown tier: {tier_name}")
    selected = [
        p
        for p in posts
        if p.category == category
        and p.followers >= TIERS[0].lo
        and assign_tier(p.followers).name == tier_name
    ]
    selected.sort(key=lambda p: p.post_id)
    return selected


def slice_table(
    posts: Iterable[PostRecord],
    category: str,
    tier: str | Tier,
    metric: str,
    feature_names: Sequence[str] | None = None,
) -> FeatureTable:
    """Build the FeatureTable for one (category, tier, metric) slice.

    Missing feature cells are imputed with the per-slice column median; a
    column with no observed values in the slice imputes 0.0 (with a warning).
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric: {metric!r}")
    tier_name = tier.name if isinstance(tier, Tier) else tier
    selected = slice_posts(posts, category, tier_name)
    if feature_names is None:
        names: list[str] = sorted({k for p in selected for k in p.features})
    else:
        names = list(feature_names)
    if not selected:
        warnings.warn(
            f"empty slice ({category}, {tier_name}); downstream ops will skip it",
            RuntimeWarning,
            stacklevel=2,
        )
        return FeatureTable(
            rows=(),
            feature_names=tuple(names),
            matrix=np.empty((0, len(names))),
            slice_key=(category, tier_name, metric),
            imputed_counts={},
        )

    matrix = np.full((len(selected), len(names)), np.nan)
    for i, post in enumerate(selected):
        for j, name in enumerate(names):
            if name in post.features:
                matrix[i, j] = post.features[name]
    imputed_counts: dict[str, int] = {}
    for j, name in enumerate(names):
        col = matrix[:, j]
        mask = np.isnan(col)
        n_missing = int(mask.sum())
        if n_missing == 0:
            continue
        observed = col[~mask]
        if observed.size == 0:
            warnings.warn(
                f"feature {name!r} has no observed values in slice "
                f"({category}, {tier_name}); imputing 0.0",
                RuntimeWarning,
                stacklevel=2,
            )
            fill = 0.0
        else:
            fill = float(np.median(observed))
        col[mask] = fill
        imputed_counts[name] = n_missing
    return FeatureTable(
        rows=tuple(selected),
        feature_names=tuple(names),
        matrix=matrix,
        slice_key=(category, tier_name, metric),
        imputed_counts=imputed_counts,
    )


def partition_counts(posts: Iterable[PostRecord]) -> dict[tuple[str, str], int]:
    """Row count per (category, tier) cell; cells sum to the dataset size."""
    counts: dict[tuple[str, str], int] = {
        (c, t): 0 for c in CATEGORIES for t in TIER_NAMES
    }
    for post in posts:
        counts[(post.category, assign_tier(post.followers).name)] += 1
    return counts
