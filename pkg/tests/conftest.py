"""Shared synthetic fixtures: posts files and embedding tables."""

from __future__ import annotations

import csv
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest

from igengage.modeling import LabeledDataset

COLLECTION_END = datetime(2020, 6, 30, tzinfo=timezone.utc)

FEATURE_COLUMNS = (
    "caption_len",
    "has_location",
    "is_video",
    "n_hashtags",
    "n_mentions",
)


def synthetic_posts(
    n: int = 120,
    seed: int = 0,
    categories: tuple[str, ...] = ("Pet", "Beauty"),
    follower_range: tuple[int, int] = (1_000, 2_000_000),
    missing_rate: float = 0.0,
) -> list[dict]:
    """Rows for a posts.csv with engagement correlated to the features."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        followers = int(rng.integers(*follower_range))
        n_mentions = int(rng.integers(0, 8))
        n_hashtags = int(rng.integers(0, 20))
        caption_len = int(rng.integers(0, 400))
        has_location = int(rng.integers(0, 2))
        is_video = int(rng.integers(0, 2))
        signal = 0.02 * n_mentions + 0.01 * has_location - 0.003 * n_hashtags
        base_rate = 0.05 * np.exp(rng.normal(0, 0.3)) + signal
        likes = max(0, int(base_rate * followers))
        comments = max(0, int(0.1 * base_rate * followers * rng.uniform(0.5, 1.5)))
        age_days = float(rng.uniform(5, 30))
        posted = COLLECTION_END - timedelta(days=age_days)
        row = {
            "post_id": f"post{i:05d}",
            "influencer_id": f"inf{i % max(3, n // 4):04d}",
            "category": categories[i % len(categories)],
            "followers": followers,
            "likes": likes,
            "comments": comments,
            "posted_at": posted.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "caption_len": caption_len,
            "has_location": has_location,
            "is_video": is_video,
            "n_hashtags": n_hashtags,
            "n_mentions": n_mentions,
        }
        if missing_rate and rng.random() < missing_rate:
            row[str(rng.choice(FEATURE_COLUMNS))] = ""
        rows.append(row)
    return rows


def write_posts_csv(path: Path, rows: list[dict]) -> Path:
    fieldnames = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


@pytest.fixture
def posts_csv(tmp_path) -> Path:
    return write_posts_csv(tmp_path / "posts.csv", synthetic_posts())


def labeled_from_arrays(X: np.ndarray, y: np.ndarray, metric: str = "likes") -> LabeledDataset:
    n = y.size
    return LabeledDataset(
        X=np.asarray(X, dtype=float),
        y=np.asarray(y, dtype=np.int8),
        feature_names=tuple(f"f{j}" for j in range(X.shape[1])),
        threshold_used=0.0,
        metric=metric,
        row_ids=tuple(f"row{i:05d}" for i in range(n)),
        synthetic=np.zeros(n, dtype=bool),
        synthetic_origin=(None,) * n,
    )


def separable_engagement_data(
    n: int = 5000, n_features: int = 20, seed: int = 11
) -> LabeledDataset:
    """Binary High/Low dataset exactly separable by an axis-aligned rule.

    Three informative features: High = (x0 high) or (x1 high and x2 high),
    tuned so roughly a quarter of the rows are High (the 0.75-quantile
    labeling regime). A small decision tree can represent the rule exactly.
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n_features))
    t0 = np.quantile(X[:, 0], 0.9)
    pair_q = 1.0 - np.sqrt(1.0 / 6.0)  # joint probability ~1/6
    t1 = np.quantile(X[:, 1], pair_q)
    t2 = np.quantile(X[:, 2], pair_q)
    y = ((X[:, 0] >= t0) | ((X[:, 1] >= t1) & (X[:, 2] >= t2))).astype(np.int8)
    return labeled_from_arrays(X, y)
