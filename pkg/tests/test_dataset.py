import json
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from igengage.dataset import (
    CATEGORIES,
    TIER_NAMES,
    IngestError,
    PostRecord,
    assign_tier,
    drop_sub_influencers,
    filter_window,
    ingest,
    partition_counts,
    slice_posts,
    slice_table,
)
from tests.conftest import COLLECTION_END, synthetic_posts, write_posts_csv


def make_post(post_id="p1", followers=5000, likes=100, comments=10,
              category="Pet", age_days=10.0, features=None, influencer="i1"):
    return PostRecord(
        post_id=post_id,
        influencer_id=influencer,
        category=category,
        followers=followers,
        likes=likes,
        comments=comments,
        posted_at=COLLECTION_END - timedelta(days=age_days),
        features=features or {},
    )


class TestAssignTier:
    def test_boundaries(self):
        assert assign_tier(9999).name == "Nano"
        assert assign_tier(10_000).name == "Micro"
        assert assign_tier(1_500_000).name == "Mega"
        assert assign_tier(1_000).name == "Nano"
        assert assign_tier(49_999).name == "Micro"
        assert assign_tier(50_000).name == "Mid"
        assert assign_tier(500_000).name == "Macro"
        assert assign_tier(999_999).name == "Macro"
        assert assign_tier(1_000_000).name == "Mega"

    def test_sub_influencer_rejected(self):
        with pytest.raises(ValueError, match="sub-influencer"):
            assign_tier(999)

    def test_zero_followers_rejected(self):
        with pytest.raises(ValueError):
            assign_tier(0)


class TestIngest:
    def test_engagement_rate_is_direct_ratio(self, tmp_path):
        rows = synthetic_posts(n=5)
        rows[0]["likes"] = 500
        rows[0]["followers"] = 10_000
        path = write_posts_csv(tmp_path / "posts.csv", rows)
        records, diags = ingest(path)
        assert records[0].metrics.likes_rate == 0.05
        assert diags == []

    def test_zero_followers_row_rejected(self, tmp_path):
        rows = synthetic_posts(n=4)
        rows[2]["followers"] = 0
        path = write_posts_csv(tmp_path / "posts.csv", rows)
        records, diags = ingest(path)
        assert len(records) == 3
        assert diags[0].reason == "followers < 1"
        assert diags[0].column == "followers"
        assert diags[0].row == 3

    def test_count_conservation(self, tmp_path):
        rows = synthetic_posts(n=4)
        rows[1]["category"] = "NotACategory"
        path = write_posts_csv(tmp_path / "posts.csv", rows)
        records, diags = ingest(path)
        assert len(records) == 3
        assert len(diags) == 1

    def test_zero_valid_rows_fatal(self, tmp_path):
        rows = synthetic_posts(n=2)
        for row in rows:
            row["followers"] = 0
        path = write_posts_csv(tmp_path / "posts.csv", rows)
        with pytest.raises(IngestError):
            ingest(path)

    def test_missing_required_column_fatal(self, tmp_path):
        rows = synthetic_posts(n=2)
        for row in rows:
            del row["likes"]
        path = write_posts_csv(tmp_path / "posts.csv", rows)
        with pytest.raises(IngestError, match="likes"):
            ingest(path)

    def test_jsonl_alternative(self, tmp_path):
        rows = synthetic_posts(n=6)
        path = tmp_path / "posts.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        records, diags = ingest(path)
        assert len(records) == 6
        assert diags == []
        csv_records, _ = ingest(write_posts_csv(tmp_path / "posts.csv", rows))
        assert [r.post_id for r in records] == [r.post_id for r in csv_records]
        assert [r.features for r in records] == [r.features for r in csv_records]

    def test_duplicate_post_id_rejected(self, tmp_path):
        rows = synthetic_posts(n=3)
        rows[2]["post_id"] = rows[0]["post_id"]
        path = write_posts_csv(tmp_path / "posts.csv", rows)
        records, diags = ingest(path)
        assert len(records) == 2
        assert diags[0].reason == "duplicate post_id"

    def test_non_finite_feature_rejected(self, tmp_path):
        rows = synthetic_posts(n=3)
        rows[1]["n_mentions"] = "inf"
        path = write_posts_csv(tmp_path / "posts.csv", rows)
        records, diags = ingest(path)
        assert len(records) == 2
        assert diags[0].reason == "non-finite feature value"

    def test_missing_feature_cell_is_allowed(self, tmp_path):
        rows = synthetic_posts(n=3)
        rows[1]["n_mentions"] = ""
        path = write_posts_csv(tmp_path / "posts.csv", rows)
        records, diags = ingest(path)
        assert len(records) == 3
        assert "n_mentions" not in records[1].features

    def test_all_feature_values_finite(self, posts_csv):
        records, _ = ingest(posts_csv)
        for record in records:
            assert all(np.isfinite(v) for v in record.features.values())


class TestFilterWindow:
    def test_age_31_days_removed(self):
        assert filter_window([make_post(age_days=31)], COLLECTION_END) == []

    def test_age_3_days_removed(self):
        assert filter_window([make_post(age_days=3)], COLLECTION_END) == []

    def test_age_10_days_kept(self):
        assert len(filter_window([make_post(age_days=10)], COLLECTION_END)) == 1

    def test_boundaries_retained(self):
        posts = [make_post("a", age_days=5.0), make_post("b", age_days=30.0)]
        assert len(filter_window(posts, COLLECTION_END)) == 2

    def test_idempotent(self):
        posts = [make_post(f"p{i}", age_days=float(i)) for i in range(1, 40)]
        once = filter_window(posts, COLLECTION_END)
        assert filter_window(once, COLLECTION_END) == once

    def test_future_post_rejected(self):
        with pytest.raises(ValueError):
            filter_window([make_post(age_days=-1.0)], COLLECTION_END)


class TestSlice:
    def test_filter_semantics(self):
        posts = [make_post(f"pet{i}", followers=5000, category="Pet") for i in range(4)]
        posts += [make_post(f"haut{i}", followers=5000, category="Fashion") for i in range(6)]
        table = slice_table(posts, "Pet", "Nano", "likes")
        assert len(table) == 4

    def test_determinism(self):
        posts = [make_post(f"p{i}", followers=int(1000 + i)) for i in range(10)]
        t1 = slice_table(posts, "Pet", "Nano", "likes")
        t2 = slice_table(list(reversed(posts)), "Pet", "Nano", "likes")
        assert [r.post_id for r in t1.rows] == [r.post_id for r in t2.rows]
        assert np.array_equal(t1.matrix, t2.matrix)

    def test_rows_sorted_by_post_id(self):
        posts = [make_post(pid) for pid in ("zz", "aa", "mm")]
        table = slice_table(posts, "Pet", "Nano", "likes")
        assert [r.post_id for r in table.rows] == ["aa", "mm", "zz"]

    def test_empty_slice_warns(self):
        posts = [make_post("p1", category="Pet")]
        with pytest.warns(RuntimeWarning, match="empty slice"):
            table = slice_table(posts, "Travel", "Mega", "likes")
        assert len(table) == 0

    def test_partition_property(self, posts_csv):
        records, _ = ingest(posts_csv)
        filtered = filter_window(records, COLLECTION_END)
        filtered, sub = drop_sub_influencers(filtered)
        counts = partition_counts(filtered)
        assert sum(counts.values()) == len(filtered)
        total = 0
        for category in CATEGORIES:
            for tier in TIER_NAMES:
                total += len(slice_posts(filtered, category, tier))
        assert total == len(filtered)

    def test_median_imputation_with_counts(self):
        posts = [
            make_post("a", features={"x": 1.0, "y": 5.0}),
            make_post("b", features={"x": 3.0}),
            make_post("c", features={"x": 100.0, "y": 9.0}),
        ]
        table = slice_table(posts, "Pet", "Nano", "likes")
        j = table.feature_names.index("y")
        assert table.matrix[1, j] == 7.0  # median of 5, 9
        assert table.imputed_counts == {"y": 1}

    def test_all_missing_column_imputes_zero(self):
        posts = [make_post("a", features={"x": 1.0}), make_post("b", features={"x": 2.0})]
        with pytest.warns(RuntimeWarning, match="no observed values"):
            table = slice_table(posts, "Pet", "Nano", "likes", feature_names=["x", "ghost"])
        j = table.feature_names.index("ghost")
        assert np.all(table.matrix[:, j] == 0.0)

    def test_matrix_is_immutable(self):
        posts = [make_post("a", features={"x": 1.0})]
        table = slice_table(posts, "Pet", "Nano", "likes")
        with pytest.raises(ValueError):
            table.matrix[0, 0] = 9.0


class TestNormalization:
    def test_scale_equivariance(self):
        base = make_post("a", followers=4000, likes=120)
        scaled = make_post("a", followers=8000, likes=240)
        assert base.metrics.likes_rate == scaled.metrics.likes_rate

    def test_rates_are_exact_ratios(self):
        post = make_post("a", followers=3, likes=1, comments=2)
        assert post.metrics.likes_rate == 1 / 3
        assert post.metrics.comments_rate == 2 / 3
