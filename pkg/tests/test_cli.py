import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from igengage.cli import main
from igengage.reports import read_csv_rows
from igengage.topics import EmbeddingTable, save_embeddings
from tests.conftest import synthetic_posts, write_posts_csv


def build_workspace(root: Path, n=300, seed=5, with_embeddings=True,
                    slices="Pet/Nano/likes,Pet/Nano/comments", **extra) -> Path:
    rows = synthetic_posts(
        n=n, seed=seed, categories=("Pet",), follower_range=(1000, 9000)
    )
    write_posts_csv(root / "posts.csv", rows)
    cfg = {
        "posts": "posts.csv",
        "collection_end": "2020-06-30T00:00:00Z",
        "out": "run",
        "slices": slices,
        "profile": "fast",
        "seed": 7,
        "min_slice_rows": 30,
        "topics_k": 20,
    }
    if with_embeddings:
        rng = np.random.default_rng(0)
        ids = tuple(r["post_id"] for r in rows)
        save_embeddings(EmbeddingTable(ids, rng.normal(size=(len(ids), 24)), "image"), root / "img.bin")
        save_embeddings(EmbeddingTable(ids, rng.normal(size=(len(ids), 12)), "text"), root / "txt.bin")
        cfg["embeddings"] = {"image": "img.bin", "text": "txt.bin"}
    cfg.update(extra)
    path = root / "run.yaml"
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return path


def run_cli(*args) -> int:
    return main(list(args))


class TestIngestCommand:
    def test_manifest_counts_bounded_by_input(self, tmp_path):
        cfg = build_workspace(tmp_path, n=100, with_embeddings=False)
        assert run_cli("ingest", "--config", str(cfg)) == 0
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert sum(manifest["slices"].values()) <= 100
        assert manifest["rows_final"] == sum(manifest["slices"].values())

    def test_missing_posts_path_is_validation_error(self, tmp_path):
        cfg_path = tmp_path / "bad.yaml"
        cfg_path.write_text(
            yaml.safe_dump({"collection_end": "2020-06-30T00:00:00Z", "out": "run"})
        )
        assert run_cli("ingest", "--config", str(cfg_path)) == 1

    def test_nonexistent_posts_file_is_validation_error(self, tmp_path):
        cfg_path = tmp_path / "bad.yaml"
        cfg_path.write_text(
            yaml.safe_dump(
                {
                    "posts": "ghost.csv",
                    "collection_end": "2020-06-30T00:00:00Z",
                    "out": "run",
                }
            )
        )
        assert run_cli("ingest", "--config", str(cfg_path)) == 1

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = build_workspace(tmp_path, n=100, with_embeddings=False)
        assert run_cli("ingest", "--config", str(cfg)) == 0
        first = (tmp_path / "run" / "manifest.json").read_bytes()
        assert run_cli("ingest", "--config", str(cfg)) == 0
        assert (tmp_path / "run" / "manifest.json").read_bytes() == first

    def test_diagnostics_jsonl_schema(self, tmp_path):
        rows = synthetic_posts(n=30, categories=("Pet",), follower_range=(1000, 9000))
        rows[3]["followers"] = 0
        rows[5]["category"] = "Nonsense"
        write_posts_csv(tmp_path / "posts.csv", rows)
        cfg_path = tmp_path / "run.yaml"
        cfg_path.write_text(
            yaml.safe_dump(
                {
                    "posts": "posts.csv",
                    "collection_end": "2020-06-30T00:00:00Z",
                    "out": "run",
                }
            )
        )
        assert run_cli("ingest", "--config", str(cfg_path)) == 0
        lines = (tmp_path / "run" / "diagnostics.jsonl").read_text().splitlines()
        assert len(lines) == 2
        for line in lines:
            record = json.loads(line)
            assert set(record) == {"row", "column", "reason"}

    def test_lockfile_blocks_concurrent_runs(self, tmp_path):
        cfg = build_workspace(tmp_path, n=60, with_embeddings=False)
        (tmp_path / "run").mkdir()
        (tmp_path / "run" / ".lock").touch()
        assert run_cli("ingest", "--config", str(cfg)) == 2


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    cfg = build_workspace(root, n=300)
    for cmd in ("ingest", "correlate", "train", "topics", "report"):
        assert run_cli(cmd, "--config", str(cfg)) == 0
    return root


class TestPipelineCommands:
    def test_correlation_csv_schema(self, workspace):
        header, rows = read_csv_rows(workspace / "run" / "correlations.csv")
        assert header == ["slice", "feature", "rs", "p_value", "n", "rank"]
        assert rows
        ranked = [r for r in rows if r[5] != ""]
        assert all(r[0].count("/") == 2 for r in ranked)

    def test_top_features_has_three_per_slice(self, workspace):
        _, rows = read_csv_rows(workspace / "run" / "top_features.csv")
        by_slice = {}
        for row in rows:
            by_slice.setdefault(row[0], []).append(row)
        for slice_rows in by_slice.values():
            assert len(slice_rows) == 3
            assert [r[5] for r in slice_rows] == ["1", "2", "3"]

    def test_manova_json_has_both_factors(self, workspace):
        doc = json.loads((workspace / "run" / "manova.json").read_text())
        # single category in fixture -> category factor cannot be fit
        assert "error" in doc or set(doc["factors"]) == {"category", "tier"}

    def test_likes_vs_comments_summary(self, workspace):
        doc = json.loads((workspace / "run" / "likes_vs_comments.json").read_text())
        assert -1.0 <= doc["r_s"] <= 1.0
        assert 0.0 <= doc["p_value"] <= 1.0
        assert doc["n"] == 300

    def test_train_layout_and_model_schema(self, workspace):
        model_path = workspace / "run" / "Pet" / "Nano" / "likes" / "model.json"
        assert model_path.exists()
        doc = json.loads(model_path.read_text())
        assert doc["meta"]["seed"] == 7
        assert doc["winning_point"]["hyperparameters"]["criterion"] in ("gini", "entropy")
        importances = doc["model"]["importances"]
        assert max(importances.values()) == 1.0

    def test_evaluation_csv_mirrors_table2(self, workspace):
        header, rows = read_csv_rows(workspace / "run" / "evaluation.csv")
        assert header[:7] == [
            "category", "tier", "metric",
            "model_f1_mean", "model_f1_std", "dummy_f1_mean", "dummy_f1_std",
        ]
        assert len(rows) == 2
        for row in rows:
            assert float(row[3]) > float(row[5])  # tree beats dummy on fixture

    def test_guidelines_markdown_depth_capped(self, workspace):
        text = (workspace / "run" / "Pet" / "Nano" / "likes" / "guidelines.md").read_text()
        assert "depth capped at 3" in text
        assert "Paths to High leaves" in text

    def test_purity_csv_schema(self, workspace):
        header, rows = read_csv_rows(workspace / "run" / "purity_curves.csv")
        assert header == ["slice", "modality", "k", "pure_fraction"]
        assert {r[1] for r in rows} <= {"image", "text"}
        assert all(0.0 <= float(r[3]) <= 1.0 for r in rows)

    def test_topics_json_schema(self, workspace):
        doc = json.loads(
            (workspace / "run" / "Pet" / "Nano" / "likes" / "topics.json").read_text()
        )
        for topic in doc["topics"]:
            assert set(topic) >= {"anchor", "members", "class", "user_diversity",
                                  "engagement_diversity", "quadrant"}
            assert topic["class"] == 5

    def test_report_has_all_sections(self, workspace):
        text = (workspace / "run" / "report.md").read_text()
        assert "Missing sections" not in text
        assert "## Dataset" in text
        assert "## Top features per slice" in text
        assert "## Model vs dummy" in text
        assert "## Guidelines" in text
        assert "## Hot topics" in text

    def test_report_regeneration_idempotent(self, workspace):
        report = workspace / "run" / "report.md"
        before = report.read_bytes()
        assert run_cli("report", "--config", str(workspace / "run.yaml")) == 0
        assert report.read_bytes() == before

    def test_lock_released(self, workspace):
        assert not (workspace / "run" / ".lock").exists()


class TestPartialReport:
    def test_missing_artifacts_render_banner(self, tmp_path):
        cfg = build_workspace(tmp_path, n=80, with_embeddings=False)
        assert run_cli("ingest", "--config", str(cfg)) == 0
        assert run_cli("report", "--config", str(cfg)) == 0
        text = (tmp_path / "run" / "report.md").read_text()
        assert "Missing sections" in text
        assert "hot topics" in text

    def test_correlate_before_ingest_is_runtime_error(self, tmp_path):
        cfg = build_workspace(tmp_path, n=50, with_embeddings=False)
        assert run_cli("correlate", "--config", str(cfg)) == 2

    def test_topics_without_embeddings_skips_with_note(self, tmp_path):
        cfg = build_workspace(tmp_path, n=80, with_embeddings=False)
        assert run_cli("ingest", "--config", str(cfg)) == 0
        assert run_cli("topics", "--config", str(cfg)) == 0
        doc = json.loads((tmp_path / "run" / "topics_skipped.json").read_text())
        assert all("embeddings" in reason for reason in doc["skipped"].values())


class TestOverrides:
    def test_flag_overrides_config_seed(self, tmp_path):
        cfg = build_workspace(tmp_path, n=60, with_embeddings=False)
        assert run_cli("ingest", "--config", str(cfg), "--seed", "99") == 0
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert manifest["meta"]["seed"] == 99

    def test_out_override(self, tmp_path):
        cfg = build_workspace(tmp_path, n=60, with_embeddings=False)
        assert run_cli("ingest", "--config", str(cfg), "--out", str(tmp_path / "elsewhere")) == 0
        assert (tmp_path / "elsewhere" / "manifest.json").exists()

    def test_unknown_slice_is_validation_error(self, tmp_path):
        cfg = build_workspace(tmp_path, n=60, with_embeddings=False)
        assert run_cli("ingest", "--config", str(cfg), "--slices", "Alien/Nano/likes") == 1


class TestPcaScope:
    def test_global_pca_scope_runs_topics(self, tmp_path):
        cfg = build_workspace(
            tmp_path, n=200, slices="Pet/Nano/likes", pca_scope="global",
            topics_k=15, pca_components=10,
        )
        assert run_cli("ingest", "--config", str(cfg)) == 0
        assert run_cli("topics", "--config", str(cfg)) == 0
        header, rows = read_csv_rows(tmp_path / "run" / "purity_curves.csv")
        assert rows, "global-PCA topics run produced no purity rows"

    def test_invalid_scope_rejected(self, tmp_path):
        cfg = build_workspace(tmp_path, n=60, with_embeddings=False, pca_scope="universe")
        assert run_cli("ingest", "--config", str(cfg)) == 1


class TestGroupedSplits:
    def test_group_by_influencer_flag_runs(self, tmp_path):
        cfg = build_workspace(
            tmp_path, n=300, with_embeddings=False,
            slices="Pet/Nano/likes", group_by_influencer=True,
        )
        assert run_cli("ingest", "--config", str(cfg)) == 0
        assert run_cli("train", "--config", str(cfg)) == 0
        header, rows = read_csv_rows(tmp_path / "run" / "evaluation.csv")
        skipped = json.loads((tmp_path / "run" / "train_skipped.json").read_text())
        assert rows or skipped["skipped"]
