"""Artifact writers: CSV/JSON/JSONL/Markdown, all byte-deterministic.

Every artifact embeds the run meta (config hash, seed, tool version) and
nothing time-dependent, so two runs with identical config and inputs produce
byte-identical files. CSV artifacts carry the meta as a leading ``#`` comment
line; JSON artifacts carry a ``meta`` key; Markdown a footer line.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from .cart import TreeModel, render_tree_text
from .dataset import Diagnostic
from .modeling import EvalReport, GuidelinePath
from .stats import CorrelationResult, ManovaResult
from .topics import TopicNeighborhood


@dataclass(frozen=True)
class RunMeta:
    config_hash: str
    seed: int

    def as_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "version": __version__,
        }

    def comment_line(self) -> str:
        return (
            f"# meta config_hash={self.config_hash} seed={self.seed} "
            f"version={__version__}"
        )


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence], meta: RunMeta) -> None:
    buf = io.StringIO()
    buf.write(meta.comment_line() + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_json(path: Path, payload: dict, meta: RunMeta) -> None:
    doc = {"meta": meta.as_dict()}
    doc.update(payload)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_csv_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    """Read a CSV artifact back, skipping meta comment lines."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    return rows[0], rows[1:]


def write_diagnostics_jsonl(path: Path, diagnostics: Sequence[Diagnostic]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for diag in diagnostics:
            fh.write(json.dumps(diag.as_dict(), sort_keys=True) + "\n")


def slice_label(slice_key: Sequence[str]) -> str:
    return "/".join(slice_key)


def correlation_rows(
    slice_key: Sequence[str],
    ranked: Sequence[CorrelationResult],
    undefined: Sequence[str],
) -> list[list]:
    label = slice_label(slice_key)
    rows: list[list] = []
    for position, res in enumerate(ranked, start=1):
        rows.append([label, res.feature_name, res.r_s, res.p_value, res.n, position])
    for name in undefined:
        rows.append([label, name, "", "", "", ""])
    return rows


CORRELATION_HEADER = ("slice", "feature", "rs", "p_value", "n", "rank")


def manova_payload(results: Sequence[ManovaResult]) -> dict:
    return {
        "factors": {
            r.factor: {
                "pillai_trace": r.pillai_trace,
                "approx_f": r.approx_f,
                "df_num": r.df_num,
                "df_den": r.df_den,
                "p_value": r.p_value,
            }
            for r in results
        }
    }


EVALUATION_HEADER = (
    "category",
    "tier",
    "metric",
    "model_f1_mean",
    "model_f1_std",
    "dummy_f1_mean",
    "dummy_f1_std",
    "cv_score",
    "grid_points",
)


def evaluation_row(slice_key: Sequence[str], report: EvalReport, cv_score: float, n_points: int) -> list:
    category, tier, metric = slice_key
    return [
        category,
        tier,
        metric,
        report.f1_macro_mean,
        report.f1_macro_std,
        report.dummy_f1_mean,
        report.dummy_f1_std,
        cv_score,
        n_points,
    ]


def model_payload(model: TreeModel, report: EvalReport, cv_score: float) -> dict:
    point = report.point
    return {
        "model": model.to_json_dict(),
        "winning_point": {
            "hyperparameters": point.hp.as_dict(),
            "resampling": {
                "strategy": point.strategy,
                "smote_ratio": point.smote_ratio,
                "smote_k": point.smote_k,
            },
            "cv_score": cv_score,
        },
        "evaluation": {
            "partition_scores": list(report.partition_scores),
            "f1_macro_mean": report.f1_macro_mean,
            "f1_macro_std": report.f1_macro_std,
            "dummy_scores": list(report.dummy_scores),
            "dummy_f1_mean": report.dummy_f1_mean,
            "dummy_f1_std": report.dummy_f1_std,
            "confusion_matrices": [
                [list(row) for row in m] for m in report.confusion_matrices
            ],
        },
    }


def guidelines_payload(paths: Sequence[GuidelinePath], threshold: float, metric: str) -> dict:
    return {
        "metric": metric,
        "high_threshold": threshold,
        "paths": [
            {
                "conditions": [
                    {"feature": c[0], "comparator": c[1], "threshold": c[2]}
                    for c in p.conditions
                ],
                "predicted_class": p.predicted_class,
                "support": p.support,
                "purity": p.purity,
                "leaf_id": p.leaf_id,
            }
            for p in paths
        ],
    }


def guidelines_markdown(
    slice_key: Sequence[str],
    model: TreeModel,
    paths: Sequence[GuidelinePath],
    meta: RunMeta,
    max_depth_render: int = 3,
) -> str:
    category, tier, metric = slice_key
    lines = [
        f"# High-engagement guidelines: {category} / {tier} / {metric}",
        "",
        f"Decision rules for reaching the top engagement quartile ({metric}).",
        "",
        f"## Tree (depth capped at {max_depth_render})",
        "",
        "```",
        render_tree_text(model, max_depth=max_depth_render),
        "```",
        "",
        "## Paths to High leaves",
        "",
    ]
    if not paths:
        lines.append("No leaf predicts High engagement for this slice.")
    for i, path in enumerate(paths, start=1):
        lines.append(
            f"{i}. {path.describe()} -> {path.predicted_class} "
            f"(support={path.support}, purity={path.purity:.3f})"
        )
    lines += ["", f"<!-- {meta.comment_line()[2:]} -->", ""]
    return "\n".join(lines)


PURITY_HEADER = ("slice", "modality", "k", "pure_fraction")


def topics_payload(slice_key: Sequence[str], topics: Sequence[TopicNeighborhood]) -> dict:
    return {
        "slice": slice_label(slice_key),
        "topics": [
            {
                "anchor": t.anchor_post,
                "members": list(t.member_posts),
                "class": t.engagement_class,
                "mean_engagement": t.mean_engagement,
                "user_diversity": t.user_diversity,
                "engagement_diversity": t.engagement_diversity,
                "quadrant": t.quadrant,
                "modality": t.modality,
            }
            for t in topics
        ],
    }


def consolidated_report(
    out_dir: Path,
    meta: RunMeta,
    manifest: Mapping | None,
    correlations: Mapping[str, list[list[str]]] | None,
    evaluation_rows: Sequence[Sequence[str]] | None,
    guideline_sections: Mapping[str, str] | None,
    topic_sections: Mapping[str, list[dict]] | None,
) -> str:
    """Single Markdown document; absent inputs render a missing banner."""
    lines = ["# Engagement analytics report", ""]
    missing = []
    if manifest is None:
        missing.append("ingest manifest")
    if correlations is None:
        missing.append("correlation tables")
    if evaluation_rows is None:
        missing.append("model evaluation")
    if topic_sections is None:
        missing.append("hot topics")
    if missing:
        lines += [
            "> **Missing sections:** " + ", ".join(missing) + ".",
            "",
        ]
    if manifest is not None:
        lines += ["## Dataset", ""]
        lines.append(
            f"- rows ingested: {manifest['rows_valid']} "
            f"({manifest['rows_rejected']} rejected)"
        )
        lines.append(f"- rows after window filter: {manifest['rows_after_window']}")
        lines.append(f"- rows analyzed: {manifest['rows_final']}")
        lines.append("")
        lines += ["| category/tier | posts |", "| --- | --- |"]
        for key, count in manifest["slices"].items():
            if count:
                lines.append(f"| {key} | {count} |")
        lines.append("")
    if correlations:
        lines += ["## Top features per slice (by |r_s|)", ""]
        for label in sorted(correlations):
            lines.append(f"### {label}")
            lines.append("")
            lines += ["| rank | feature | r_s | p |", "| --- | --- | --- | --- |"]
            for row in correlations[label][:3]:
                _, feature, rs, p_value, _, position = row
                lines.append(f"| {position} | {feature} | {rs} | {p_value} |")
            lines.append("")
    if evaluation_rows:
        lines += [
            "## Model vs dummy (macro-F1, mean over 3 partitions)",
            "",
            "| category | tier | metric | model | dummy |",
            "| --- | --- | --- | --- | --- |",
        ]
        for row in evaluation_rows:
            category, tier, metric, mean, std, dmean, dstd = row[:7]
            lines.append(
                f"| {category} | {tier} | {metric} | {_round(mean)}±{_round(std)} "
                f"| {_round(dmean)}±{_round(dstd)} |"
            )
        lines.append("")
    if guideline_sections:
        lines += ["## Guidelines", ""]
        for label in sorted(guideline_sections):
            lines.append(f"### {label}")
            lines.append("")
            lines.append(guideline_sections[label])
            lines.append("")
    if topic_sections:
        lines += ["## Hot topics (top engagement class)", ""]
        for label in sorted(topic_sections):
            topics = topic_sections[label]
            lines.append(f"### {label}")
            lines.append("")
            if not topics:
                lines.append("No class-5 pure neighborhoods found.")
                lines.append("")
                continue
            for t in topics:
                lines.append(
                    f"- anchor `{t['anchor']}` ({t['quadrant']}, "
                    f"UD={_round(t['user_diversity'])}, ED={_round(t['engagement_diversity'])}, "
                    f"{len(t['members'])} members)"
                )
            lines.append("")
    lines += [f"<!-- {meta.comment_line()[2:]} -->", ""]
    return "\n".join(lines)


def _round(value) -> str:
    try:
        return f"{float(value):.3f}"
    except (TypeError, ValueError):
        return str(value)
