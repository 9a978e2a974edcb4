"""Batch CLI: ingest -> correlate -> train -> topics -> report.

Every command takes --config (YAML) plus overriding flags, owns the run
directory through a lockfile while it works, and writes deterministic
artifacts (see reports module). Exit codes: 0 success, 1 validation failure,
2 runtime failure.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import ConfigError, PipelineError, RunConfig, load_config
from .dataset import (
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
from .modeling import evaluate, extract_guidelines, grid_search, label_engagement
from .cart import fit_tree
from .reports import (
    CORRELATION_HEADER,
    EVALUATION_HEADER,
    PURITY_HEADER,
    RunMeta,
    consolidated_report,
    correlation_rows,
    evaluation_row,
    guidelines_markdown,
    guidelines_payload,
    manova_payload,
    model_payload,
    read_csv_rows,
    slice_label,
    topics_payload,
    write_csv,
    write_diagnostics_jsonl,
    write_json,
)
from .resampling import apply_plan
from .seeds import derive_seed
from .stats import engagement_manova, engagement_classes, spearman, correlate_features, top_features
from .topics import hot_topic_report, load_embeddings, pca_reduce, purity_curve


class RunLock:
    """One process owns a run directory at a time."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / ".lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise PipelineError(
                f"run directory is locked by another process: {self.path}"
            ) from None
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def _meta(cfg: RunConfig) -> RunMeta:
    return RunMeta(config_hash=cfg.config_hash, seed=cfg.seed)


def _config_options(fn):
    fn = click.option("--config", "config_path", required=True, type=click.Path())(fn)
    fn = click.option("--seed", type=int, default=None, help="override config seed")(fn)
    fn = click.option("--out", type=click.Path(), default=None, help="override output dir")(fn)
    fn = click.option(
        "--slices", default=None, help='e.g. "Pet/Nano/likes,Beauty/Micro/comments" or "all"'
    )(fn)
    fn = click.option(
        "--profile", type=click.Choice(["fast", "full"]), default=None,
        help="grid profile (fast ~192 points, full 21600)",
    )(fn)
    return fn


def _load(config_path, seed, out, slices, profile) -> RunConfig:
    overrides = {"seed": seed, "out": out, "slices": slices, "profile": profile}
    return load_config(config_path, overrides)


@click.group()
@click.version_option(version=__version__)
def cli():
    """Interpretable engagement analytics over Instagram-style post tables."""


# ---------------------------------------------------------------- ingest


def _canonical_posted_at(record: PostRecord) -> str:
    return record.posted_at.isoformat().replace("+00:00", "Z")


def _write_dataset_csv(
    path: Path, records: list[PostRecord], feature_names: list[str], meta: RunMeta
) -> None:
    import csv as _csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(meta.comment_line() + "\n")
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["post_id", "influencer_id", "category", "followers", "likes", "comments", "posted_at"]
            + feature_names
        )
        for record in sorted(records, key=lambda r: r.post_id):
            row = [
                record.post_id,
                record.influencer_id,
                record.category,
                record.followers,
                record.likes,
                record.comments,
                _canonical_posted_at(record),
            ]
            for name in feature_names:
                value = record.features.get(name)
                row.append("" if value is None else repr(value))
            writer.writerow(row)


def _run_ingest(cfg: RunConfig) -> None:
    records, diagnostics = ingest(cfg.posts)
    windowed = filter_window(records, cfg.collection_end)
    final, sub_diags = drop_sub_influencers(windowed)
    if not final:
        raise PipelineError("no posts remain after window and tier filtering")
    feature_names = sorted({k for r in final for k in r.features})
    counts = partition_counts(final)
    manifest = {
        "rows_read": len(records) + len(diagnostics),
        "rows_valid": len(records),
        "rows_rejected": len(diagnostics),
        "rows_after_window": len(windowed),
        "rows_sub_influencer": len(sub_diags),
        "rows_final": len(final),
        "collection_end": cfg.collection_end.isoformat().replace("+00:00", "Z"),
        "features": feature_names,
        "slices": {
            f"{category}/{tier}": n
            for (category, tier), n in sorted(counts.items())
        },
    }
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    _write_dataset_csv(out / "dataset.csv", final, feature_names, _meta(cfg))
    write_diagnostics_jsonl(out / "diagnostics.jsonl", diagnostics + sub_diags)
    write_json(out / "manifest.json", manifest, _meta(cfg))
    click.echo(
        f"ingested {len(final)} posts "
        f"({len(diagnostics)} rejected, {len(sub_diags)} sub-influencer)"
    )


def _read_dataset(cfg: RunConfig) -> list[PostRecord]:
    path = cfg.out / "dataset.csv"
    if not path.exists():
        raise PipelineError(f"dataset artifact missing ({path}); run `igengage ingest` first")
    records, diagnostics = ingest(path)
    if diagnostics:
        raise PipelineError(f"dataset artifact is corrupted: {diagnostics[0].reason}")
    return records


@cli.command("ingest")
@_config_options
def cmd_ingest(config_path, seed, out, slices, profile):
    """Validate, filter, and persist the working dataset."""
    cfg = _load(config_path, seed, out, slices, profile)
    with RunLock(cfg.out):
        _run_ingest(cfg)


# ------------------------------------------------------------- correlate


def _run_correlate(cfg: RunConfig) -> None:
    records = _read_dataset(cfg)
    likes = np.array([r.metrics.likes_rate for r in records])
    comments = np.array([r.metrics.comments_rate for r in records])
    meta = _meta(cfg)
    out = cfg.out

    lvc = spearman(likes, comments)
    write_json(
        out / "likes_vs_comments.json",
        {"r_s": lvc.r_s, "p_value": lvc.p_value, "n": lvc.n},
        meta,
    )

    categories = [r.category for r in records]
    tiers = [assign_tier(r.followers).name for r in records]
    try:
        results = engagement_manova(likes, comments, categories, tiers)
        write_json(out / "manova.json", manova_payload(results), meta)
    except ValueError as exc:
        write_json(out / "manova.json", {"error": str(exc)}, meta)

    feature_names = sorted({k for r in records for k in r.features})
    all_rows: list[list] = []
    top_rows: list[list] = []
    skipped: dict[str, str] = {}
    for key in cfg.slice_keys():
        category, tier, metric = key
        table = slice_table(records, category, tier, metric, feature_names=feature_names)
        label = slice_label(key)
        if len(table) < 3:
            if len(table):
                skipped[label] = f"too few rows ({len(table)})"
            continue
        target = table.target(metric)
        if np.all(target == target[0]):
            skipped[label] = "constant engagement"
            continue
        ranked, undefined = correlate_features(table, metric)
        all_rows.extend(correlation_rows(key, ranked, undefined))
        top_rows.extend(correlation_rows(key, top_features(ranked, 3), []))
    write_csv(out / "correlations.csv", CORRELATION_HEADER, all_rows, meta)
    write_csv(out / "top_features.csv", CORRELATION_HEADER, top_rows, meta)
    write_json(out / "correlate_skipped.json", {"skipped": skipped}, meta)
    click.echo(
        f"correlations for {len({r[0] for r in all_rows})} slices "
        f"({len(skipped)} skipped); likes-vs-comments r_s={lvc.r_s:.3f}"
    )


@cli.command("correlate")
@_config_options
def cmd_correlate(config_path, seed, out, slices, profile):
    """Per-slice feature correlations, MANOVA, and likes-vs-comments check."""
    cfg = _load(config_path, seed, out, slices, profile)
    with RunLock(cfg.out):
        _run_correlate(cfg)


# ----------------------------------------------------------------- train


def _run_train(cfg: RunConfig) -> None:
    records = _read_dataset(cfg)
    feature_names = sorted({k for r in records for k in r.features})
    meta = _meta(cfg)
    out = cfg.out
    eval_rows: list[list] = []
    skipped: dict[str, str] = {}
    for key in cfg.slice_keys():
        category, tier, metric = key
        label = slice_label(key)
        table = slice_table(records, category, tier, metric, feature_names=feature_names)
        if len(table) == 0:
            continue
        if len(table) < cfg.min_slice_rows:
            skipped[label] = f"too few rows ({len(table)} < {cfg.min_slice_rows})"
            continue
        try:
            data = label_engagement(table, metric)
            groups = (
                tuple(r.influencer_id for r in table.rows)
                if cfg.group_by_influencer
                else None
            )
            search = grid_search(
                data,
                cfg.profile,
                folds=cfg.folds,
                seed=derive_seed(cfg.seed, "train", label),
                groups=groups,
            )
            report = evaluate(
                data,
                search.best_point,
                partitions=cfg.partitions,
                test_fraction=cfg.test_fraction,
                seed=derive_seed(cfg.seed, "evaluate", label),
                groups=groups,
            )
        except ValueError as exc:
            skipped[label] = str(exc)
            continue
        plan_seed = derive_seed(cfg.seed, "final-fit", label)
        final_train = apply_plan(data, search.best_point.plan(plan_seed))
        model = fit_tree(final_train.X, final_train.y, search.best_point.hp, data.feature_names)
        paths = extract_guidelines(model)

        slice_dir = out / category / tier / metric
        write_json(
            slice_dir / "model.json",
            model_payload(model, report, search.best_score),
            meta,
        )
        write_json(
            slice_dir / "guidelines.json",
            guidelines_payload(paths, data.threshold_used, metric),
            meta,
        )
        (slice_dir / "guidelines.md").write_text(
            guidelines_markdown(key, model, paths, meta), encoding="utf-8"
        )
        eval_rows.append(evaluation_row(key, report, search.best_score, search.n_points))
        click.echo(
            f"{label}: F1 {report.f1_macro_mean:.3f}±{report.f1_macro_std:.3f} "
            f"vs dummy {report.dummy_f1_mean:.3f}"
        )
    write_csv(out / "evaluation.csv", EVALUATION_HEADER, eval_rows, meta)
    write_json(out / "train_skipped.json", {"skipped": skipped}, meta)
    click.echo(f"trained {len(eval_rows)} slices ({len(skipped)} skipped)")


@cli.command("train")
@_config_options
def cmd_train(config_path, seed, out, slices, profile):
    """Grid-search, evaluate, and export guideline trees per slice."""
    cfg = _load(config_path, seed, out, slices, profile)
    with RunLock(cfg.out):
        _run_train(cfg)


# ---------------------------------------------------------------- topics


def _run_topics(cfg: RunConfig) -> None:
    records = _read_dataset(cfg)
    meta = _meta(cfg)
    out = cfg.out
    by_id = {r.post_id: r for r in records}
    emb_cache: dict[str, object] = {}
    purity_rows: list[list] = []
    skipped: dict[str, str] = {}

    def embedding_for(modality: str):
        if modality not in emb_cache:
            emb_cache[modality] = load_embeddings(cfg.embeddings[modality], modality)
        return emb_cache[modality]

    global_pca: dict[str, object] = {}

    for key in cfg.slice_keys():
        category, tier, metric = key
        label = slice_label(key)
        modality = "image" if metric == "likes" else "text"
        if modality not in cfg.embeddings:
            skipped[label] = f"no {modality} embeddings configured"
            continue
        emb_all = embedding_for(modality)
        posts = slice_posts(records, category, tier)
        ids = [p.post_id for p in posts if p.post_id in set(emb_all.post_ids)]
        if len(ids) < max(8, 5):
            if posts:
                skipped[label] = f"too few embedded posts ({len(ids)})"
            continue
        values = np.array([by_id[p].engagement(metric) for p in ids])
        if np.all(values == values[0]):
            skipped[label] = "constant engagement"
            continue
        if cfg.pca_scope == "global":
            if modality not in global_pca:
                components = min(cfg.pca_components, len(emb_all) - 1, emb_all.vectors.shape[1])
                global_pca[modality] = pca_reduce(emb_all, components).table
            emb_slice = global_pca[modality].select(ids)
        else:
            sub = emb_all.select(ids)
            components = min(cfg.pca_components, len(sub) - 1, sub.vectors.shape[1])
            emb_slice = pca_reduce(sub, components).table
        boundaries = engagement_classes(values, metric)
        k_list = [k for k in cfg.topics_k_list if k < len(ids)]
        if k_list:
            curve = purity_curve(emb_slice, values, boundaries, k_list)
            for k in k_list:
                purity_rows.append([label, modality, k, curve[k]])
        k = min(cfg.topics_k, len(ids) - 1)
        influencers = {p: by_id[p].influencer_id for p in ids}
        topics = hot_topic_report(
            emb_slice,
            values,
            boundaries,
            influencers,
            k=k,
            overlap_threshold=cfg.overlap_threshold,
            slice_key=key,
        )
        write_json(
            out / category / tier / metric / "topics.json",
            topics_payload(key, topics),
            meta,
        )
        click.echo(f"{label}: {len(topics)} hot topics (k={k})")
    write_csv(out / "purity_curves.csv", PURITY_HEADER, purity_rows, meta)
    write_json(out / "topics_skipped.json", {"skipped": skipped}, meta)


@cli.command("topics")
@_config_options
def cmd_topics(config_path, seed, out, slices, profile):
    """Purity curves and hot-topic mining over embeddings."""
    cfg = _load(config_path, seed, out, slices, profile)
    with RunLock(cfg.out):
        _run_topics(cfg)


# ---------------------------------------------------------------- report


def _run_report(cfg: RunConfig) -> None:
    out = cfg.out
    meta = _meta(cfg)

    manifest = None
    manifest_path = out / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))

    correlations = None
    corr_path = out / "correlations.csv"
    if corr_path.exists():
        correlations = {}
        _, rows = read_csv_rows(corr_path)
        for row in rows:
            if row[5] == "":
                continue
            correlations.setdefault(row[0], []).append(row)

    eval_rows = None
    eval_path = out / "evaluation.csv"
    if eval_path.exists():
        _, eval_rows = read_csv_rows(eval_path)

    guideline_sections = None
    topic_sections = None
    model_files = sorted(out.glob("*/*/*/model.json"))
    if model_files:
        guideline_sections = {}
        for model_file in model_files:
            slice_dir = model_file.parent
            label = "/".join(slice_dir.relative_to(out).parts)
            doc = json.loads(model_file.read_text(encoding="utf-8"))
            importances = sorted(
                doc["model"]["importances"].items(), key=lambda kv: (-kv[1], kv[0])
            )[:5]
            lines = ["Top feature importances:", ""]
            lines += [f"- {name}: {value:.3f}" for name, value in importances if value > 0]
            gpath = slice_dir / "guidelines.json"
            if gpath.exists():
                gdoc = json.loads(gpath.read_text(encoding="utf-8"))
                lines += ["", "High-engagement paths:", ""]
                for p in gdoc["paths"]:
                    conds = " and ".join(
                        f"{c['feature']} {c['comparator']} {c['threshold']:g}"
                        for c in p["conditions"]
                    ) or "(always)"
                    lines.append(
                        f"- {conds} (support={p['support']}, purity={p['purity']:.3f})"
                    )
            guideline_sections[label] = "\n".join(lines)
    topic_files = sorted(out.glob("*/*/*/topics.json"))
    if topic_files:
        topic_sections = {}
        for topic_file in topic_files:
            label = "/".join(topic_file.parent.relative_to(out).parts)
            doc = json.loads(topic_file.read_text(encoding="utf-8"))
            topic_sections[label] = doc["topics"]

    text = consolidated_report(
        out, meta, manifest, correlations, eval_rows, guideline_sections, topic_sections
    )
    (out / "report.md").write_text(text, encoding="utf-8")
    click.echo(f"report written to {out / 'report.md'}")


@cli.command("report")
@_config_options
def cmd_report(config_path, seed, out, slices, profile):
    """Consolidated Markdown report from whatever artifacts exist."""
    cfg = _load(config_path, seed, out, slices, profile)
    with RunLock(cfg.out):
        _run_report(cfg)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 2
    except (ConfigError, IngestError) as exc:
        click.echo(f"validation error: {exc}", err=True)
        return 1
    except PipelineError as exc:
        click.echo(f"runtime error: {exc}", err=True)
        return 2
    except click.Abort:
        return 2


if __name__ == "__main__":
    sys.exit(main())
