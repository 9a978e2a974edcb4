"""Run configuration: a single YAML (or JSON) file plus CLI overrides.

CLI flags override config keys; the resolved config is hashed (sha256 of its
canonical JSON) and that hash is embedded in every artifact.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import yaml

from .dataset import CATEGORIES, METRICS, TIER_NAMES


class ConfigError(Exception):
    """Invalid or incomplete run configuration (CLI exit code 1)."""


class PipelineError(Exception):
    """Failure while running a pipeline stage (CLI exit code 2)."""


DEFAULTS = {
    "slices": "all",
    "profile": "fast",
    "seed": 0,
    "folds": 5,
    "partitions": 3,
    "test_fraction": 0.25,
    "group_by_influencer": False,
    "pca_scope": "slice",
    "pca_components": 100,
    "topics_k": 50,
    "topics_k_list": [1, 3, 5, 10, 20, 30, 50],
    "overlap_threshold": 0.8,
    "min_slice_rows": 30,
}


@dataclass(frozen=True)
class RunConfig:
    posts: Path
    collection_end: datetime
    out: Path
    embeddings: dict[str, Path] = field(default_factory=dict)
    slices: tuple[tuple[str, str, str], ...] | str = "all"
    profile: str = "fast"
    seed: int = 0
    folds: int = 5
    partitions: int = 3
    test_fraction: float = 0.25
    group_by_influencer: bool = False
    pca_scope: str = "slice"
    pca_components: int = 100
    topics_k: int = 50
    topics_k_list: tuple[int, ...] = (1, 3, 5, 10, 20, 30, 50)
    overlap_threshold: float = 0.8
    min_slice_rows: int = 30
    config_hash: str = ""

    def slice_keys(self) -> list[tuple[str, str, str]]:
        if self.slices == "all":
            return [
                (c, t, m)
                for c, t, m in itertools.product(CATEGORIES, TIER_NAMES, METRICS)
            ]
        return list(self.slices)


def _parse_slice(spec: str) -> tuple[str, str, str]:
    parts = spec.split("/")
    if len(parts) != 3:
        raise ConfigError(f"slice must look like Category/Tier/metric: {spec!r}")
    category, tier, metric = (p.strip() for p in parts)
    if category not in CATEGORIES:
        raise ConfigError(f"unknown category in slice {spec!r}")
    if tier not in TIER_NAMES:
        raise ConfigError(f"unknown tier in slice {spec!r}")
    if metric not in METRICS:
        raise ConfigError(f"unknown metric in slice {spec!r}")
    return category, tier, metric


def _parse_timestamp(raw) -> datetime:
    if isinstance(raw, datetime):
        ts = raw
    else:
        text = str(raw).strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        try:
            ts = datetime.fromisoformat(text)
        except ValueError as exc:
            raise ConfigError(f"unparseable collection_end: {raw!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Load, merge overrides (flags win), validate, and hash the config."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"unparseable config: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")

    merged = dict(DEFAULTS)
    merged.update(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    for key in ("posts", "collection_end", "out"):
        if key not in merged or merged[key] in (None, ""):
            raise ConfigError(f"config is missing required key: {key}")

    base = path.parent

    def resolve(p) -> Path:
        p = Path(str(p))
        return p if p.is_absolute() else (base / p)

    posts = resolve(merged["posts"])
    if not posts.exists():
        raise ConfigError(f"posts file not found: {posts}")

    embeddings = {}
    for modality, emb_path in (merged.get("embeddings") or {}).items():
        if modality not in ("image", "text"):
            raise ConfigError(f"unknown embedding modality: {modality!r}")
        resolved = resolve(emb_path)
        if not resolved.exists():
            raise ConfigError(f"embeddings file not found: {resolved}")
        embeddings[modality] = resolved

    slices = merged["slices"]
    if isinstance(slices, str) and slices != "all":
        slices = [s for s in slices.split(",") if s.strip()]
    if slices != "all":
        slices = tuple(_parse_slice(str(s)) for s in slices)

    if merged["profile"] not in ("fast", "full"):
        raise ConfigError(f"profile must be fast or full, got {merged['profile']!r}")
    if merged["pca_scope"] not in ("slice", "global"):
        raise ConfigError(f"pca_scope must be slice or global, got {merged['pca_scope']!r}")
    if not 0.0 < float(merged["test_fraction"]) < 1.0:
        raise ConfigError("test_fraction must lie in (0, 1)")

    # the hash covers the analytical configuration; the output directory is
    # a destination, so identical analyses into different dirs hash the same
    hash_source = {
        key: str(value) if isinstance(value, (Path,)) else value
        for key, value in sorted(merged.items())
        if key != "out"
    }
    config_hash = hashlib.sha256(
        json.dumps(hash_source, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()[:16]

    return RunConfig(
        posts=posts,
        collection_end=_parse_timestamp(merged["collection_end"]),
        out=resolve(merged["out"]),
        embeddings=embeddings,
        slices=slices,
        profile=str(merged["profile"]),
        seed=int(merged["seed"]),
        folds=int(merged["folds"]),
        partitions=int(merged["partitions"]),
        test_fraction=float(merged["test_fraction"]),
        group_by_influencer=bool(merged["group_by_influencer"]),
        pca_scope=str(merged["pca_scope"]),
        pca_components=int(merged["pca_components"]),
        topics_k=int(merged["topics_k"]),
        topics_k_list=tuple(int(k) for k in merged["topics_k_list"]),
        overlap_threshold=float(merged["overlap_threshold"]),
        min_slice_rows=int(merged["min_slice_rows"]),
        config_hash=config_hash,
    )
