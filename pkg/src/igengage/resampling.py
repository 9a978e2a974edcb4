"""Class-imbalance correction: SMOTE oversampling and Tomek-link removal.

Both operate on a labeled dataset (see modeling.LabeledDataset) and return a
new one; inputs are never mutated. Neighbor searches run in z-score
standardized feature space (fit on the input table) so heterogeneous units do
not dominate the distances; SMOTE interpolation itself happens in the
original feature space.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .seeds import spawn_rng

STRATEGIES = ("none", "smote", "tomek", "smote_then_tomek")


@dataclass(frozen=True)
class ResamplingPlan:
    strategy: str = "none"
    smote_k: int = 5
    target_ratio: float = 1.0  # minority/majority after oversampling
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy: {self.strategy!r}")
        if self.smote_k < 1:
            raise ValueError("smote_k must be >= 1")
        if not 0.0 < self.target_ratio <= 1.0:
            raise ValueError("target_ratio must lie in (0, 1]")

    def label(self) -> str:
        if self.strategy in ("smote", "smote_then_tomek"):
            return f"{self.strategy}(k={self.smote_k},ratio={self.target_ratio})"
        return self.strategy


def _standardize_params(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    sigma = np.where(sigma == 0.0, 1.0, sigma)
    return mu, sigma


def _class_split(y: np.ndarray) -> tuple[int, int]:
    """(minority_label, majority_label); ties treat label 0 as majority."""
    n1 = int(np.count_nonzero(y == 1))
    n0 = y.size - n1
    if n1 < n0:
        return 1, 0
    if n0 < n1:
        return 0, 1
    return 1, 0


def _nearest_among(Z: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Row-wise squared distances from query points to Z (chunked)."""
    sq_z = (Z * Z).sum(axis=1)
    out = np.empty((query.shape[0], Z.shape[0]))
    chunk = max(1, int(4_000_000 // max(Z.shape[0], 1)))
    for start in range(0, query.shape[0], chunk):
        block = query[start : start + chunk]
        d = sq_z + (block * block).sum(axis=1)[:, None] - 2.0 * block @ Z.T
        np.maximum(d, 0.0, out=d)
        out[start : start + chunk] = d
    return out


def smote(table, plan: ResamplingPlan):
    """Oversample the minority class with synthetic interpolated rows.

    Each synthetic row is x + lam * (x_nn - x) for a seeded-uniform
    lam in [0, 1], with x a random minority row and x_nn one of its
    ``smote_k`` nearest minority neighbors. Rows are appended until
    minority/majority reaches ``plan.target_ratio``; originals are untouched
    and synthetic rows are flagged, with their (base, neighbor, lam)
    provenance recorded against input row indices.
    """
    y = table.y
    minority_label, majority_label = _class_split(y)
    min_idx = np.flatnonzero(y == minority_label)
    maj_idx = np.flatnonzero(y == majority_label)
    n_min, n_maj = min_idx.size, maj_idx.size
    if n_min < 2:
        raise ValueError("SMOTE needs a minority class of at least 2 rows")
    k = plan.smote_k
    if k >= n_min:
        warnings.warn(
            f"smote_k={k} >= minority size {n_min}; clamping to {n_min - 1}",
            RuntimeWarning,
            stacklevel=2,
        )
        k = n_min - 1

    n_target = int(round(plan.target_ratio * n_maj))
    n_synth = max(0, n_target - n_min)
    if n_synth == 0:
        return replace(table)

    X = table.X
    mu, sigma = _standardize_params(X)
    Z_min = (X[min_idx] - mu) / sigma
    dists = _nearest_among(Z_min, Z_min)
    np.fill_diagonal(dists, np.inf)
    # argsort is stable, so equal distances resolve to the lower row index
    neighbor_order = np.argsort(dists, axis=1, kind="stable")[:, :k]

    rng = spawn_rng(plan.seed, "smote")
    bases = rng.integers(0, n_min, size=n_synth)
    picks = rng.integers(0, k, size=n_synth)
    lams = rng.random(n_synth)
    neighbor_local = neighbor_order[bases, picks]
    base_rows = min_idx[bases]
    neighbor_rows = min_idx[neighbor_local]
    synth_X = X[base_rows] + lams[:, None] * (X[neighbor_rows] - X[base_rows])

    new_X = np.vstack([X, synth_X])
    new_y = np.concatenate([y, np.full(n_synth, minority_label, dtype=y.dtype)])
    new_flags = np.concatenate([table.synthetic, np.ones(n_synth, dtype=bool)])
    new_ids = table.row_ids + tuple(f"synth-{i:06d}" for i in range(n_synth))
    # provenance is row-aligned; indices reference rows of the table passed in
    origin = table.synthetic_origin + tuple(
        (int(b), int(nb), float(l)) for b, nb, l in zip(base_rows, neighbor_rows, lams)
    )
    return replace(
        table,
        X=new_X,
        y=new_y,
        synthetic=new_flags,
        row_ids=new_ids,
        synthetic_origin=origin,
    )


def find_tomek_links(X: np.ndarray, y: np.ndarray) -> list[tuple[int, int]]:
    """Opposite-class pairs that are each other's 1-nearest neighbor.

    Distances use the z-score space fit on (X, y) as given. Each link is
    reported once as (i, j) with i < j.
    """
    mu, sigma = _standardize_params(X)
    Z = (X - mu) / sigma
    dists = _nearest_among(Z, Z)
    np.fill_diagonal(dists, np.inf)
    nn = np.argmin(dists, axis=1)  # first occurrence wins distance ties
    links = []
    for i in range(X.shape[0]):
        j = int(nn[i])
        if j > i and int(nn[j]) == i and y[i] != y[j]:
            links.append((i, j))
    return links


def tomek_remove(table):
    """Drop the majority-class endpoint of every Tomek link.

    Removal can expose new links, so the scan repeats until a re-scan finds
    none; minority rows are never removed.
    """
    y = table.y
    if np.count_nonzero(y == 1) == 0 or np.count_nonzero(y == 0) == 0:
        raise ValueError("Tomek removal needs both classes present")
    _, majority_label = _class_split(y)

    keep = np.arange(y.size)
    while True:
        X_cur = table.X[keep]
        y_cur = y[keep]
        if np.count_nonzero(y_cur == 1) == 0 or np.count_nonzero(y_cur == 0) == 0:
            break
        links = find_tomek_links(X_cur, y_cur)
        if not links:
            break
        drop = set()
        for i, j in links:
            drop.add(i if y_cur[i] == majority_label else j)
        keep = np.delete(keep, sorted(drop))

    return replace(
        table,
        X=table.X[keep],
        y=y[keep],
        synthetic=table.synthetic[keep],
        row_ids=tuple(table.row_ids[i] for i in keep),
        synthetic_origin=tuple(table.synthetic_origin[i] for i in keep),
    )


def apply_plan(table, plan: ResamplingPlan):
    """Run the plan's strategy; smote_then_tomek is tomek_remove(smote(.))."""
    if plan.strategy == "none":
        return table
    if plan.strategy == "smote":
        return smote(table, plan)
    if plan.strategy == "tomek":
        return tomek_remove(table)
    if plan.strategy == "smote_then_tomek":
        return tomek_remove(smote(table, plan))
    raise ValueError(f"unknown strategy: {plan.strategy!r}")
