"""CART binary classifier: greedy impurity-minimizing axis splits.

The tree is grown depth-first. At each node every feature is scanned in
index order; candidate thresholds are the midpoints between consecutive
distinct sorted values, and the (feature, threshold) pair with the largest
weighted impurity decrease wins. Ties resolve to the lowest feature index,
then the lowest threshold, which makes refits bit-reproducible.

Class labels are 0 (Low) and 1 (High). "balanced" class weighting assigns
w_c = n / (2 * n_c) as usual; impurities and leaf votes use weighted counts,
while min_samples_* constraints count raw rows.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

CRITERIA = ("gini", "entropy")
CLASS_WEIGHTS = ("uniform", "balanced")

LOW, HIGH = 0, 1
LABEL_NAMES = ("Low", "High")


@dataclass(frozen=True)
class Hyperparams:
    criterion: str = "gini"
    max_depth: int | None = None
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    class_weight: str = "uniform"

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion: {self.criterion!r}")
        if self.class_weight not in CLASS_WEIGHTS:
            raise ValueError(f"unknown class_weight: {self.class_weight!r}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 (or None for unlimited)")
        if self.min_samples_leaf < 1 or self.min_samples_split < 2:
            raise ValueError("min_samples_leaf >= 1 and min_samples_split >= 2 required")

    def as_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "min_samples_split": self.min_samples_split,
            "class_weight": self.class_weight,
        }


def _impurity(counts: np.ndarray, criterion: str) -> np.ndarray:
    """Gini or entropy of weighted class-count rows (last axis = classes)."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(total > 0, counts / total, 0.0)
    if criterion == "gini":
        return 1.0 - (p * p).sum(axis=-1)
    logp = np.zeros_like(p)
    np.log2(p, where=p > 0, out=logp)
    return -(p * logp).sum(axis=-1)


@dataclass
class _SplitChoice:
    feature: int
    threshold: float
    gain: float


class TreeModel:
    """Fitted CART tree stored as parallel node arrays.

    ``feature_index[i] == -1`` marks a leaf. ``class_counts`` holds raw
    per-class row counts; ``importances`` are per-feature impurity decreases
    weighted by node sample fraction and normalized so the maximum is 1.
    """

    def __init__(
        self,
        feature_index: np.ndarray,
        threshold: np.ndarray,
        left: np.ndarray,
        right: np.ndarray,
        class_counts: np.ndarray,
        impurity: np.ndarray,
        depth: np.ndarray,
        leaf_class: np.ndarray,
        hyperparams: Hyperparams,
        feature_names: tuple[str, ...],
        importances: np.ndarray,
    ):
        self.feature_index = feature_index
        self.threshold = threshold
        self.left = left
        self.right = right
        self.class_counts = class_counts
        self.impurity = impurity
        self.depth = depth
        self.leaf_class = leaf_class
        self.hyperparams = hyperparams
        self.feature_names = feature_names
        self.importances = importances

    @property
    def n_nodes(self) -> int:
        return self.feature_index.size

    def is_leaf(self, node: int) -> bool:
        return self.feature_index[node] < 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node id for every row."""
        X = np.asarray(X, dtype=float)
        nodes = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature_index[nodes] >= 0
        while np.any(active):
            cur = nodes[active]
            feat = self.feature_index[cur]
            goes_left = X[active, feat] <= self.threshold[cur]
            nodes[active] = np.where(goes_left, self.left[cur], self.right[cur])
            active = self.feature_index[nodes] >= 0
        return nodes

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_class[self.apply(X)]

    def leaves(self) -> list[int]:
        return [i for i in range(self.n_nodes) if self.is_leaf(i)]

    def schema_hash(self) -> str:
        payload = json.dumps(list(self.feature_names), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def to_json_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            leaf = self.is_leaf(i)
            nodes.append(
                {
                    "id": i,
                    "feature_index": int(self.feature_index[i]) if not leaf else None,
                    "feature": self.feature_names[self.feature_index[i]] if not leaf else None,
                    "threshold": float(self.threshold[i]) if not leaf else None,
                    "left": int(self.left[i]) if not leaf else None,
                    "right": int(self.right[i]) if not leaf else None,
                    "class_counts": [int(c) for c in self.class_counts[i]],
                    "impurity": float(self.impurity[i]),
                    "predicted_class": LABEL_NAMES[int(self.leaf_class[i])],
                }
            )
        return {
            "nodes": nodes,
            "hyperparameters": self.hyperparams.as_dict(),
            "importances": {
                name: float(v) for name, v in zip(self.feature_names, self.importances)
            },
            "feature_names": list(self.feature_names),
            "schema_hash": self.schema_hash(),
        }


def _pair_impurity(c0: np.ndarray, c1: np.ndarray, criterion: str) -> np.ndarray:
    """Impurity from two weighted class-count arrays (elementwise)."""
    total = c0 + c1
    with np.errstate(invalid="ignore", divide="ignore"):
        p0 = np.where(total > 0, c0 / total, 0.0)
        p1 = np.where(total > 0, c1 / total, 0.0)
    if criterion == "gini":
        return 1.0 - p0 * p0 - p1 * p1
    out = np.zeros_like(p0)
    for p in (p0, p1):
        logp = np.zeros_like(p)
        np.log2(p, where=p > 0, out=logp)
        out -= p * logp
    return out


def _best_split(
    X: np.ndarray,
    y: np.ndarray,
    order: np.ndarray,
    weights: np.ndarray,
    hp: Hyperparams,
    parent_impurity: float,
) -> _SplitChoice | None:
    """Scan all features at once for the best threshold.

    ``order`` holds the node's rows presorted per feature (column j = row
    indices ascending by feature j); sorted orders are partitioned down the
    tree rather than re-sorted per node. Candidate cuts sit between
    consecutive distinct values; ties in gain go to the lowest feature
    index, then the lowest threshold (feature-major argmax scan).
    """
    n, n_features = order.shape
    if n < 2:
        return None
    w0, w1 = float(weights[0]), float(weights[1])
    xs = X[order, np.arange(n_features)[None, :]]  # n x f, sorted per column
    ys = y[order]
    total1 = float(np.count_nonzero(ys[:, 0]))
    total0 = float(n - total1)
    w_total = w0 * total0 + w1 * total1

    l1 = np.cumsum(ys, axis=0, dtype=np.int64)[:-1].astype(float)  # High count left of cut
    ln = np.arange(1, n, dtype=float)[:, None]
    l0 = ln - l1
    r1 = total1 - l1
    r0 = total0 - l0
    wl = w0 * l0 + w1 * l1
    wr = w0 * r0 + w1 * r1
    child = (
        wl * _pair_impurity(w0 * l0, w1 * l1, hp.criterion)
        + wr * _pair_impurity(w0 * r0, w1 * r1, hp.criterion)
    ) / w_total
    gains = parent_impurity - child

    valid = xs[1:] != xs[:-1]  # cut only between distinct values
    if hp.min_samples_leaf > 1:
        k = hp.min_samples_leaf
        valid[: k - 1] = False
        valid[n - k :] = False
    gains[~valid] = -np.inf

    pos = int(np.argmax(gains.T))  # feature-major: lowest feature, then lowest cut
    j, i = divmod(pos, n - 1)
    if not np.isfinite(gains[i, j]):
        return None
    thr = float((xs[i, j] + xs[i + 1, j]) / 2.0)
    return _SplitChoice(feature=j, threshold=thr, gain=float(gains[i, j]))


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    hp: Hyperparams,
    feature_names: Sequence[str] | None = None,
) -> TreeModel:
    """Grow a CART tree on (X, y) with labels in {0, 1}."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise ValueError("X must be n x f and y length n")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    n0 = int(np.count_nonzero(y == 0))
    n1 = y.size - n0
    if n0 == 0 or n1 == 0:
        raise ValueError("both classes must be present")
    if feature_names is None:
        feature_names = tuple(f"f{j}" for j in range(X.shape[1]))
    feature_names = tuple(feature_names)
    if len(feature_names) != X.shape[1]:
        raise ValueError("feature_names length must match the column count")

    if hp.class_weight == "balanced":
        weights = np.array([y.size / (2.0 * n0), y.size / (2.0 * n1)])
    else:
        weights = np.array([1.0, 1.0])

    feat_col: list[int] = []
    thr_col: list[float] = []
    left_col: list[int] = []
    right_col: list[int] = []
    counts_col: list[tuple[int, int]] = []
    imp_col: list[float] = []
    depth_col: list[int] = []
    raw_importance = np.zeros(X.shape[1])

    w_root = weights[0] * n0 + weights[1] * n1

    def new_node(depth: int) -> int:
        feat_col.append(-1)
        thr_col.append(math.nan)
        left_col.append(-1)
        right_col.append(-1)
        counts_col.append((0, 0))
        imp_col.append(0.0)
        depth_col.append(depth)
        return len(feat_col) - 1

    # explicit stack keeps deep trees off the Python recursion limit; each
    # entry carries the node's per-feature presorted row orders
    root = new_node(0)
    root_order = np.argsort(X, axis=0, kind="stable")
    in_left = np.zeros(y.size, dtype=bool)  # scratch, reused across splits
    stack: list[tuple[int, np.ndarray]] = [(root, root_order)]
    while stack:
        node, order = stack.pop()
        depth = depth_col[node]
        idx = order[:, 0]
        node_n1 = int(np.count_nonzero(y[idx]))
        node_n0 = idx.size - node_n1
        counts_col[node] = (node_n0, node_n1)
        wc = np.array([weights[0] * node_n0, weights[1] * node_n1])
        node_imp = float(_impurity(wc, hp.criterion))
        imp_col[node] = node_imp

        stop = (
            node_imp == 0.0
            or idx.size < hp.min_samples_split
            or (hp.max_depth is not None and depth >= hp.max_depth)
        )
        choice = None
        if not stop:
            choice = _best_split(X, y, order, weights, hp, node_imp)
        if choice is None:
            continue

        in_left[idx] = X[idx, choice.feature] <= choice.threshold
        n_left = int(np.count_nonzero(in_left[idx]))
        left_order = np.empty((n_left, order.shape[1]), dtype=order.dtype)
        right_order = np.empty((idx.size - n_left, order.shape[1]), dtype=order.dtype)
        for c in range(order.shape[1]):
            col = order[:, c]
            mask = in_left[col]
            left_order[:, c] = col[mask]
            right_order[:, c] = col[~mask]
        feat_col[node] = choice.feature
        thr_col[node] = choice.threshold
        w_node = wc.sum()
        raw_importance[choice.feature] += (w_node / w_root) * choice.gain
        left_node = new_node(depth + 1)
        right_node = new_node(depth + 1)
        left_col[node] = left_node
        right_col[node] = right_node
        # right pushed first so the left child is materialized next (preorder ids)
        stack.append((right_node, right_order))
        stack.append((left_node, left_order))

    counts = np.array(counts_col, dtype=np.int64)
    weighted = counts * weights[None, :]
    # leaf vote: argmax of weighted counts, ties to Low
    leaf_class = (weighted[:, 1] > weighted[:, 0]).astype(np.int8)

    if raw_importance.max() > 0:
        importances = raw_importance / raw_importance.max()
    else:
        importances = raw_importance

    return TreeModel(
        feature_index=np.array(feat_col, dtype=np.int64),
        threshold=np.array(thr_col),
        left=np.array(left_col, dtype=np.int64),
        right=np.array(right_col, dtype=np.int64),
        class_counts=counts,
        impurity=np.array(imp_col),
        depth=np.array(depth_col, dtype=np.int64),
        leaf_class=leaf_class,
        hyperparams=hp,
        feature_names=feature_names,
        importances=importances,
    )


def feature_importance(model: TreeModel) -> list[tuple[str, float]]:
    """(feature, importance) ranked descending, max-normalized to 1."""
    if model.importances.max() == 0:
        warnings.warn("tree has no splits; all importances are zero", RuntimeWarning, stacklevel=2)
    pairs = list(zip(model.feature_names, (float(v) for v in model.importances)))
    pairs.sort(key=lambda p: (-p[1], p[0]))
    return pairs


def render_tree_text(model: TreeModel, max_depth: int | None = None) -> str:
    """Indented if/else rendering, truncated at ``max_depth`` levels."""
    lines: list[str] = []

    def walk(node: int, depth: int) -> None:
        pad = "  " * depth
        n0, n1 = model.class_counts[node]
        if model.is_leaf(node) or (max_depth is not None and depth >= max_depth):
            label = LABEL_NAMES[int(model.leaf_class[node])]
            more = "" if model.is_leaf(node) else " [subtree truncated]"
            lines.append(f"{pad}-> {label} (Low={n0}, High={n1}){more}")
            return
        name = model.feature_names[model.feature_index[node]]
        thr = model.threshold[node]
        lines.append(f"{pad}if {name} <= {thr:g}:")
        walk(model.left[node], depth + 1)
        lines.append(f"{pad}else:  # {name} > {thr:g}")
        walk(model.right[node], depth + 1)

    walk(0, 0)
    return "\n".join(lines)
