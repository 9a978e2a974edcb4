"""Engagement labeling, cross-validated grid search, evaluation, guidelines.

A slice's engagement values are split at the 0.75 quantile into Low/High;
hyperparameters and resampling plans are tuned by stratified k-fold CV where
resampling only ever touches training folds; the winner is re-evaluated on
three fresh stratified 75/25 partitions against a stratified dummy baseline.

Grid points are independent work units: every random draw comes from a
stream derived from (master seed, fold, plan), so evaluation order (or a
parallel executor) cannot change any result.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .cart import HIGH, LABEL_NAMES, LOW, Hyperparams, TreeModel, fit_tree
from .dataset import FeatureTable
from .resampling import ResamplingPlan, apply_plan
from .seeds import derive_seed, spawn_rng
from .stats import quantile

HIGH_QUANTILE = 0.75


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix plus binary High/Low engagement labels.

    ``synthetic`` flags SMOTE rows; ``synthetic_origin`` is row-aligned
    provenance ((base_row, neighbor_row, lambda) into the pre-resampling
    table, None for originals).
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    threshold_used: float
    metric: str
    row_ids: tuple[str, ...]
    synthetic: np.ndarray
    synthetic_origin: tuple

    def __post_init__(self):
        self.X.setflags(write=False)
        self.y.setflags(write=False)
        self.synthetic.setflags(write=False)

    def __len__(self) -> int:
        return self.y.size

    def subset(self, idx: np.ndarray) -> "LabeledDataset":
        return replace(
            self,
            X=self.X[idx],
            y=self.y[idx],
            row_ids=tuple(self.row_ids[i] for i in idx),
            synthetic=self.synthetic[idx],
            synthetic_origin=tuple(self.synthetic_origin[i] for i in idx),
        )


def label_engagement(table: FeatureTable, metric: str | None = None) -> LabeledDataset:
    """Label rows High iff engagement >= the 0.75 quantile of the slice.

    A value exactly at the threshold counts as High (the top quantile is read
    as boundary-inclusive). Raises on degenerate labelings that leave a class
    empty, e.g. constant engagement.
    """
    metric = metric or table.slice_key[2]
    if len(table) < 8:
        raise ValueError("need at least 8 rows to label engagement")
    values = table.target(metric)
    threshold = quantile(values, HIGH_QUANTILE)
    y = (values >= threshold).astype(np.int8)
    if y.min() == y.max():
        raise ValueError("degenerate labeling: one engagement class is empty")
    return LabeledDataset(
        X=np.array(table.matrix),
        y=y,
        feature_names=table.feature_names,
        threshold_used=float(threshold),
        metric=metric,
        row_ids=tuple(r.post_id for r in table.rows),
        synthetic=np.zeros(len(table), dtype=bool),
        synthetic_origin=(None,) * len(table),
    )


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Mean of the Low and High F1 scores (empty denominators score 0)."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    scores = []
    for cls in (LOW, HIGH):
        tp = int(np.count_nonzero((y_pred == cls) & (y_true == cls)))
        fp = int(np.count_nonzero((y_pred == cls) & (y_true != cls)))
        fn = int(np.count_nonzero((y_pred != cls) & (y_true == cls)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        scores.append(f1)
    return float(np.mean(scores))


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[tuple[int, int], tuple[int, int]]:
    """2x2 matrix indexed [true][pred] over (Low, High)."""
    m = [[0, 0], [0, 0]]
    for t, p in zip(np.asarray(y_true), np.asarray(y_pred)):
        m[int(t)][int(p)] += 1
    return (tuple(m[0]), tuple(m[1]))


def dummy_stratified(
    train_labels: np.ndarray, test_size: int, rng: np.random.Generator
) -> np.ndarray:
    """I.i.d. label draws with probabilities equal to training frequencies."""
    train_labels = np.asarray(train_labels)
    if train_labels.size == 0:
        raise ValueError("train labels must be non-empty")
    p_high = float(np.count_nonzero(train_labels == HIGH)) / train_labels.size
    return (rng.random(test_size) < p_high).astype(np.int8)


def stratified_split(
    y: np.ndarray, test_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled split; both sides keep at least one row per class."""
    test_parts = []
    for cls in (LOW, HIGH):
        members = np.flatnonzero(y == cls)
        if members.size < 2:
            raise ValueError("each class needs at least 2 rows to split")
        shuffled = rng.permutation(members)
        n_test = int(round(test_fraction * members.size))
        n_test = min(max(n_test, 1), members.size - 1)
        test_parts.append(shuffled[:n_test])
    test_idx = np.sort(np.concatenate(test_parts))
    mask = np.ones(y.size, dtype=bool)
    mask[test_idx] = False
    return np.flatnonzero(mask), test_idx


def stratified_folds(
    y: np.ndarray, folds: int, rng: np.random.Generator
) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train_idx, val_idx) per fold, class proportions preserved."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    counts = [int(np.count_nonzero(y == c)) for c in (LOW, HIGH)]
    if min(counts) < folds:
        raise ValueError("smallest class is smaller than the fold count")
    chunks: list[list[np.ndarray]] = [[] for _ in range(folds)]
    for cls in (LOW, HIGH):
        members = rng.permutation(np.flatnonzero(y == cls))
        for f, part in enumerate(np.array_split(members, folds)):
            chunks[f].append(part)
    out = []
    for f in range(folds):
        val_idx = np.sort(np.concatenate(chunks[f]))
        mask = np.ones(y.size, dtype=bool)
        mask[val_idx] = False
        out.append((np.flatnonzero(mask), val_idx))
    return out


def _check_split_classes(y: np.ndarray, parts: Iterable[np.ndarray]) -> None:
    for idx in parts:
        if idx.size == 0 or y[idx].min() == y[idx].max():
            raise ValueError(
                "grouped split left a side without both classes; "
                "too few influencers for group-level splitting"
            )


def grouped_split(
    y: np.ndarray, groups: Sequence, test_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Train/test split keeping all of a group's rows on one side.

    Groups (influencers) are shuffled and moved to the test side until it
    reaches the requested fraction of rows. Not stratified: raises when a
    side ends up single-class.
    """
    groups = np.asarray(groups, dtype=object)
    unique = sorted(set(groups.tolist()))
    order = rng.permutation(len(unique))
    target = test_fraction * y.size
    test_groups: set = set()
    count = 0
    for gi in order:
        if count >= target:
            break
        g = unique[gi]
        test_groups.add(g)
        count += int(np.count_nonzero(groups == g))
    in_test = np.array([g in test_groups for g in groups])
    test_idx = np.flatnonzero(in_test)
    train_idx = np.flatnonzero(~in_test)
    _check_split_classes(y, (train_idx, test_idx))
    return train_idx, test_idx


def grouped_folds(
    y: np.ndarray, groups: Sequence, folds: int, rng: np.random.Generator
) -> list[tuple[np.ndarray, np.ndarray]]:
    """k-fold split at group granularity (smallest fold gets the next group)."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    groups = np.asarray(groups, dtype=object)
    unique = sorted(set(groups.tolist()))
    if len(unique) < folds:
        raise ValueError("fewer groups than folds")
    sizes = {g: int(np.count_nonzero(groups == g)) for g in unique}
    fold_of: dict = {}
    fold_sizes = [0] * folds
    for gi in rng.permutation(len(unique)):
        g = unique[gi]
        f = int(np.argmin(fold_sizes))
        fold_of[g] = f
        fold_sizes[f] += sizes[g]
    out = []
    assignment = np.array([fold_of[g] for g in groups])
    for f in range(folds):
        val_idx = np.flatnonzero(assignment == f)
        train_idx = np.flatnonzero(assignment != f)
        _check_split_classes(y, (train_idx, val_idx))
        out.append((train_idx, val_idx))
    return out


@dataclass(frozen=True)
class GridPoint:
    hp: Hyperparams
    strategy: str = "none"
    smote_ratio: float = 1.0
    smote_k: int = 5

    def plan(self, seed: int = 0) -> ResamplingPlan:
        return ResamplingPlan(
            strategy=self.strategy,
            smote_k=self.smote_k,
            target_ratio=self.smote_ratio,
            seed=seed,
        )

    def plan_key(self) -> tuple:
        # ratio and k are inert for none/tomek; collapsing them lets the CV
        # cache reuse the identical resampled fold
        if self.strategy in ("none", "tomek"):
            return (self.strategy,)
        return (self.strategy, self.smote_ratio, self.smote_k)


FULL_MAX_DEPTHS = (2, 3, 4, 5, 6, 7, 8, 10, 12, 14, 15, 16, 18, 20, None)
FULL_MIN_LEAF = (1, 2, 5, 10, 20, 50)
FULL_MIN_SPLIT = (2, 5, 10, 20, 40)
FAST_MAX_DEPTHS = (3, 5, 10, None)
FAST_MIN_LEAF = (1, 5, 20)
SMOTE_RATIOS = (0.5, 0.75, 1.0)
STRATEGY_AXIS = ("none", "smote", "tomek", "smote_then_tomek")


def grid_points(profile: str = "fast") -> list[GridPoint]:
    """Concrete grid for a profile.

    "full" crosses criterion(2) x max_depth(15) x min_samples_leaf(6) x
    min_samples_split(5) x class_weight(2) x strategy(4) x smote_ratio(3)
    = 21,600 points (the ratio axis is inert for none/tomek, as a naive
    parameter grid would enumerate). "fast" is a 192-point subset sized for
    fixture runs.
    """
    if profile == "full":
        depths, leafs, splits = FULL_MAX_DEPTHS, FULL_MIN_LEAF, FULL_MIN_SPLIT
        ratios = SMOTE_RATIOS
    elif profile == "fast":
        depths, leafs, splits = FAST_MAX_DEPTHS, FAST_MIN_LEAF, (2,)
        ratios = (1.0,)
    else:
        raise ValueError(f"unknown grid profile: {profile!r}")
    points = []
    for crit, depth, leaf, split, cw, strat, ratio in itertools.product(
        ("gini", "entropy"), depths, leafs, splits, ("uniform", "balanced"),
        STRATEGY_AXIS, ratios,
    ):
        points.append(
            GridPoint(
                hp=Hyperparams(
                    criterion=crit,
                    max_depth=depth,
                    min_samples_leaf=leaf,
                    min_samples_split=split,
                    class_weight=cw,
                ),
                strategy=strat,
                smote_ratio=ratio,
            )
        )
    return points


def resample_train_fold(
    data: LabeledDataset, train_idx: np.ndarray, point: GridPoint, seed: int, fold: int
) -> LabeledDataset:
    """Resampled copy of one training fold; validation rows are never touched."""
    plan_seed = derive_seed(seed, "resample", fold, point.strategy, point.smote_ratio, point.smote_k)
    return apply_plan(data.subset(train_idx), point.plan(plan_seed))


@dataclass(frozen=True)
class GridSearchResult:
    best_point: GridPoint
    best_score: float
    n_points: int
    folds: int
    scores: tuple[float, ...]  # mean CV score per grid point, enumeration order


def _simpler(a: GridPoint, b: GridPoint) -> bool:
    """True if a is the simpler model (smaller depth, then larger min leaf)."""
    da = a.hp.max_depth if a.hp.max_depth is not None else np.inf
    db = b.hp.max_depth if b.hp.max_depth is not None else np.inf
    if da != db:
        return da < db
    return a.hp.min_samples_leaf > b.hp.min_samples_leaf


def grid_search(
    data: LabeledDataset,
    grid: str | Sequence[GridPoint] = "fast",
    folds: int = 5,
    seed: int = 0,
    groups: Sequence | None = None,
) -> GridSearchResult:
    """Stratified k-fold CV over the grid; best point by mean macro-F1.

    Resampling is applied inside each training fold only. Score ties resolve
    to the simpler model (smaller max_depth, then larger min_samples_leaf),
    then to enumeration order. Resampled folds are cached per plan, so the
    result is identical to evaluating every grid point independently.
    ``groups`` switches to group-level folds (no influencer straddles folds).
    """
    points = grid_points(grid) if isinstance(grid, str) else list(grid)
    if not points:
        raise ValueError("empty grid")
    if groups is not None:
        fold_indices = grouped_folds(data.y, groups, folds, spawn_rng(seed, "cv"))
    else:
        fold_indices = stratified_folds(data.y, folds, spawn_rng(seed, "cv"))

    cache: dict[tuple, LabeledDataset] = {}

    def train_fold(point: GridPoint, f: int) -> LabeledDataset:
        key = (f, point.plan_key())
        if key not in cache:
            cache[key] = resample_train_fold(data, fold_indices[f][0], point, seed, f)
        return cache[key]

    best_point: GridPoint | None = None
    best_score = -np.inf
    mean_scores = []
    for point in points:
        fold_scores = []
        for f, (_, val_idx) in enumerate(fold_indices):
            train = train_fold(point, f)
            model = fit_tree(train.X, train.y, point.hp, data.feature_names)
            preds = model.predict(data.X[val_idx])
            fold_scores.append(macro_f1(data.y[val_idx], preds))
        score = float(np.mean(fold_scores))
        mean_scores.append(score)
        if (
            best_point is None
            or score > best_score
            or (score == best_score and _simpler(point, best_point))
        ):
            best_point, best_score = point, score
    assert best_point is not None
    return GridSearchResult(
        best_point=best_point,
        best_score=best_score,
        n_points=len(points),
        folds=folds,
        scores=tuple(mean_scores),
    )


@dataclass(frozen=True)
class EvalReport:
    """Macro-F1 of the tuned tree vs the dummy over three fresh partitions."""

    metric: str
    partition_scores: tuple[float, ...]
    dummy_scores: tuple[float, ...]
    confusion_matrices: tuple
    point: GridPoint

    @property
    def f1_macro_mean(self) -> float:
        return float(np.mean(self.partition_scores))

    @property
    def f1_macro_std(self) -> float:
        return float(np.std(self.partition_scores))

    @property
    def dummy_f1_mean(self) -> float:
        return float(np.mean(self.dummy_scores))

    @property
    def dummy_f1_std(self) -> float:
        return float(np.std(self.dummy_scores))


def evaluate(
    data: LabeledDataset,
    point: GridPoint,
    partitions: int = 3,
    test_fraction: float = 0.25,
    seed: int = 0,
    groups: Sequence | None = None,
) -> EvalReport:
    """Refit the winning point on ``partitions`` stratified 75/25 splits.

    Per partition: resample the training side per the point's plan, fit,
    score macro-F1 on the untouched test side, and score the stratified dummy
    on the same split. Mean/std are over the partition scores (population
    std, ddof=0). ``groups`` switches to influencer-grouped splits.
    """
    scores, dummy_scores, matrices = [], [], []
    for p in range(partitions):
        rng = spawn_rng(seed, "partition", p)
        if groups is not None:
            train_idx, test_idx = grouped_split(data.y, groups, test_fraction, rng)
        else:
            train_idx, test_idx = stratified_split(data.y, test_fraction, rng)
        plan_seed = derive_seed(seed, "resample-eval", p, point.strategy, point.smote_ratio)
        train = apply_plan(data.subset(train_idx), point.plan(plan_seed))
        model = fit_tree(train.X, train.y, point.hp, data.feature_names)
        preds = model.predict(data.X[test_idx])
        scores.append(macro_f1(data.y[test_idx], preds))
        matrices.append(confusion_matrix(data.y[test_idx], preds))
        dummy_preds = dummy_stratified(
            data.y[train_idx], test_idx.size, spawn_rng(seed, "dummy", p)
        )
        dummy_scores.append(macro_f1(data.y[test_idx], dummy_preds))
    return EvalReport(
        metric=data.metric,
        partition_scores=tuple(scores),
        dummy_scores=tuple(dummy_scores),
        confusion_matrices=tuple(matrices),
        point=point,
    )


@dataclass(frozen=True)
class GuidelinePath:
    """Root-to-leaf condition list for one leaf predicting the target class.

    Conditions are (feature_name, comparator, threshold) with comparator in
    {"<=", ">"}; repeated features are collapsed to their tightest interval.
    """

    conditions: tuple[tuple[str, str, float], ...]
    predicted_class: str
    support: int
    purity: float
    leaf_id: int

    def matches(self, X: np.ndarray, feature_names: Sequence[str]) -> np.ndarray:
        """Boolean row mask of X satisfying every condition."""
        X = np.asarray(X, dtype=float)
        mask = np.ones(X.shape[0], dtype=bool)
        col = {name: j for j, name in enumerate(feature_names)}
        for name, op, thr in self.conditions:
            values = X[:, col[name]]
            mask &= values <= thr if op == "<=" else values > thr
        return mask

    def describe(self) -> str:
        if not self.conditions:
            return "(always)"
        return " and ".join(f"{n} {op} {t:g}" for n, op, t in self.conditions)


def _collapse_trail(
    model: TreeModel, trail: tuple[tuple[int, str, float], ...]
) -> tuple[tuple[str, str, float], ...]:
    """Tightest interval per feature, in order of first appearance."""
    bounds: dict[int, list[float | None]] = {}
    order: list[int] = []
    for feat, op, thr in trail:
        if feat not in bounds:
            bounds[feat] = [None, None]  # [lower(>), upper(<=)]
            order.append(feat)
        lo, hi = bounds[feat]
        if op == ">":
            bounds[feat][0] = thr if lo is None else max(lo, thr)
        else:
            bounds[feat][1] = thr if hi is None else min(hi, thr)
    conditions: list[tuple[str, str, float]] = []
    for feat in order:
        lo, hi = bounds[feat]
        name = model.feature_names[feat]
        if lo is not None:
            conditions.append((name, ">", lo))
        if hi is not None:
            conditions.append((name, "<=", hi))
    return tuple(conditions)


def extract_guidelines(
    model: TreeModel, target_class: int = HIGH
) -> list[GuidelinePath]:
    """One collapsed GuidelinePath per leaf predicting ``target_class``."""
    paths: list[GuidelinePath] = []
    stack: list[tuple[int, tuple[tuple[int, str, float], ...]]] = [(0, ())]
    while stack:
        node, trail = stack.pop()
        if model.is_leaf(node):
            if int(model.leaf_class[node]) != target_class:
                continue
            counts = model.class_counts[node]
            total = int(counts.sum())
            paths.append(
                GuidelinePath(
                    conditions=_collapse_trail(model, trail),
                    predicted_class=LABEL_NAMES[target_class],
                    support=total,
                    purity=float(counts[target_class] / total) if total else 0.0,
                    leaf_id=node,
                )
            )
            continue
        feat = int(model.feature_index[node])
        thr = float(model.threshold[node])
        # right first so leaves pop out left-to-right
        stack.append((int(model.right[node]), trail + ((feat, ">", thr),)))
        stack.append((int(model.left[node]), trail + ((feat, "<=", thr),)))
    if not paths:
        warnings.warn(
            f"no leaf predicts {LABEL_NAMES[target_class]}; no guidelines extracted",
            RuntimeWarning,
            stacklevel=2,
        )
    return paths
