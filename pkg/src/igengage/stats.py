"""Rank statistics, quantiles, percentile classes, and two-factor MANOVA.

All operations are pure functions over immutable arrays; nothing here mutates
its inputs, so slices can be processed in parallel.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as _sps


@dataclass(frozen=True)
class CorrelationResult:
    """Spearman correlation of one feature against an engagement metric."""

    feature_name: str
    r_s: float
    p_value: float
    n: int


@dataclass(frozen=True)
class ManovaResult:
    factor: str
    pillai_trace: float
    approx_f: float
    df_num: int
    df_den: int
    p_value: float


@dataclass(frozen=True)
class EngagementClassBoundaries:
    """Four ascending cutpoints splitting a metric into five percentile classes.

    Cutpoints sit at the 0.2/0.4/0.6/0.8 quantiles. Classes are numbered 1..5,
    intervals closed on the left (a value equal to a cutpoint belongs to the
    class above it); class 5 is closed on both ends. Degenerate data where all
    four cutpoints coincide maps everything at or below the cutpoint to
    class 1, everything above to class 5.
    """

    metric: str | None
    cutpoints: tuple[float, float, float, float]

    def classify(self, value: float) -> int:
        return int(self.classify_many(np.asarray([value]))[0])

    def classify_many(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        cuts = np.asarray(self.cutpoints)
        if cuts[0] == cuts[3]:
            return np.where(values <= cuts[0], 1, 5)
        return 1 + np.searchsorted(cuts, values, side="right").astype(int)


def _validate_vector(values, name: str = "values") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def rank(values) -> np.ndarray:
    """Ranks 1..n with ties receiving the average of the ranks they span."""
    arr = _validate_vector(values)
    order = np.argsort(arr, kind="stable")
    sorted_vals = arr[order]
    run_start = np.r_[True, sorted_vals[1:] != sorted_vals[:-1]]
    run_id = np.cumsum(run_start) - 1
    counts = np.bincount(run_id)
    first_rank = np.concatenate(([0], np.cumsum(counts)[:-1])) + 1
    avg_rank = first_rank + (counts - 1) / 2.0
    ranks = np.empty_like(arr)
    ranks[order] = avg_rank[run_id]
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        raise ValueError("undefined correlation: constant input vector")
    return float(np.clip((xc @ yc) / denom, -1.0, 1.0))


def _exact_permutation_p(rx: np.ndarray, ry: np.ndarray, r_obs: float) -> float:
    """Two-sided permutation p-value over all n! orderings of the y ranks."""
    n = rx.size
    if n > 10:
        raise ValueError("exact permutation p-value supported only for n <= 10")
    xc = rx - rx.mean()
    yc = ry - ry.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    threshold = (abs(r_obs) - 1e-12) * denom
    total = math.factorial(n)
    hits = 0
    perm_iter = itertools.permutations(yc)
    chunk = 200_000
    while True:
        block = np.array(list(itertools.islice(perm_iter, chunk)))
        if block.size == 0:
            break
        hits += int(np.count_nonzero(np.abs(block @ xc) >= threshold))
    return hits / total


def spearman(x, y, p_method: str = "t") -> CorrelationResult:
    """Spearman rank correlation: Pearson correlation of the rank vectors.

    The p-value comes from the two-tailed t-approximation
    t = r_s * sqrt((n-2) / (1-r_s^2)) with n-2 degrees of freedom; |r_s| = 1
    maps to p = 0. ``p_method="exact"`` switches to the full permutation
    distribution (n <= 10 only).
    """
    xa = _validate_vector(x, "x")
    ya = _validate_vector(y, "y")
    if xa.size != ya.size:
        raise ValueError("x and y must have equal length")
    n = xa.size
    if n < 3:
        raise ValueError("need at least 3 observations")
    rx, ry = rank(xa), rank(ya)
    r_s = _pearson(rx, ry)
    if abs(r_s) >= 1.0 - 1e-15:
        p = 0.0
    elif p_method == "t":
        t = r_s * math.sqrt((n - 2) / (1.0 - r_s * r_s))
        p = float(2.0 * _sps.t.sf(abs(t), n - 2))
    elif p_method == "exact":
        p = _exact_permutation_p(rx, ry, r_s)
    else:
        raise ValueError(f"unknown p_method: {p_method!r}")
    return CorrelationResult(feature_name="", r_s=r_s, p_value=p, n=n)


def correlate_features(table, metric: str) -> tuple[list[CorrelationResult], list[str]]:
    """Spearman of every feature against the engagement metric.

    Returns (ranked, undefined): ranked results sorted by |r_s| descending
    with ties broken by feature name; constant features are reported in
    ``undefined`` and excluded from the ranking.
    """
    target = table.target(metric)
    if table.matrix.shape[0] == 0:
        raise ValueError("empty table")
    ranked: list[CorrelationResult] = []
    undefined: list[str] = []
    for j, name in enumerate(table.feature_names):
        col = table.matrix[:, j]
        try:
            res = spearman(col, target)
        except ValueError:
            undefined.append(name)
            continue
        ranked.append(CorrelationResult(name, res.r_s, res.p_value, res.n))
    ranked.sort(key=lambda r: (-abs(r.r_s), r.feature_name))
    return ranked, undefined


def top_features(ranked: Sequence[CorrelationResult], n: int = 3) -> list[CorrelationResult]:
    """Head of a ranked correlation list (the per-slice top-3 report shape)."""
    return list(ranked[:n])


def quantile(values, q: float) -> float:
    """Linear-interpolation quantile between closest ranks (type 7)."""
    arr = _validate_vector(values)
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    s = np.sort(arr)
    h = (s.size - 1) * q
    lo = int(math.floor(h))
    if lo >= s.size - 1:
        return float(s[-1])
    frac = h - lo
    return float(s[lo] + frac * (s[lo + 1] - s[lo]))


def engagement_classes(values, metric: str | None = None) -> EngagementClassBoundaries:
    """Fit five percentile classes (20/40/60/80 cutpoints) to a metric vector."""
    arr = _validate_vector(values)
    if arr.size < 5:
        raise ValueError("need at least 5 values to fit five classes")
    cuts = tuple(quantile(arr, q) for q in (0.2, 0.4, 0.6, 0.8))
    if len(set(cuts)) < 4:
        warnings.warn(
            "engagement class cutpoints coincide; some classes will be empty",
            RuntimeWarning,
            stacklevel=2,
        )
    return EngagementClassBoundaries(metric=metric, cutpoints=cuts)


def _dummy_code(labels: Sequence, name: str) -> tuple[np.ndarray, list]:
    """Treatment-coded dummy columns (first level dropped), levels sorted."""
    levels = sorted(set(labels))
    if len(levels) < 2:
        raise ValueError(f"factor {name} needs at least 2 levels")
    index = {lev: i for i, lev in enumerate(levels)}
    codes = np.asarray([index[l] for l in labels])
    cols = np.zeros((len(labels), len(levels) - 1))
    for i in range(1, len(levels)):
        cols[codes == i, i - 1] = 1.0
    return cols, levels


def manova_pillai(
    responses,
    factor_a: Sequence,
    factor_b: Sequence,
    factor_a_name: str = "category",
    factor_b_name: str = "tier",
) -> tuple[ManovaResult, ManovaResult]:
    """Two-way additive MANOVA (no interaction) with Pillai's trace per factor.

    For each factor the hypothesis SSCP is H = (LB)' [L (X'X)^-1 L']^-1 (LB)
    with L selecting that factor's coefficients in the additive model
    Y = X B + eps, and E the residual SSCP. Pillai's trace is
    V = tr(H (H+E)^-1). The F approximation uses the standard s, m, n
    parameterization:

        s = min(p, q),  m = (|p - q| - 1) / 2,  n = (v - p - 1) / 2
        F = [(2n + s + 1) / (2m + s + 1)] * (V / s) / (1 - V / s)

    on s(2m + s + 1) and s(2n + s + 1) degrees of freedom, where p is the
    number of responses, q the factor's hypothesis df, and v the residual df.
    """
    Y = np.asarray(responses, dtype=float)
    if Y.ndim != 2 or Y.shape[1] < 2:
        raise ValueError("responses must be an n x p matrix with p >= 2")
    if not np.all(np.isfinite(Y)):
        raise ValueError("responses contain non-finite entries")
    n_obs, p = Y.shape
    if not (len(factor_a) == len(factor_b) == n_obs):
        raise ValueError("factor label lengths must match the response rows")

    a_cols, a_levels = _dummy_code(factor_a, factor_a_name)
    b_cols, b_levels = _dummy_code(factor_b, factor_b_name)
    if n_obs <= len(a_levels) + len(b_levels):
        raise ValueError("too few observations for the two-factor model")

    X = np.column_stack([np.ones(n_obs), a_cols, b_cols])
    k = X.shape[1]
    xtx = X.T @ X
    if np.linalg.matrix_rank(xtx) < k:
        raise ValueError("degenerate design matrix: confounded factors")
    xtx_inv = np.linalg.inv(xtx)
    beta = xtx_inv @ (X.T @ Y)
    resid = Y - X @ beta
    E = resid.T @ resid
    if np.linalg.matrix_rank(E) < p or np.linalg.cond(E) > 1e12:
        raise ValueError("degenerate residual covariance")
    v = n_obs - k

    results = []
    offsets = {
        factor_a_name: (1, 1 + a_cols.shape[1]),
        factor_b_name: (1 + a_cols.shape[1], k),
    }
    for name, (lo, hi) in offsets.items():
        q = hi - lo
        L = np.zeros((q, k))
        L[np.arange(q), np.arange(lo, hi)] = 1.0
        LB = L @ beta
        M = L @ xtx_inv @ L.T
        H = LB.T @ np.linalg.solve(M, LB)
        V = float(np.trace(H @ np.linalg.inv(H + E)))
        s = min(p, q)
        m = (abs(p - q) - 1) / 2.0
        nn = (v - p - 1) / 2.0
        df_num = int(round(s * (2 * m + s + 1)))
        df_den = int(round(s * (2 * nn + s + 1)))
        ratio = V / s
        if ratio >= 1.0:
            approx_f, p_value = math.inf, 0.0
        else:
            approx_f = ((2 * nn + s + 1) / (2 * m + s + 1)) * ratio / (1.0 - ratio)
            p_value = float(_sps.f.sf(approx_f, df_num, df_den))
        results.append(
            ManovaResult(
                factor=name,
                pillai_trace=V,
                approx_f=float(approx_f),
                df_num=df_num,
                df_den=df_den,
                p_value=p_value,
            )
        )
    return results[0], results[1]


def engagement_manova(
    likes_rate: Iterable[float],
    comments_rate: Iterable[float],
    categories: Sequence,
    tiers: Sequence,
) -> tuple[ManovaResult, ManovaResult]:
    """MANOVA of the engagement rates on category and tier.

    The follower-normalized rates are rank-transformed per response before
    fitting, which tames their heavy tails without picking a parametric
    rescaling.
    """
    responses = np.column_stack([rank(likes_rate), rank(comments_rate)])
    return manova_pillai(responses, categories, tiers)
