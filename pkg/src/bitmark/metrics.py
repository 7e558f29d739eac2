"""Score-population metrics: empirical thresholds, TPR@FPR, AUC, Mann-Whitney U."""

from __future__ import annotations

import math
from statistics import NormalDist

import numpy as np

from .errors import DomainError, StatisticsError


def _scores(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise DomainError(f"{name} population is empty")
    if not np.isfinite(arr).all():
        raise DomainError(f"{name} population has non-finite scores")
    return arr


def threshold_at_fpr(negative_scores, fpr: float) -> float:
    """Smallest t with ``mean(neg > t) <= fpr``.

    That t is always one of the negative scores: the (k+1)-th largest, where
    k = floor(fpr * N) false positives are allowed.
    """
    neg = _scores(negative_scores, "negative")
    if not 0.0 < fpr < 1.0:
        raise DomainError(f"fpr must be in (0, 1), got {fpr}")
    allowed = math.floor(fpr * neg.size + 1e-9)
    desc = np.sort(neg)[::-1]
    return float(desc[min(allowed, neg.size - 1)])


def gaussian_threshold(fpr: float) -> float:
    return NormalDist().inv_cdf(1.0 - fpr)


def tpr_at_fpr(positive_scores, negative_scores, fpr: float) -> float:
    pos = _scores(positive_scores, "positive")
    t = threshold_at_fpr(negative_scores, fpr)
    return float(np.count_nonzero(pos > t)) / pos.size


def rankdata(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties get the mean of their positions."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(values.size, dtype=np.float64)
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], values.size]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = 0.5 * (s + 1 + e)
    return ranks


def _u_statistic(a: np.ndarray, b: np.ndarray):
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    u = ranks[: a.size].sum() - a.size * (a.size + 1) / 2.0
    return float(u), ranks


def auc(positive_scores, negative_scores) -> float:
    """P(random positive > random negative), ties count one half."""
    pos = _scores(positive_scores, "positive")
    neg = _scores(negative_scores, "negative")
    u, _ = _u_statistic(pos, neg)
    return u / (pos.size * neg.size)


def _exact_upper_tail(ranks: np.ndarray, n_a: int, u_obs: float) -> float:
    """P(U >= u_obs) under random assignment of the pooled ranks.

    Counts subsets by doubled rank sum so tied (half-integer) ranks stay
    integral.
    """
    doubled = np.rint(2 * ranks).astype(np.int64)
    max_sum = int(doubled.sum())
    # ways[k][s]: number of k-subsets with doubled rank sum s
    ways = np.zeros((n_a + 1, max_sum + 1), dtype=object)
    ways[0][0] = 1
    for d in doubled:
        for k in range(n_a, 0, -1):
            ways[k][d:] = ways[k][d:] + ways[k - 1][: max_sum + 1 - d]
    offset = n_a * (n_a + 1)  # doubled min rank sum
    s_obs = int(round(2 * u_obs)) + offset
    total = sum(ways[n_a])
    return float(sum(ways[n_a][s_obs:]) / total)


def mann_whitney_u(sample_a, sample_b, method: str = "auto"):
    """One-tailed Mann-Whitney U test of ``a`` tending to exceed ``b``.

    Returns ``(U, p)`` with U the number of pairs where a wins (ties one
    half). ``method`` is "exact" (permutation distribution, tie-aware),
    "normal" (tie-corrected normal approximation, no continuity correction)
    or "auto" (exact when both samples have at most 20 elements).
    """
    a = _scores(sample_a, "first")
    b = _scores(sample_b, "second")
    u, ranks = _u_statistic(a, b)
    if np.all(ranks == ranks[0]):
        raise StatisticsError("all observations are tied")
    if method == "auto":
        method = "exact" if max(a.size, b.size) <= 20 else "normal"
    if method == "exact":
        return u, _exact_upper_tail(ranks, a.size, u)
    if method != "normal":
        raise DomainError(f"unknown method {method!r}")
    if min(a.size, b.size) < 3:
        raise StatisticsError("normal approximation needs at least 3 observations per sample")
    n1, n2 = a.size, b.size
    n = n1 + n2
    _, counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(counts.astype(np.float64) ** 3 - counts)) / (n * (n - 1))
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    z = (u - n1 * n2 / 2.0) / math.sqrt(var)
    return u, 0.5 * math.erfc(z / math.sqrt(2.0))
