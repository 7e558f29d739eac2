import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bitmark.errors import DomainError, StatisticsError
from bitmark.metrics import (auc, gaussian_threshold, mann_whitney_u, rankdata, threshold_at_fpr,
                             tpr_at_fpr)


# ---- brute-force oracles -------------------------------------------------

def brute_threshold(neg, fpr):
    # smallest candidate t among the scores with mean(neg > t) <= fpr
    ok = [t for t in sorted(set(neg)) if sum(x > t for x in neg) <= fpr * len(neg) + 1e-9]
    return min(ok)


def brute_tpr(pos, neg, fpr):
    t = brute_threshold(neg, fpr)
    return sum(x > t for x in pos) / len(pos)


def brute_u(a, b):
    return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in a for y in b)


def brute_auc(pos, neg):
    return brute_u(pos, neg) / (len(pos) * len(neg))


def enumerate_upper_tail(a, b):
    """P(U >= U_obs) over every split of the pooled sample."""
    pooled = list(a) + list(b)
    u_obs = brute_u(a, b)
    hits = total = 0
    for idx in itertools.combinations(range(len(pooled)), len(a)):
        chosen = set(idx)
        aa = [pooled[i] for i in idx]
        bb = [pooled[i] for i in range(len(pooled)) if i not in chosen]
        total += 1
        hits += brute_u(aa, bb) >= u_obs - 1e-9
    return Fraction(hits, total)


def _population(rng, size):
    kind = rng.integers(3)
    if kind == 0:
        return rng.normal(size=size).round(rng.integers(0, 3))
    if kind == 1:
        return rng.integers(-3, 4, size).astype(float)
    return rng.normal(size=size)


# ---- examples -------------------------------------------------------------

def test_threshold_examples():
    assert threshold_at_fpr(np.arange(1, 101), 0.01) == 99
    assert threshold_at_fpr([4.2] * 50, 0.05) == 4.2
    rng = np.random.default_rng(1)
    assert threshold_at_fpr(rng.standard_normal(100_000), 0.01) == pytest.approx(2.326, abs=0.05)


def test_tpr_examples():
    assert tpr_at_fpr([100] * 10, [0] * 100, 0.01) == 1.0
    rng = np.random.default_rng(2)
    x = rng.standard_normal(20_000)
    y = rng.standard_normal(20_000)
    assert tpr_at_fpr(x, y, 0.01) == pytest.approx(0.01, abs=0.004)


def test_auc_examples():
    assert auc([5, 6], [1, 2]) == 1.0
    assert auc([1.0], [1.0]) == 0.5
    assert auc([3, 1], [2, 0]) == 0.75


def test_gaussian_threshold():
    assert gaussian_threshold(0.01) == pytest.approx(2.3263478740408408, abs=1e-9)


def test_mann_whitney_identical():
    a = [1.0, 2.0, 3.0, 4.0, 5.0]
    u, p = mann_whitney_u(a, a)
    assert u == 12.5
    assert p == pytest.approx(0.5, abs=0.1)
    _, p = mann_whitney_u(a * 5, a * 5)
    assert p == pytest.approx(0.5, abs=1e-12)


def test_mann_whitney_full_separation():
    u, p = mann_whitney_u([10, 11, 12], [1, 2, 3])
    assert u == 9
    # 1 of C(6,3)=20 splits reaches U=9
    assert p == pytest.approx(0.05, abs=1e-15)
    _, p_norm = mann_whitney_u([10, 11, 12], [1, 2, 3], method="normal")
    assert p_norm < 0.05


def test_mann_whitney_against_scipy():
    stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = rng.integers(0, 10, 30).astype(float)
        b = rng.integers(0, 10, 25).astype(float)
        u, p = mann_whitney_u(a, b, method="normal")
        ref = stats.mannwhitneyu(a, b, alternative="greater", method="asymptotic",
                                 use_continuity=False)
        assert u == ref.statistic
        assert p == pytest.approx(ref.pvalue, rel=1e-10)


def test_mann_whitney_errors():
    with pytest.raises(StatisticsError):
        mann_whitney_u([1, 1], [1, 1])
    with pytest.raises(StatisticsError):
        mann_whitney_u([1, 2], [3, 4, 5], method="normal")
    with pytest.raises(DomainError):
        mann_whitney_u([1, 2], [3, 4], method="bogus")


def test_metric_errors():
    with pytest.raises(DomainError):
        threshold_at_fpr([], 0.01)
    with pytest.raises(DomainError):
        threshold_at_fpr([1.0], 1.0)
    with pytest.raises(DomainError):
        auc([math.nan], [1.0])


# ---- oracle sweeps --------------------------------------------------------

def test_metrics_match_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        pos = _population(rng, rng.integers(1, 51))
        neg = _population(rng, rng.integers(1, 51))
        for fpr in (0.01, 0.05, 0.1, 0.3):
            assert threshold_at_fpr(neg, fpr) == brute_threshold(list(neg), fpr)
            assert tpr_at_fpr(pos, neg, fpr) == brute_tpr(list(pos), list(neg), fpr)
        assert auc(pos, neg) == brute_auc(list(pos), list(neg))
        if len(pos) >= 1 and len(neg) >= 1 and len(set(np.r_[pos, neg])) > 1:
            assert mann_whitney_u(pos, neg, method="normal" if min(len(pos), len(neg)) >= 3
                                  else "exact")[0] == brute_u(list(pos), list(neg))


def test_exact_p_matches_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(100):
        a = rng.integers(0, 5, rng.integers(1, 7)).astype(float)
        b = rng.integers(0, 5, rng.integers(1, 7)).astype(float)
        if len(set(np.r_[a, b])) == 1:
            continue
        u, p = mann_whitney_u(a, b, method="exact")
        assert u == brute_u(list(a), list(b))
        assert p == pytest.approx(float(enumerate_upper_tail(a, b)), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-40, 40), min_size=1, max_size=30),
       st.lists(st.integers(-40, 40), min_size=1, max_size=30))
def test_monotone_transform_invariance(pos, neg):
    # integer scores keep the transform strictly increasing in floating point
    f = lambda x: np.exp(np.asarray(x) / 4.0) * 3.0 + 1.0  # noqa: E731
    assert auc(pos, neg) == auc(f(pos), f(neg))
    assert tpr_at_fpr(pos, neg, 0.1) == tpr_at_fpr(f(pos), f(neg), 0.1)


@given(st.lists(st.integers(-3, 3), min_size=1, max_size=40))
def test_rankdata_sums(values):
    ranks = rankdata(np.asarray(values, dtype=float))
    assert ranks.sum() == pytest.approx(len(values) * (len(values) + 1) / 2)
