"""Paired Wilcoxon signed-rank test and the Bonferroni gate."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import rankdata

EXACT_MAX_N = 25
NUM_COMPARISONS = 6
BONFERRONI_ALPHA = 0.05 / NUM_COMPARISONS


def _signed_ranks(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1D arrays of equal length")
    if len(a) < 5:
        raise ValueError(f"need at least 5 pairs, got {len(a)}")
    d = a - b
    d = d[d != 0]
    if len(d) == 0:
        raise ValueError("all paired differences are zero")
    return d, rankdata(np.abs(d))


def exact_counts(doubled_ranks):
    """Number of sign assignments reaching each value of 2 W+ (ranks are doubled to stay integral)."""
    total = int(sum(doubled_ranks))
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled_ranks:
        counts[r:] = counts[r:] + counts[:len(counts) - r]
    return counts


def wilcoxon_signed_rank(a, b, exact_max_n=EXACT_MAX_N):
    """Two-sided p-value for the paired differences ``a - b``.

    Zero differences are dropped. Up to `exact_max_n` remaining pairs the null
    distribution of W+ is enumerated exactly (ties keep their mid-ranks);
    beyond that a normal approximation with tie-corrected variance is used.
    """
    d, ranks = _signed_ranks(a, b)
    n = len(d)
    w = ranks[d > 0].sum()
    if n <= exact_max_n:
        r2 = np.rint(2 * ranks).astype(int)
        w2 = int(round(2 * w))
        counts = exact_counts(r2)
        lower = int(sum(counts[:w2 + 1]))
        upper = int(sum(counts[w2:]))
        return min(1.0, 2 * min(lower, upper) / 2 ** n)
    mean = n * (n + 1) / 4
    _, t = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24 - np.sum(t ** 3 - t) / 48
    if var <= 0:
        return 1.0
    z = (w - mean) / math.sqrt(var)
    return min(1.0, math.erfc(abs(z) / math.sqrt(2)))


def significant(p, alpha=BONFERRONI_ALPHA):
    return bool(p < alpha)
