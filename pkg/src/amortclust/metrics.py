"""Partition agreement and method-comparison statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata


def _labels(p):
    return np.asarray(getattr(p, "labels", p))


def contingency(a, b) -> np.ndarray:
    a, b = _labels(a), _labels(b)
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia.ravel(), ib.ravel()), 1)
    return table


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2.0


def ari(p, q) -> float:
    """Hubert-Arabie adjusted Rand index.

    Returns 1 when the expected and maximum indices coincide (e.g. both
    partitions are a single cluster, or both are all singletons).
    """
    a, b = _labels(p), _labels(q)
    if a.shape != b.shape:
        raise ValueError(f"partitions have different lengths: {a.size} vs {b.size}")
    if a.size < 2:
        return 1.0
    table = contingency(a, b)
    index = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / _comb2(a.size)
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def summarize(values) -> tuple[float, float]:
    """(mean, median) with the midpoint median for even lengths."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("cannot summarize an empty list")
    s = np.sort(v)
    mid = s.size // 2
    median = s[mid] if s.size % 2 else 0.5 * (s[mid - 1] + s[mid])
    return float(v.mean()), float(median)


@dataclass
class ComparisonStats:
    prop_a_wins: float
    prop_b_wins: float
    prop_ties: float
    p_value: float | None = None

    def as_dict(self) -> dict:
        return {"a_wins": self.prop_a_wins, "b_wins": self.prop_b_wins,
                "ties": self.prop_ties, "p_value": self.p_value}


def pairwise_compare(a, b, tie_tol: float = 1e-12) -> ComparisonStats:
    """Per-replicate win/tie/loss proportions of ``a`` against ``b``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("need equal, nonempty score lists")
    diff = a - b
    ties = np.abs(diff) <= tie_tol
    n = a.size
    a_wins = int(np.sum((diff > 0) & ~ties))
    b_wins = int(np.sum((diff < 0) & ~ties))
    n_ties = n - a_wins - b_wins
    return ComparisonStats(a_wins / n, b_wins / n, n_ties / n)


MIN_PAIRS = 10


def wilcoxon_signed_rank(a, b) -> float:
    """Two-sided Wilcoxon signed-rank p-value (normal approximation).

    Zero differences are dropped; ranks of tied |differences| are averaged
    and the variance is tie-corrected; a continuity correction of 0.5 is
    applied.  Returns 1 when every difference is zero; fewer than
    ``MIN_PAIRS`` nonzero differences is too few for the approximation.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("need equal-length samples")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 1.0
    if n < MIN_PAIRS:
        raise ValueError(f"only {n} nonzero differences; need at least {MIN_PAIRS}")
    ranks = rankdata(np.abs(d))
    w_plus = ranks[d > 0].sum()
    mean = n * (n + 1) / 4.0
    _, counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - (counts ** 3 - counts).sum() / 48.0
    if var <= 0:
        return 1.0
    dev = abs(w_plus - mean)
    z = max(dev - 0.5, 0.0) / np.sqrt(var)
    return float(min(1.0, 2.0 * norm.sf(z)))


def compare_methods(a, b, tie_tol: float = 1e-12) -> ComparisonStats:
    stats = pairwise_compare(a, b, tie_tol)
    try:
        stats.p_value = wilcoxon_signed_rank(a, b)
    except ValueError:
        stats.p_value = None
    return stats
