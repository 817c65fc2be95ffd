"""Small statistical helpers shared by the verification suites."""

from __future__ import annotations

import numpy as np
from scipy import stats


def two_sample_chisquare(counts_a, counts_b):
    """Pearson chi-square test that two histograms share one distribution.

    Returns (statistic, dof, p_value); cells empty in both samples are
    dropped, dof = cells - 1.
    """
    a = np.asarray(counts_a, dtype=float)
    b = np.asarray(counts_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("histograms must align")
    pooled = a + b
    keep = pooled > 0
    a, b, pooled = a[keep], b[keep], pooled[keep]
    na, nb = a.sum(), b.sum()
    frac = pooled / (na + nb)
    ea, eb = na * frac, nb * frac
    stat = float(((a - ea) ** 2 / ea).sum() + ((b - eb) ** 2 / eb).sum())
    dof = int(keep.sum() - 1)
    return stat, dof, float(stats.chi2.sf(stat, dof))


def batch_stderr(values, n_batches: int = 32):
    """Mean and batch-means standard error of a replica statistic."""
    values = np.asarray(values, dtype=float)
    batches = np.array_split(values, n_batches)
    means = np.array([b.mean() for b in batches])
    return float(values.mean()), float(means.std(ddof=1) / np.sqrt(len(means)))
