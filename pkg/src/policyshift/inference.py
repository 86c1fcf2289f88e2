"""Cluster-robust variance and confidence intervals for influence values.

Units within a state share policy environments and shocks, so the
variance of an influence-curve mean is estimated from cluster sums: for
clusters c = 1..M with sums S_c over member influence values,

    SE^2 = M / (M - 1) * sum_c (S_c / n)^2.

With every cluster a singleton this is the usual iid formula times the
small-cluster factor n / (n - 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import norm

from ._validation import check_vector

__all__ = [
    "ClusteredVariance",
    "cluster_robust_se",
    "iid_se",
    "normal_quantile",
    "confidence_interval",
    "results_table",
]


@dataclass(frozen=True)
class ClusteredVariance:
    se: float
    variance: float
    n: int
    n_clusters: int

    def to_dict(self):
        return {
            "se": self.se,
            "variance": self.variance,
            "n": self.n,
            "n_clusters": self.n_clusters,
        }


def cluster_robust_se(ic_values, cluster_ids):
    """Standard error of a mean-zero influence-curve average under clustering."""
    ic = check_vector(ic_values, "ic_values")
    cluster_ids = np.asarray(cluster_ids)
    if cluster_ids.shape[0] != ic.shape[0]:
        raise ValueError("ic_values and cluster_ids disagree on length")
    n = ic.shape[0]
    _, inverse = np.unique(cluster_ids, return_inverse=True)
    m = int(inverse.max()) + 1
    if m < 2:
        raise ValueError("need at least 2 clusters for a cluster-robust variance")
    sums = np.bincount(inverse, weights=ic, minlength=m)
    variance = m / (m - 1) * float(np.sum((sums / n) ** 2))
    return ClusteredVariance(se=float(np.sqrt(variance)), variance=variance, n=n, n_clusters=m)


def iid_se(ic_values):
    """Naive SE ignoring clustering; influence values are mean-zero."""
    ic = check_vector(ic_values, "ic_values")
    n = ic.shape[0]
    if n < 2:
        raise ValueError("need at least 2 observations")
    return float(np.sqrt(np.mean(ic**2) / n))


def normal_quantile(p):
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile probability must be in (0, 1), got {p}")
    return float(norm.ppf(p))


def confidence_interval(estimate, se, alpha=0.05):
    """Two-sided Wald interval."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    se = float(se)
    if se < 0.0:
        raise ValueError(f"se must be nonnegative, got {se}")
    z = normal_quantile(1.0 - alpha / 2.0)
    estimate = float(estimate)
    return estimate - z * se, estimate + z * se


def results_table(rows):
    """Collect estimate summaries into one table, one row per estimand run.

    Each entry is a mapping with at least stratum, outcome, estimand,
    psi_hat, contrast_hat, se, ci_low, ci_high, n, n_clusters.
    """
    columns = [
        "stratum",
        "outcome",
        "estimand",
        "psi_hat",
        "contrast_hat",
        "se",
        "ci_low",
        "ci_high",
        "n",
        "n_clusters",
    ]
    frame = pd.DataFrame(list(rows))
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ValueError(f"result rows are missing fields {missing}")
    return frame[columns + [c for c in frame.columns if c not in columns]]
