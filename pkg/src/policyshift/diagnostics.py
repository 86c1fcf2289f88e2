"""Law co-occurrence and entanglement diagnostics.

States tend to enact related statutes together, so the presence of one
provision is often nearly collinear with others. These helpers quantify
that: absolute pairwise correlations across state-years, the share of a
provision's variation explained by the rest, and an advisory grouping
of provisions too entangled to analyze separately. The grouping is
advisory output only; nothing here changes an analysis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import rankdata

__all__ = [
    "CooccurrenceMatrix",
    "cooccurrence_matrix",
    "cooccurrence_by_year",
    "VarianceExplained",
    "variance_explained",
    "variance_explained_table",
    "BundleRecommendation",
    "bundle_recommendation",
]


def _law_columns(table, law_codes):
    if law_codes is None:
        law_codes = [c for c in table.columns if c not in ("state_id", "year")]
    law_codes = list(law_codes)
    if not law_codes:
        raise ValueError("no law columns to correlate")
    missing = [c for c in law_codes if c not in table.columns]
    if missing:
        raise ValueError(f"law columns missing from table: {missing}")
    values = table[law_codes].to_numpy(dtype=np.float64)
    if values.shape[0] < 2:
        raise ValueError("need at least two state-year rows")
    if not np.isfinite(values).all():
        raise ValueError("law columns contain non-finite values")
    if values.min() < 0.0 or values.max() > 1.0:
        raise ValueError("law columns must hold in-effect values in [0, 1]")
    return law_codes, values


@dataclass(frozen=True)
class CooccurrenceMatrix:
    """Absolute pairwise correlations between law columns.

    Entries are NaN wherever either column is constant; those codes are
    listed in ``undefined``.
    """

    law_codes: tuple
    values: np.ndarray
    undefined: tuple
    stratum: str
    years: tuple
    method: str

    def entry(self, law_a, law_b):
        i = self.law_codes.index(law_a)
        j = self.law_codes.index(law_b)
        return float(self.values[i, j])

    def to_long_frame(self):
        """Upper-triangle long format (law_a, law_b, abs_corr) for plotting."""
        rows = []
        k = len(self.law_codes)
        for i in range(k):
            for j in range(i, k):
                rows.append(
                    {
                        "law_a": self.law_codes[i],
                        "law_b": self.law_codes[j],
                        "abs_corr": self.values[i, j],
                    }
                )
        return pd.DataFrame(rows, columns=["law_a", "law_b", "abs_corr"])

    def to_dict(self):
        return {
            "law_codes": list(self.law_codes),
            "values": [[None if np.isnan(v) else float(v) for v in row] for row in self.values],
            "undefined": list(self.undefined),
            "stratum": self.stratum,
            "years": list(self.years),
            "method": self.method,
        }


def cooccurrence_matrix(table, law_codes=None, stratum="", method="pearson"):
    """Absolute correlations between law columns across state-year rows.

    ``table`` carries one row per state-year with law columns holding
    in-effect values in [0, 1] (binary indicators or within-year
    proportions). Columns with zero variance get NaN rows/columns and
    are reported in ``undefined``. ``method`` is "pearson" or
    "spearman" (ranks, then Pearson).
    """
    law_codes, values = _law_columns(table, law_codes)
    if method == "spearman":
        values = np.column_stack([rankdata(values[:, j]) for j in range(values.shape[1])])
    elif method != "pearson":
        raise ValueError(f"unknown correlation method {method!r}")
    k = len(law_codes)
    sd = values.std(axis=0)
    constant = sd == 0.0
    out = np.full((k, k), np.nan)
    centered = values - values.mean(axis=0)
    for i in range(k):
        if constant[i]:
            continue
        out[i, i] = 1.0
        for j in range(i + 1, k):
            if constant[j]:
                continue
            num = float(np.dot(centered[:, i], centered[:, j]))
            corr = num / (values.shape[0] * sd[i] * sd[j])
            out[i, j] = out[j, i] = min(abs(corr), 1.0)
    years = tuple(sorted(set(int(v) for v in table["year"]))) if "year" in table.columns else ()
    return CooccurrenceMatrix(
        law_codes=tuple(law_codes),
        values=out,
        undefined=tuple(c for c, flag in zip(law_codes, constant) if flag),
        stratum=stratum,
        years=years,
        method=method,
    )


def cooccurrence_by_year(table, law_codes=None, stratum="", method="pearson"):
    """One CooccurrenceMatrix per calendar year (pooled is the default view)."""
    if "year" not in table.columns:
        raise ValueError("per-year correlation needs a year column")
    out = {}
    for year in sorted(set(int(v) for v in table["year"])):
        sub = table[table["year"] == year]
        out[year] = cooccurrence_matrix(sub, law_codes=law_codes, stratum=stratum, method=method)
    return out


@dataclass(frozen=True)
class VarianceExplained:
    """R-squared of one provision regressed on the other law columns."""

    r_squared: float
    collinear: bool
    n: int
    n_covariates: int

    def to_dict(self):
        return {
            "r_squared": self.r_squared,
            "collinear": self.collinear,
            "n": self.n,
            "n_covariates": self.n_covariates,
        }


def variance_explained(exposure, covariates):
    """Least-squares R-squared of an exposure column on law covariates.

    Rank-deficient designs are solved by pseudoinverse and flagged
    ``collinear``. Raises when the exposure is constant or the row
    count does not exceed the column count plus one.
    """
    y = np.asarray(exposure, dtype=np.float64).ravel()
    X = np.asarray(covariates, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError("exposure and covariates disagree on row count")
    if not (np.isfinite(y).all() and np.isfinite(X).all()):
        raise ValueError("inputs contain non-finite values")
    if n <= p + 1:
        raise ValueError(f"need more than {p + 1} rows to regress on {p} columns, got {n}")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("exposure column is constant; variance explained is undefined")
    design = np.column_stack([np.ones(n), X])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot
    return VarianceExplained(
        r_squared=float(min(max(r2, 0.0), 1.0)),
        collinear=bool(rank < p + 1),
        n=n,
        n_covariates=p,
    )


def variance_explained_table(table, law_codes=None):
    """Per-provision variance explained by all other provisions.

    Returns (results, skipped): a dict keyed by law code, and the
    codes skipped because their column is constant.
    """
    law_codes, values = _law_columns(table, law_codes)
    sd = values.std(axis=0)
    results = {}
    skipped = []
    for j, code in enumerate(law_codes):
        if sd[j] == 0.0:
            skipped.append(code)
            continue
        others = np.delete(values, j, axis=1)
        results[code] = variance_explained(values[:, j], others)
    return results, tuple(skipped)


@dataclass(frozen=True)
class BundleRecommendation:
    """Advisory partition of provisions by correlation-linked components."""

    bundles: tuple
    merges: tuple
    threshold: float

    def to_dict(self):
        return {
            "bundles": [list(b) for b in self.bundles],
            "merges": [
                {"law_a": a, "law_b": b, "abs_corr": c} for a, b, c in self.merges
            ],
            "threshold": self.threshold,
        }


def bundle_recommendation(matrix, threshold=0.7):
    """Single-linkage grouping of laws with |corr| above the threshold.

    NaN (undefined) entries never link, so constant provisions come
    back as singletons. ``merges`` records the pair and correlation
    that first connected each pair of components, in deterministic
    scan order.
    """
    codes = matrix.law_codes
    k = len(codes)
    parent = list(range(k))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    merges = []
    for i in range(k):
        for j in range(i + 1, k):
            v = matrix.values[i, j]
            if np.isnan(v) or v <= threshold:
                continue
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
                merges.append((codes[i], codes[j], float(v)))
    groups = {}
    for i in range(k):
        groups.setdefault(find(i), []).append(codes[i])
    bundles = tuple(tuple(groups[root]) for root in sorted(groups))
    return BundleRecommendation(
        bundles=bundles, merges=tuple(merges), threshold=float(threshold)
    )
