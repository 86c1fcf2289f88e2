"""Cluster-robust variance, Wald intervals, and the results table."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from policyshift import (
    cluster_robust_se,
    confidence_interval,
    iid_se,
    normal_quantile,
    results_table,
)


def test_two_singleton_clusters_closed_form():
    result = cluster_robust_se(np.array([-1.0, 1.0]), np.array(["a", "b"]))
    assert result.se == 1.0
    assert result.variance == 1.0
    assert result.n == 2
    assert result.n_clusters == 2


def test_all_singletons_matches_scaled_iid():
    rng = np.random.default_rng(0)
    ic = rng.normal(size=100)
    ic = ic - ic.mean()
    clusters = np.arange(100)
    clustered = cluster_robust_se(ic, clusters)
    naive = iid_se(ic)
    assert_allclose(clustered.se, naive * np.sqrt(100 / 99))


def test_perfect_within_cluster_duplication_inflates_se():
    rng = np.random.default_rng(1)
    base = rng.normal(size=40)
    base = base - base.mean()
    ic = np.repeat(base, 2)
    clusters = np.repeat(np.arange(40), 2)
    clustered = cluster_robust_se(ic, clusters)
    naive_dedup = iid_se(base)
    assert clustered.se > naive_dedup


def test_cluster_sums_formula_by_hand():
    ic = np.array([1.0, -1.0, 2.0, -2.0, 0.5, -0.5])
    clusters = np.array(["x", "x", "y", "y", "z", "z"])
    result = cluster_robust_se(ic, clusters)
    assert_allclose(result.variance, 0.0)
    ic = np.array([1.0, 1.0, -2.0, 0.0, 0.5, -0.5])
    sums = np.array([2.0, -2.0, 0.0])
    expected = 3 / 2 * np.sum((sums / 6) ** 2)
    assert_allclose(cluster_robust_se(ic, clusters).variance, expected)


def test_zero_influence_gives_zero_se():
    result = cluster_robust_se(np.zeros(10), np.repeat(["a", "b"], 5))
    assert result.se == 0.0
    lo, hi = confidence_interval(5.0, result.se)
    assert (lo, hi) == (5.0, 5.0)


def test_cluster_se_validation():
    with pytest.raises(ValueError):
        cluster_robust_se(np.ones(3), np.array(["a", "a", "a"]))
    with pytest.raises(ValueError):
        cluster_robust_se(np.ones(3), np.array(["a", "b"]))
    with pytest.raises(ValueError):
        iid_se(np.array([1.0]))


def test_normal_quantile_accuracy():
    assert abs(normal_quantile(0.975) - 1.959963985) < 1e-6
    assert_allclose(normal_quantile(0.5), 0.0, atol=1e-12)
    assert_allclose(normal_quantile(0.025), -normal_quantile(0.975))
    with pytest.raises(ValueError):
        normal_quantile(1.0)


def test_confidence_interval_examples():
    lo, hi = confidence_interval(0.28, 0.0510, 0.05)
    assert round(lo, 2) == 0.18
    assert round(hi, 2) == 0.38
    lo, hi = confidence_interval(0.0, 1.0, 0.05)
    assert_allclose((lo, hi), (-1.959963985, 1.959963985), atol=1e-6)
    assert confidence_interval(5.0, 0.0) == (5.0, 5.0)


def test_confidence_interval_width_monotone_in_alpha():
    narrow = confidence_interval(0.0, 1.0, 0.10)
    wide = confidence_interval(0.0, 1.0, 0.01)
    assert wide[0] < narrow[0] < narrow[1] < wide[1]


def test_confidence_interval_validation():
    with pytest.raises(ValueError):
        confidence_interval(0.0, -1.0)
    with pytest.raises(ValueError):
        confidence_interval(0.0, 1.0, alpha=0.0)


def sample_row(**overrides):
    row = {
        "stratum": "LATE",
        "outcome": "naloxone",
        "estimand": "shift_mean",
        "psi_hat": 8.0,
        "contrast_hat": 3.2,
        "se": 0.4,
        "ci_low": 2.4,
        "ci_high": 4.0,
        "n": 100,
        "n_clusters": 10,
    }
    row.update(overrides)
    return row


def test_results_table_column_order_and_extras():
    frame = results_table([sample_row(extra_diag=1.5), sample_row(stratum="EARLY", extra_diag=2.5)])
    assert list(frame.columns)[:10] == [
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
    assert list(frame.columns)[10:] == ["extra_diag"]
    assert len(frame) == 2
    assert frame.loc[1, "stratum"] == "EARLY"


def test_results_table_missing_field_errors():
    row = sample_row()
    row.pop("se")
    with pytest.raises(ValueError):
        results_table([row])
