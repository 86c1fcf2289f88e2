"""Tests for law co-adoption diagnostics."""

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from policyshift import (
    bundle_recommendation,
    cooccurrence_by_year,
    cooccurrence_matrix,
    variance_explained,
    variance_explained_table,
)


def law_table(n=100, seed=0, **columns):
    rng = np.random.default_rng(seed)
    frame = pd.DataFrame(
        {
            "state_id": [f"s{i % 20:02d}" for i in range(n)],
            "year": 2013 + (np.arange(n) // 20),
        }
    )
    for name, values in columns.items():
        frame[name] = np.asarray(values, dtype=np.float64)
    if not columns:
        frame["NAL_ANY"] = rng.integers(0, 2, n).astype(float)
        frame["GSL_ANY"] = rng.integers(0, 2, n).astype(float)
    return frame


def entangled_table():
    """Deterministic fixture: one provision mostly mirrors another."""
    n = 100
    nal = np.array([1.0 if i % 2 == 0 else 0.0 for i in range(n)])
    gsl = nal.copy()
    flip = [i for i in range(n) if i % 8 == 0]
    gsl[flip] = 1.0 - gsl[flip]
    pdmp = np.array([1.0 if i % 5 < 2 else 0.0 for i in range(n)])
    return law_table(n=n, NAL_ANY=nal, GSL_ANY=gsl, PDMP_OP=pdmp)


class TestCooccurrence:
    def test_identical_columns_correlate_exactly(self):
        x = np.tile([1.0, 0.0, 1.0, 1.0, 0.0], 20)
        table = law_table(NAL_ANY=x, GSL_ANY=x.copy())
        matrix = cooccurrence_matrix(table)
        assert abs(matrix.entry("NAL_ANY", "GSL_ANY") - 1.0) < 1e-12
        assert matrix.entry("NAL_ANY", "NAL_ANY") == 1.0
        assert matrix.undefined == ()

    def test_complement_columns_correlate_exactly(self):
        x = np.tile([1.0, 0.0, 1.0, 1.0, 0.0], 20)
        table = law_table(NAL_ANY=x, GSL_ANY=1.0 - x)
        matrix = cooccurrence_matrix(table)
        assert abs(matrix.entry("NAL_ANY", "GSL_ANY") - 1.0) < 1e-12

    def test_independent_columns_near_zero(self):
        rng = np.random.default_rng(42)
        n = 10_000
        table = law_table(
            n=n,
            NAL_ANY=rng.integers(0, 2, n).astype(float),
            GSL_ANY=rng.integers(0, 2, n).astype(float),
        )
        assert cooccurrence_matrix(table).entry("NAL_ANY", "GSL_ANY") < 0.05

    def test_constant_column_is_undefined(self):
        x = np.tile([1.0, 0.0], 50)
        table = law_table(NAL_ANY=x, GSL_ANY=np.ones(100))
        matrix = cooccurrence_matrix(table)
        assert matrix.undefined == ("GSL_ANY",)
        assert np.isnan(matrix.entry("NAL_ANY", "GSL_ANY"))
        assert np.isnan(matrix.entry("GSL_ANY", "GSL_ANY"))
        assert matrix.entry("NAL_ANY", "NAL_ANY") == 1.0

    def test_row_order_invariant(self):
        table = entangled_table()
        shuffled = table.sample(frac=1.0, random_state=3).reset_index(drop=True)
        a = cooccurrence_matrix(table)
        b = cooccurrence_matrix(shuffled)
        assert_allclose(a.values, b.values, rtol=0, atol=1e-12)

    def test_affine_rescaling_invariant(self):
        # Within-year proportions instead of binary flags give the
        # same correlation.
        table = entangled_table()
        scaled = table.copy()
        scaled["GSL_ANY"] = 0.5 * scaled["GSL_ANY"] + 0.1
        a = cooccurrence_matrix(table).entry("NAL_ANY", "GSL_ANY")
        b = cooccurrence_matrix(scaled).entry("NAL_ANY", "GSL_ANY")
        assert abs(a - b) < 1e-12

    def test_spearman_handles_monotone_distortion(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(size=200)
        table = law_table(n=200, NAL_ANY=x, GSL_ANY=np.expm1(x) / np.expm1(1.0))
        matrix = cooccurrence_matrix(table, method="spearman")
        assert abs(matrix.entry("NAL_ANY", "GSL_ANY") - 1.0) < 1e-12
        assert matrix.method == "spearman"

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError, match="method"):
            cooccurrence_matrix(entangled_table(), method="kendall")

    def test_column_selection_and_missing(self):
        table = entangled_table()
        matrix = cooccurrence_matrix(table, law_codes=["NAL_ANY", "PDMP_OP"])
        assert matrix.law_codes == ("NAL_ANY", "PDMP_OP")
        with pytest.raises(ValueError, match="missing"):
            cooccurrence_matrix(table, law_codes=["NAL_ANY", "NOPE"])

    def test_values_outside_unit_interval_rejected(self):
        table = law_table(NAL_ANY=np.ones(100), GSL_ANY=np.full(100, 1.5))
        with pytest.raises(ValueError, match="in \\[0, 1\\]"):
            cooccurrence_matrix(table)

    def test_long_frame_and_dict(self):
        matrix = cooccurrence_matrix(entangled_table())
        long = matrix.to_long_frame()
        assert list(long.columns) == ["law_a", "law_b", "abs_corr"]
        assert len(long) == 6
        blob = matrix.to_dict()
        assert blob["law_codes"] == ["NAL_ANY", "GSL_ANY", "PDMP_OP"]
        assert blob["years"] == [2013, 2014, 2015, 2016, 2017]

    def test_per_year_split(self):
        table = entangled_table()
        by_year = cooccurrence_by_year(table)
        assert sorted(by_year) == [2013, 2014, 2015, 2016, 2017]
        assert all(m.years == (year,) for year, m in by_year.items())
        with pytest.raises(ValueError, match="year"):
            cooccurrence_by_year(table.drop(columns="year"))


class TestVarianceExplained:
    def test_exact_linear_combination(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(200, 2))
        y = 0.25 + 0.5 * X[:, 0] + 0.25 * X[:, 1]
        result = variance_explained(y, X)
        assert result.r_squared > 1.0 - 1e-12
        assert not result.collinear
        assert (result.n, result.n_covariates) == (200, 2)

    def test_independent_columns_near_zero(self):
        rng = np.random.default_rng(1)
        y = rng.integers(0, 2, 10_000).astype(float)
        X = rng.integers(0, 2, (10_000, 2)).astype(float)
        assert variance_explained(y, X).r_squared < 0.01

    def test_duplicated_column_flags_collinear(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(size=100)
        result = variance_explained(0.8 * x, np.column_stack([x, x]))
        assert result.collinear
        assert result.r_squared > 1.0 - 1e-12

    def test_entangled_fixture_in_reported_band(self):
        table = entangled_table()
        result = variance_explained(
            table["NAL_ANY"].to_numpy(),
            table[["GSL_ANY", "PDMP_OP"]].to_numpy(),
        )
        assert 0.48 <= result.r_squared <= 0.78

    @pytest.mark.parametrize(
        "y, X",
        [
            (np.ones(50), np.eye(50, 2)),
            (np.arange(3.0), np.ones((3, 2))),
            (np.arange(5.0), np.ones((4, 1))),
            (np.array([1.0, np.nan, 0.0, 1.0, 0.0]), np.ones((5, 1))),
        ],
    )
    def test_invalid_inputs(self, y, X):
        with pytest.raises(ValueError):
            variance_explained(y, X)

    def test_table_skips_constant_columns(self):
        table = entangled_table()
        table["ALWAYS_ON"] = 1.0
        results, skipped = variance_explained_table(table)
        assert skipped == ("ALWAYS_ON",)
        assert set(results) == {"NAL_ANY", "GSL_ANY", "PDMP_OP"}
        assert 0.48 <= results["NAL_ANY"].r_squared <= 0.78
        blob = results["NAL_ANY"].to_dict()
        assert set(blob) == {"r_squared", "collinear", "n", "n_covariates"}


class TestBundleRecommendation:
    def test_fully_linked_collapses_to_one_bundle(self):
        x = np.tile([1.0, 0.0, 1.0, 1.0, 0.0], 20)
        table = law_table(NAL_ANY=x, GSL_ANY=x.copy(), NAL_P1=x.copy())
        bundles = bundle_recommendation(cooccurrence_matrix(table), threshold=0.7)
        assert bundles.bundles == (("NAL_ANY", "GSL_ANY", "NAL_P1"),)
        assert len(bundles.merges) == 2

    def test_unlinked_stays_singletons(self):
        rng = np.random.default_rng(11)
        n = 5000
        table = law_table(
            n=n,
            NAL_ANY=rng.integers(0, 2, n).astype(float),
            GSL_ANY=rng.integers(0, 2, n).astype(float),
            PDMP_OP=rng.integers(0, 2, n).astype(float),
        )
        bundles = bundle_recommendation(cooccurrence_matrix(table), threshold=0.7)
        assert bundles.bundles == (("NAL_ANY",), ("GSL_ANY",), ("PDMP_OP",))
        assert bundles.merges == ()

    def test_mixed_pairing(self):
        bundles = bundle_recommendation(cooccurrence_matrix(entangled_table()), threshold=0.7)
        assert bundles.bundles == (("NAL_ANY", "GSL_ANY"), ("PDMP_OP",))
        merge = bundles.merges[0]
        assert merge[:2] == ("NAL_ANY", "GSL_ANY")
        assert merge[2] > 0.7

    def test_threshold_is_strict(self):
        table = entangled_table()
        matrix = cooccurrence_matrix(table)
        at_value = matrix.entry("NAL_ANY", "GSL_ANY")
        bundles = bundle_recommendation(matrix, threshold=at_value)
        assert ("PDMP_OP",) in bundles.bundles
        assert len(bundles.bundles) == 3

    def test_constant_column_never_links(self):
        x = np.tile([1.0, 0.0, 1.0, 1.0, 0.0], 20)
        table = law_table(NAL_ANY=x, GSL_ANY=x.copy(), ALWAYS_ON=np.ones(100))
        bundles = bundle_recommendation(cooccurrence_matrix(table), threshold=0.7)
        assert ("ALWAYS_ON",) in bundles.bundles

    def test_to_dict(self):
        bundles = bundle_recommendation(cooccurrence_matrix(entangled_table()), threshold=0.7)
        blob = bundles.to_dict()
        assert blob["threshold"] == 0.7
        assert blob["bundles"][0] == ["NAL_ANY", "GSL_ANY"]
        assert blob["merges"][0]["law_a"] == "NAL_ANY"
