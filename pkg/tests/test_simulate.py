"""Tests for the synthetic data generators and their oracle contrasts."""

import math

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from policyshift import (
    BoundedAdditiveShift,
    DgpSpec,
    LongitudinalDelayPolicy,
    LongitudinalDgpSpec,
    TruthReport,
    simulate,
    stratum_shaped_spec,
    structural_mean,
    true_longitudinal_contrast,
    true_shift_contrast,
)


def expit_by_hand(eta):
    return 1.0 / (1.0 + math.exp(-eta))


def adoption_prob_by_hand(spec, w, tv, first_step):
    eta = spec.hazard_intercept + spec.hazard_w * w
    if not first_step:
        eta += spec.hazard_tv * tv
    return expit_by_hand(eta)


def tv_prob_by_hand(spec, w, prev_exposure, prev_tv):
    return expit_by_hand(
        spec.tv_intercept
        + spec.tv_w * w
        + spec.tv_exposure * prev_exposure
        + spec.tv_prev * prev_tv
    )


def delayed_by_hand(traj, delay):
    out = list(traj)
    if 1.0 in out:
        k = out.index(1.0)
        for j in range(k, min(k + delay, len(out))):
            out[j] = 0.0
    return tuple(out)


def regime_mean_by_hand(spec, delay):
    """Brute-force enumeration of the mean outcome under a delay regime.

    Each year the unit draws its natural adoption indicator given the
    exposures it actually received so far (absorbing once the received
    indicator is on); the delay map then rewrites the received record.
    ``delay=None`` enumerates the natural regime.
    """
    T = spec.horizon
    total = 0.0
    for w, pw in ((0.0, 1.0 - spec.w_prob), (1.0, spec.w_prob)):
        paths = [((), 0.0, pw)]
        for t in range(1, T + 1):
            grown = []
            for prefix, tv, p in paths:
                recv_last = prefix[-1] if prefix else 0.0
                if t >= 2:
                    q = tv_prob_by_hand(spec, w, recv_last, tv)
                    tv_branches = [(1.0, q), (0.0, 1.0 - q)]
                else:
                    tv_branches = [(tv, 1.0)]
                for tv_new, ptv in tv_branches:
                    if recv_last == 1.0:
                        draws = [(1.0, 1.0)]
                    else:
                        h = adoption_prob_by_hand(spec, w, tv_new, t == 1)
                        draws = [(1.0, h), (0.0, 1.0 - h)]
                    for draw, pa in draws:
                        combined = prefix + (draw,)
                        received = (
                            combined if delay is None else delayed_by_hand(combined, delay)
                        )
                        grown.append((received, tv_new, p * ptv * pa))
            paths = grown
        for prefix, tv, p in paths:
            mean = (
                spec.outcome_intercept
                + spec.outcome_w * w
                + spec.outcome_exposure * sum(prefix)
            )
            if T >= 2:
                mean += spec.outcome_tv * tv
            total += p * mean
    return total


class TestPointPanel:
    def test_layout(self):
        spec = DgpSpec(n_units=40, n_clusters=5)
        panel = simulate(spec)
        frame = panel.data
        assert list(frame.columns) == [
            "unit_id",
            "cluster_id",
            "exposure",
            "outcome",
            "w1",
            "w2",
            "w3",
        ]
        assert len(frame) == 40
        assert panel.covariates == ["w1", "w2", "w3"]
        assert panel.stratum == "LATE"
        assert frame["unit_id"].is_unique
        assert frame["exposure"].between(0.0, spec.a_max).all()

    def test_same_seed_reproduces(self):
        spec = DgpSpec(n_units=60, seed=9)
        pd.testing.assert_frame_equal(simulate(spec).data, simulate(spec).data)

    def test_different_seeds_differ(self):
        a = simulate(DgpSpec(n_units=60, seed=1)).data
        b = simulate(DgpSpec(n_units=60, seed=2)).data
        assert not np.array_equal(a["outcome"].to_numpy(), b["outcome"].to_numpy())

    def test_clusters_balanced(self):
        panel = simulate(DgpSpec(n_units=100, n_clusters=10))
        counts = panel.data["cluster_id"].value_counts()
        assert len(counts) == 10
        assert (counts == 10).all()

    def test_clusters_balanced_within_one(self):
        panel = simulate(DgpSpec(n_units=103, n_clusters=10))
        counts = panel.data["cluster_id"].value_counts()
        assert counts.sum() == 103
        assert counts.max() - counts.min() <= 1

    def test_zero_noise_outcome_is_structural(self):
        spec = DgpSpec(n_units=50, noise_sd=0.0, cluster_sd=0.0, seed=4)
        frame = simulate(spec).data
        W = frame[["w1", "w2", "w3"]].to_numpy()
        expected = structural_mean(spec, frame["exposure"].to_numpy(), W)
        assert_array_equal(frame["outcome"].to_numpy(), expected)

    def test_structural_mean_by_hand(self):
        spec = DgpSpec()
        W = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
        got = structural_mean(spec, np.array([0.0, 1.0]), W)
        assert_allclose(got, [1.75, 3.0], rtol=0, atol=0)


class TestLongitudinalPanel:
    def test_layout(self):
        spec = LongitudinalDgpSpec(n_units=30, n_clusters=3, horizon=4)
        panel = simulate(spec)
        frame = panel.data
        assert list(frame.columns) == [
            "unit_id",
            "cluster_id",
            "w",
            "outcome",
            "a_1",
            "a_2",
            "a_3",
            "a_4",
            "l_2",
            "l_3",
            "l_4",
        ]
        assert panel.covariates == ["w"]
        assert panel.exposure_cols == ["a_1", "a_2", "a_3", "a_4"]
        assert panel.tv_covariates == {2: ["l_2"], 3: ["l_3"], 4: ["l_4"]}

    def test_trajectories_monotone_binary(self):
        panel = simulate(LongitudinalDgpSpec(n_units=400, horizon=5, seed=3))
        A = panel.data[panel.exposure_cols].to_numpy()
        assert set(np.unique(A)) <= {0.0, 1.0}
        assert (np.diff(A, axis=1) >= 0).all()
        L = panel.data[["l_2", "l_3", "l_4", "l_5"]].to_numpy()
        assert set(np.unique(L)) <= {0.0, 1.0}

    def test_same_seed_reproduces(self):
        spec = LongitudinalDgpSpec(n_units=50, seed=11)
        pd.testing.assert_frame_equal(simulate(spec).data, simulate(spec).data)

    def test_simulate_rejects_other_types(self):
        with pytest.raises(TypeError):
            simulate({"n_units": 10})


class TestShiftOracle:
    def test_null_effect_is_exactly_zero(self):
        spec = DgpSpec(outcome_exposure_coef=0.0)
        report = true_shift_contrast(spec, BoundedAdditiveShift(), mc_draws=20_000)
        assert report.true_contrast == 0.0
        assert report.mc_se == 0.0
        assert report.method == "monte_carlo"
        assert report.draws == 20_000

    def test_interior_exposures_shift_exactly(self):
        # U(0, 2) keeps every draw below a_max - delta2, so the pathwise
        # difference is the constant delta2 * outcome_exposure_coef.
        spec = DgpSpec(exposure_coef=0.0, exposure_span=2.0, a_max=4.79)
        report = true_shift_contrast(spec, BoundedAdditiveShift(), mc_draws=20_000)
        assert_allclose(report.true_contrast, 4.0, rtol=0, atol=1e-12)
        assert report.mc_se < 1e-9

    def test_uniform_exposure_matches_closed_form(self):
        spec = DgpSpec(exposure_coef=0.0, exposure_span=4.79, a_max=4.79, seed=5)
        policy = BoundedAdditiveShift(delta1=1.0, delta2=2.0, a_max=4.79)
        report = true_shift_contrast(spec, policy, mc_draws=200_000)
        d1, d2, cap = 1.0, 2.0, 4.79
        closed = spec.outcome_exposure_coef * (d2 * (cap - d2) + d1 * (d2 - d1)) / cap
        assert abs(report.true_contrast - closed) < 3 * report.mc_se

    def test_deterministic_given_spec_seed(self):
        spec = DgpSpec(seed=7)
        policy = BoundedAdditiveShift()
        first = true_shift_contrast(spec, policy, mc_draws=30_000)
        second = true_shift_contrast(spec, policy, mc_draws=30_000)
        assert first.true_contrast == second.true_contrast
        assert first.mc_se == second.mc_se

    def test_mc_se_shrinks_with_draws(self):
        spec = DgpSpec(seed=7)
        policy = BoundedAdditiveShift()
        small = true_shift_contrast(spec, policy, mc_draws=10_000)
        large = true_shift_contrast(spec, policy, mc_draws=40_000)
        assert small.mc_se / large.mc_se == pytest.approx(2.0, rel=0.1)


class TestTrajectoryOracle:
    @pytest.mark.parametrize("delay", [1, 2])
    def test_matches_hand_enumeration(self, delay):
        spec = LongitudinalDgpSpec(horizon=2)
        report = true_longitudinal_contrast(spec, LongitudinalDelayPolicy(delay))
        expected = regime_mean_by_hand(spec, delay) - regime_mean_by_hand(spec, None)
        assert report.method == "exact_enumeration"
        assert report.mc_se == 0.0
        assert report.draws > 0
        assert_allclose(report.true_contrast, expected, rtol=0, atol=1e-12)

    def test_three_year_horizon_matches_hand_enumeration(self):
        spec = LongitudinalDgpSpec(horizon=3, w_prob=0.4, tv_exposure=-0.3)
        report = true_longitudinal_contrast(spec, LongitudinalDelayPolicy(2))
        expected = regime_mean_by_hand(spec, 2) - regime_mean_by_hand(spec, None)
        assert report.method == "exact_enumeration"
        assert_allclose(report.true_contrast, expected, rtol=0, atol=1e-12)

    def test_identity_delay_contrast_is_zero(self):
        spec = LongitudinalDgpSpec(horizon=3)
        report = true_longitudinal_contrast(spec, LongitudinalDelayPolicy(0))
        assert report.true_contrast == 0.0
        assert report.method == "exact_enumeration"

    def test_adoption_never_occurs(self):
        spec = LongitudinalDgpSpec(horizon=3, hazard_intercept=-50.0, hazard_w=0.0)
        report = true_longitudinal_contrast(spec, LongitudinalDelayPolicy(1))
        assert abs(report.true_contrast) < 1e-12

    def test_monte_carlo_fallback_agrees_with_exact(self):
        spec = LongitudinalDgpSpec(horizon=3, seed=2)
        policy = LongitudinalDelayPolicy(1)
        exact = true_longitudinal_contrast(spec, policy)
        mc = true_longitudinal_contrast(spec, policy, path_cap=1, mc_draws=60_000)
        assert exact.method == "exact_enumeration"
        assert mc.method == "monte_carlo"
        assert mc.mc_se > 0.0
        assert mc.draws == 60_000
        assert abs(mc.true_contrast - exact.true_contrast) < 4 * mc.mc_se

    def test_rejects_point_spec(self):
        with pytest.raises(TypeError):
            true_longitudinal_contrast(DgpSpec(), LongitudinalDelayPolicy(1))


class TestSpecValidation:
    def test_point_round_trip(self):
        spec = DgpSpec(n_units=200, exposure_coef=0.3, seed=12)
        assert DgpSpec.from_dict(spec.to_dict()) == spec

    def test_point_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            DgpSpec.from_dict({"n_units": 10, "n_cluster": 2})

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"a_max": 0.0},
            {"exposure_span": -1.0},
            {"n_covariates": 2},
            {"n_units": 5, "n_clusters": 10},
            {"noise_sd": -0.1},
            {"seed": -1},
            {"outcome_exposure_coef": float("nan")},
        ],
    )
    def test_point_invalid(self, kwargs):
        with pytest.raises(ValueError):
            DgpSpec(**kwargs)

    def test_longitudinal_round_trip(self):
        spec = LongitudinalDgpSpec(horizon=4, w_prob=0.3)
        assert LongitudinalDgpSpec.from_dict(spec.to_dict()) == spec

    @pytest.mark.parametrize(
        "kwargs",
        [{"horizon": 0}, {"w_prob": 1.5}, {"hazard_w": float("inf")}],
    )
    def test_longitudinal_invalid(self, kwargs):
        with pytest.raises(ValueError):
            LongitudinalDgpSpec(**kwargs)

    def test_truth_report_to_dict(self):
        report = TruthReport(true_contrast=1.5, mc_se=0.0, method="exact_enumeration", draws=8)
        assert report.to_dict() == {
            "true_contrast": 1.5,
            "mc_se": 0.0,
            "method": "exact_enumeration",
            "draws": 8,
        }


class TestStratumShapes:
    def test_late_shape(self):
        spec = stratum_shaped_spec("LATE")
        assert (spec.n_units, spec.n_clusters, spec.a_max) == (2298, 39, 4.79)
        assert spec.stratum == "LATE"

    def test_early_shape(self):
        spec = stratum_shaped_spec("EARLY")
        assert (spec.n_units, spec.n_clusters, spec.a_max) == (409, 9, 5.91)

    def test_fraction_scales_units(self):
        spec = stratum_shaped_spec("LATE", fraction=0.1)
        assert spec.n_units == 230
        assert spec.n_clusters == 39

    def test_fraction_floor_is_cluster_count(self):
        spec = stratum_shaped_spec("EARLY", fraction=0.001)
        assert spec.n_units == spec.n_clusters == 9

    def test_overrides_pass_through(self):
        spec = stratum_shaped_spec("LATE", seed=3, noise_sd=0.0)
        assert spec.seed == 3
        assert spec.noise_sd == 0.0

    def test_unknown_stratum(self):
        with pytest.raises(ValueError, match="EARLY or LATE"):
            stratum_shaped_spec("MIDDLE")
