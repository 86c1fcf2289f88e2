"""Doubly robust estimation of modified-exposure-policy means.

Two estimators share one recipe: cross-fit an outcome regression and a
classification-based density ratio on cluster-respecting folds, then
solve a one-parameter logistic fluctuation so the efficient influence
curve has mean zero. ``PointShiftTMLE`` handles a single exposure
measurement; ``LongitudinalDelayTMLE`` handles yearly adoption
trajectories with an enactment-delay policy, running one targeted
sequential regression per year.

Outcomes are internally rescaled to [0, 1] so the logistic fluctuation
is well defined regardless of the outcome's units; estimates, influence
curves, and losses are reported back on the original scale unless noted
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, clone

from ._utils import (
    cluster_folds,
    derive_seed,
    expit,
    logit,
    logistic_fluctuation,
    ordered_thread_map,
    scale_to_unit_interval,
)
from ._validation import check_seed
from .density_ratio import (
    DensityRatioClassifier,
    PositivityProfile,
    summarize_positivity,
)
from .learners import (
    EnsembleSpec,
    LearnerSpec,
    SuperLearner,
    default_classification_ensemble,
    default_regression_ensemble,
)
from .policies import check_shift_support

__all__ = [
    "PointShiftTMLE",
    "LongitudinalDelayTMLE",
    "EstimateReport",
    "IdentificationCheck",
    "identification_checks",
    "PositivityError",
]


class PositivityError(RuntimeError):
    """Raised under strict mode when truncation diagnostics warn."""


@dataclass(frozen=True)
class IdentificationCheck:
    """One assumption behind the causal reading of the estimate.

    ``status`` is "ASSUMED" for conditions no data can verify, "PASS"
    or "WARN" for the checkable ones.
    """

    name: str
    status: str
    detail: str

    def to_dict(self):
        return {"name": self.name, "status": self.status, "detail": self.detail}


def identification_checks(support=None, positivity=None):
    """Assemble the assumption scorecard attached to every estimate."""
    checks = [
        IdentificationCheck(
            name="no_unmeasured_confounding",
            status="ASSUMED",
            detail=(
                "Exposure is as good as random given the adjustment set; "
                "not verifiable from the data."
            ),
        ),
        IdentificationCheck(
            name="consistency_no_interference",
            status="ASSUMED",
            detail=(
                "Each unit's outcome depends only on its own exposure path; "
                "not verifiable from the data."
            ),
        ),
    ]
    if support is not None:
        checks.append(
            IdentificationCheck(
                name="shift_support",
                status="WARN" if support.warn else "PASS",
                detail="; ".join(support.notes) if support.notes else (
                    "shifted exposures stay inside the observed range"
                ),
            )
        )
    if positivity is not None:
        detail = (
            f"{positivity.fraction_truncated_upper:.4f} of estimated ratios "
            f"exceeded the upper bound {positivity.ratio_bounds[1]:g}"
        )
        checks.append(
            IdentificationCheck(
                name="practical_positivity",
                status="WARN" if positivity.warn else "PASS",
                detail=detail,
            )
        )
    return tuple(checks)


@dataclass(frozen=True)
class EstimateReport:
    """Everything a downstream table or JSON dump needs about one fit."""

    estimand: str
    stratum: str
    psi_hat: float
    contrast_hat: float
    n: int
    n_clusters: int
    folds: int
    seed: int
    targeting: str
    fluctuations: tuple
    mean_ic_psi: float
    mean_ic_contrast: float
    outcome_cv_loss: float
    mean_ratio: float
    positivity: PositivityProfile | None
    support: object | None
    identification: tuple
    degenerate_outcome: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "estimand": self.estimand,
            "stratum": self.stratum,
            "psi_hat": self.psi_hat,
            "contrast_hat": self.contrast_hat,
            "n": self.n,
            "n_clusters": self.n_clusters,
            "folds": self.folds,
            "seed": self.seed,
            "targeting": self.targeting,
            "fluctuations": list(self.fluctuations),
            "mean_ic_psi": self.mean_ic_psi,
            "mean_ic_contrast": self.mean_ic_contrast,
            "outcome_cv_loss": self.outcome_cv_loss,
            "mean_ratio": self.mean_ratio,
            "positivity": None if self.positivity is None else self.positivity.to_dict(),
            "support": None if self.support is None else self.support.to_dict(),
            "identification": [c.to_dict() for c in self.identification],
            "degenerate_outcome": self.degenerate_outcome,
            "extra": dict(self.extra),
        }


def _build_outcome_model(learner, seed):
    """Instantiate a fresh outcome regressor for one (step, fold) cell."""
    if learner is None:
        return default_regression_ensemble().build(seed=seed)
    if isinstance(learner, EnsembleSpec):
        return learner.build(seed=seed)
    if isinstance(learner, LearnerSpec):
        return learner.build()
    model = clone(learner)
    if "seed" in model.get_params():
        model.set_params(seed=seed)
    return model


def _build_ratio_model(learner, ratio_bounds, warn_threshold, seed):
    """Instantiate a fresh ratio model for one (step, fold) cell.

    Accepts anything exposing the classifier interface (fit_stacks /
    ratio_at / odds_at), or a learner spec that gets wrapped.
    """
    if learner is not None and hasattr(learner, "fit_stacks"):
        model = clone(learner)
        params = model.get_params()
        if "seed" in params:
            model.set_params(seed=seed)
        return model
    spec = learner if learner is not None else default_classification_ensemble()
    return DensityRatioClassifier(
        learner=spec,
        ratio_bounds=ratio_bounds,
        warn_threshold=warn_threshold,
        seed=seed,
    )


def _fit_and_predict_outcome(model, X_train, y_train, groups, X_eval_pairs, bound):
    """Fit one fold's outcome model and predict both exposure versions."""
    if isinstance(model, SuperLearner) and groups is not None:
        model.fit(X_train, y_train, groups=groups)
    else:
        model.fit(X_train, y_train)
    out = []
    for X in X_eval_pairs:
        pred = np.asarray(model.predict(X), dtype=np.float64)
        out.append(np.clip(pred, bound, 1.0 - bound))
    return out


def _mean(values):
    return float(np.mean(values))


class PointShiftTMLE(BaseEstimator):
    """Cross-fitted doubly robust estimate of a shifted-exposure mean.

    Given a panel with one exposure measurement per unit, estimates the
    mean outcome that would be seen if every unit's exposure were moved
    by the supplied shift policy, together with the contrast against
    the observed mean.

    Parameters
    ----------
    policy
        Object with an ``apply(exposure)`` method (vectorized).
    outcome_learner
        EnsembleSpec, LearnerSpec, or estimator for E[Y | A, W]. None
        selects the default regression ensemble.
    ratio_learner
        Learner spec for the exposure density ratio, or a fitted-style
        ratio object (anything with ``fit_stacks``/``ratio_at``) used
        as a prototype and cloned per fold. None selects the default
        classification ensemble.
    folds : int
        Cross-fitting folds; split respects cluster boundaries.
    targeting : {"tmle", "onestep"}
        Logistic fluctuation update, or the linear one-step correction.
    outcome_bound : float
        Predictions on the unit scale are clipped to
        [outcome_bound, 1 - outcome_bound] before taking logits.
    ratio_bounds : (float, float)
        Truncation interval for estimated ratios.
    strict_positivity : bool
        When True, raise PositivityError after fitting if the
        positivity profile or support check warns.
    threads : int or None
        Worker threads across folds; results do not depend on it.

    Attributes
    ----------
    psi_hat_, contrast_hat_ : float
    ic_psi_, ic_contrast_ : ndarray
        Influence-curve values, one per row, each mean-zero.
    report_ : EstimateReport
    """

    def __init__(
        self,
        policy,
        outcome_learner=None,
        ratio_learner=None,
        folds=5,
        seed=0,
        targeting="tmle",
        outcome_bound=5e-4,
        ratio_bounds=(0.01, 100.0),
        positivity_warn_threshold=0.02,
        strict_positivity=False,
        threads=None,
    ):
        self.policy = policy
        self.outcome_learner = outcome_learner
        self.ratio_learner = ratio_learner
        self.folds = folds
        self.seed = seed
        self.targeting = targeting
        self.outcome_bound = outcome_bound
        self.ratio_bounds = ratio_bounds
        self.positivity_warn_threshold = positivity_warn_threshold
        self.strict_positivity = strict_positivity
        self.threads = threads

    def _check_config(self, n, n_clusters):
        if self.targeting not in ("tmle", "onestep"):
            raise ValueError(f"unknown targeting {self.targeting!r}")
        if int(self.folds) < 2:
            raise ValueError("folds must be at least 2")
        if n < 2 * int(self.folds):
            raise ValueError(
                f"n={n} is below the minimum {2 * int(self.folds)} for {self.folds} folds"
            )
        if not 0.0 < float(self.outcome_bound) < 0.5:
            raise ValueError("outcome_bound must lie in (0, 0.5)")
        check_seed(self.seed)

    def _degenerate_report(self, y, panel, support):
        n = y.size
        psi = float(y[0])
        self.psi_hat_ = psi
        self.contrast_hat_ = 0.0
        self.ic_psi_ = np.zeros(n)
        self.ic_contrast_ = np.zeros(n)
        self.fluctuations_ = ()
        self.report_ = EstimateReport(
            estimand="shifted_mean",
            stratum=getattr(panel, "stratum", ""),
            psi_hat=psi,
            contrast_hat=0.0,
            n=n,
            n_clusters=panel.n_clusters,
            folds=int(self.folds),
            seed=int(self.seed),
            targeting=self.targeting,
            fluctuations=(),
            mean_ic_psi=0.0,
            mean_ic_contrast=0.0,
            outcome_cv_loss=0.0,
            mean_ratio=1.0,
            positivity=None,
            support=support,
            identification=identification_checks(support=support),
            degenerate_outcome=True,
        )
        return self

    def fit(self, panel):
        """Estimate from a PanelTable-like object.

        Needs ``exposure``, ``outcome``, ``covariate_matrix``, and
        ``cluster_ids`` attributes.
        """
        a = np.asarray(panel.exposure, dtype=np.float64)
        y = np.asarray(panel.outcome, dtype=np.float64)
        W = np.asarray(panel.covariate_matrix, dtype=np.float64)
        clusters = np.asarray(panel.cluster_ids)
        n = y.size
        self._check_config(n, panel.n_clusters)

        shifted = np.asarray(self.policy.apply(a), dtype=np.float64)
        support = check_shift_support(a, self.policy)
        if y.max() == y.min():
            return self._degenerate_report(y, panel, support)

        y01, lo, hi = scale_to_unit_interval(y)
        span = hi - lo
        folds = int(self.folds)
        fold_ids = cluster_folds(clusters, folds, derive_seed(self.seed, "folds"))
        X_obs = np.column_stack([a, W])
        X_shift = np.column_stack([shifted, W])

        def run_fold(v):
            train = fold_ids != v
            test = ~train
            outcome = _build_outcome_model(
                self.outcome_learner, derive_seed(self.seed, "outcome", 1, v)
            )
            m_obs, m_shift = _fit_and_predict_outcome(
                outcome,
                X_obs[train],
                y01[train],
                clusters[train],
                (X_obs[test], X_shift[test]),
                float(self.outcome_bound),
            )
            ratio = _build_ratio_model(
                self.ratio_learner,
                self.ratio_bounds,
                self.positivity_warn_threshold,
                derive_seed(self.seed, "ratio", 1, v),
            )
            ratio.fit_stacks(X_obs[train], X_shift[train], groups=clusters[train])
            return test, m_obs, m_shift, ratio.ratio_at(X_obs[test]), ratio.odds_at(X_obs[test])

        m_obs = np.empty(n)
        m_shift = np.empty(n)
        r = np.empty(n)
        odds = np.empty(n)
        for test, f_obs, f_shift, f_r, f_odds in ordered_thread_map(
            run_fold, range(folds), self.threads
        ):
            m_obs[test] = f_obs
            m_shift[test] = f_shift
            r[test] = f_r
            odds[test] = f_odds

        cv_loss = _mean((y01 - m_obs) ** 2)
        if self.targeting == "tmle":
            eps = logistic_fluctuation(y01, logit(m_obs), weights=r)
            m_obs_star = expit(logit(m_obs) + eps)
            m_shift_star = expit(logit(m_shift) + eps)
            psi01 = _mean(m_shift_star)
            fluctuations = (float(eps),)
        else:
            m_obs_star, m_shift_star = m_obs, m_shift
            psi01 = _mean(m_shift) + _mean(r * (y01 - m_obs))
            fluctuations = (0.0,)
        ic01 = r * (y01 - m_obs_star) + m_shift_star - psi01

        positivity = summarize_positivity(
            odds, self.ratio_bounds, self.positivity_warn_threshold
        )
        psi_hat = psi01 * span + lo
        ic_psi = ic01 * span
        y_mean = _mean(y)
        contrast_hat = psi_hat - y_mean
        ic_contrast = ic_psi - (y - y_mean)

        self.psi_hat_ = float(psi_hat)
        self.contrast_hat_ = float(contrast_hat)
        self.ic_psi_ = ic_psi
        self.ic_contrast_ = ic_contrast
        self.fold_ids_ = fold_ids
        self.ratio_values_ = r
        self.fluctuations_ = fluctuations
        self.report_ = EstimateReport(
            estimand="shifted_mean",
            stratum=getattr(panel, "stratum", ""),
            psi_hat=self.psi_hat_,
            contrast_hat=self.contrast_hat_,
            n=n,
            n_clusters=panel.n_clusters,
            folds=folds,
            seed=int(self.seed),
            targeting=self.targeting,
            fluctuations=fluctuations,
            mean_ic_psi=_mean(ic_psi),
            mean_ic_contrast=_mean(ic_contrast),
            outcome_cv_loss=cv_loss,
            mean_ratio=_mean(r),
            positivity=positivity,
            support=support,
            identification=identification_checks(support=support, positivity=positivity),
        )
        if self.strict_positivity and (positivity.warn or support.warn):
            raise PositivityError(
                "truncation or support diagnostics exceeded the warning "
                "threshold and strict positivity is enabled"
            )
        return self


class LongitudinalDelayTMLE(BaseEstimator):
    """Targeted sequential regression for delayed adoption trajectories.

    Supply a longitudinal panel of monotone 0/1 adoption indicators
    (one column per year) and an enactment-delay policy; the estimator
    returns the mean outcome under the delayed trajectories. Each
    year's exposure mechanism gets its own cross-fitted density ratio
    (comparing observed prefixes against delayed ones), ratios are
    cumulated forward, and the outcome regressions run backward from
    the final year, each targeted by a weighted logistic fluctuation.

    With a single year of exposure this reproduces PointShiftTMLE
    exactly: the features, fold splits, and derived seeds coincide.

    Parameters mirror PointShiftTMLE; ``policy`` must provide
    ``apply(trajectories)`` mapping an (n, T) 0/1 matrix to the delayed
    matrix.

    Attributes
    ----------
    psi_hat_, contrast_hat_ : float
    ic_psi_, ic_contrast_ : ndarray
    step_cv_losses_ : tuple
        Held-out squared-error loss per backward step (unit scale);
        the last entry regresses the actual outcome.
    """

    def __init__(
        self,
        policy,
        outcome_learner=None,
        ratio_learner=None,
        folds=5,
        seed=0,
        targeting="tmle",
        outcome_bound=5e-4,
        ratio_bounds=(0.01, 100.0),
        positivity_warn_threshold=0.02,
        strict_positivity=False,
        threads=None,
    ):
        self.policy = policy
        self.outcome_learner = outcome_learner
        self.ratio_learner = ratio_learner
        self.folds = folds
        self.seed = seed
        self.targeting = targeting
        self.outcome_bound = outcome_bound
        self.ratio_bounds = ratio_bounds
        self.positivity_warn_threshold = positivity_warn_threshold
        self.strict_positivity = strict_positivity
        self.threads = threads

    _check_config = PointShiftTMLE._check_config

    def _features(self, panel, exposures, t):
        """Design matrix for the year-t regression and ratio.

        Layout: current exposure, baseline covariates, exposure history
        [first year .. t-1], then time-varying covariates for years
        2..t. The history columns come from ``exposures`` so observed
        and delayed versions share one builder.
        """
        cols = [exposures[:, t - 1 : t], self._W, exposures[:, : t - 1]]
        for s in range(2, t + 1):
            cols.append(panel.tv_matrix(s))
        return np.column_stack(cols)

    def fit(self, panel):
        """Estimate from a LongitudinalPanel-like object.

        Needs ``trajectories`` (n, T), ``horizon``, ``tv_matrix(t)``,
        ``outcome``, ``covariate_matrix``, and ``cluster_ids``.
        """
        A = np.asarray(panel.trajectories, dtype=np.float64)
        y = np.asarray(panel.outcome, dtype=np.float64)
        self._W = np.asarray(panel.covariate_matrix, dtype=np.float64)
        clusters = np.asarray(panel.cluster_ids)
        n, T = A.shape
        self._check_config(n, panel.n_clusters)

        Ad = np.asarray(self.policy.apply(A), dtype=np.float64)
        if y.max() == y.min():
            return self._degenerate(y, panel)

        y01, lo, hi = scale_to_unit_interval(y)
        span = hi - lo
        folds = int(self.folds)
        fold_ids = cluster_folds(clusters, folds, derive_seed(self.seed, "folds"))
        X_obs = {t: self._features(panel, A, t) for t in range(1, T + 1)}
        X_del = {t: self._features(panel, Ad, t) for t in range(1, T + 1)}

        r_steps = np.empty((n, T))
        odds_steps = np.empty((n, T))

        def fit_step_ratio(args):
            t, v = args
            train = fold_ids != v
            test = ~train
            ratio = _build_ratio_model(
                self.ratio_learner,
                self.ratio_bounds,
                self.positivity_warn_threshold,
                derive_seed(self.seed, "ratio", t, v),
            )
            ratio.fit_stacks(X_obs[t][train], X_del[t][train], groups=clusters[train])
            return test, t, ratio.ratio_at(X_obs[t][test]), ratio.odds_at(X_obs[t][test])

        cells = [(t, v) for t in range(1, T + 1) for v in range(folds)]
        for test, t, f_r, f_odds in ordered_thread_map(fit_step_ratio, cells, self.threads):
            r_steps[test, t - 1] = f_r
            odds_steps[test, t - 1] = f_odds
        cum_r = np.cumprod(r_steps, axis=1)

        bound = float(self.outcome_bound)
        pseudo = y01
        resid_sum = np.zeros(n)
        fluctuations = []
        step_losses = []
        for t in range(T, 0, -1):
            m_obs_t = np.empty(n)
            m_del_t = np.empty(n)

            def fit_step_outcome(v, t=t, pseudo=pseudo):
                train = fold_ids != v
                test = ~train
                outcome = _build_outcome_model(
                    self.outcome_learner, derive_seed(self.seed, "outcome", t, v)
                )
                preds = _fit_and_predict_outcome(
                    outcome,
                    X_obs[t][train],
                    pseudo[train],
                    clusters[train],
                    (X_obs[t][test], X_del[t][test]),
                    bound,
                )
                return test, preds[0], preds[1]

            for test, f_obs, f_del in ordered_thread_map(
                fit_step_outcome, range(folds), self.threads
            ):
                m_obs_t[test] = f_obs
                m_del_t[test] = f_del
            step_losses.append(_mean((pseudo - m_obs_t) ** 2))

            weights = cum_r[:, t - 1]
            if self.targeting == "tmle":
                eps = logistic_fluctuation(pseudo, logit(m_obs_t), weights=weights)
                m_obs_star = expit(logit(m_obs_t) + eps)
                m_del_star = expit(logit(m_del_t) + eps)
                fluctuations.append(float(eps))
            else:
                m_obs_star, m_del_star = m_obs_t, m_del_t
                fluctuations.append(0.0)
            resid_sum += weights * (pseudo - m_obs_star)
            pseudo = m_del_star

        fluctuations.reverse()
        step_losses.reverse()
        if self.targeting == "tmle":
            psi01 = _mean(pseudo)
        else:
            psi01 = _mean(pseudo) + _mean(resid_sum)
        ic01 = resid_sum + pseudo - psi01

        positivity = PositivityProfile(
            quantiles=tuple(
                (q, float(np.quantile(cum_r[:, -1], q))) for q in (0.5, 0.9, 0.99)
            ),
            max_ratio=float(cum_r[:, -1].max()),
            fraction_truncated_upper=float(
                np.mean((odds_steps > self.ratio_bounds[1]).any(axis=1))
            ),
            fraction_truncated_lower=float(
                np.mean((odds_steps < self.ratio_bounds[0]).any(axis=1))
            ),
            ratio_bounds=(float(self.ratio_bounds[0]), float(self.ratio_bounds[1])),
            warn_threshold=float(self.positivity_warn_threshold),
            n=n,
        )

        psi_hat = psi01 * span + lo
        ic_psi = ic01 * span
        y_mean = _mean(y)
        contrast_hat = psi_hat - y_mean
        ic_contrast = ic_psi - (y - y_mean)

        self.psi_hat_ = float(psi_hat)
        self.contrast_hat_ = float(contrast_hat)
        self.ic_psi_ = ic_psi
        self.ic_contrast_ = ic_contrast
        self.fold_ids_ = fold_ids
        self.ratio_values_ = cum_r
        self.fluctuations_ = tuple(fluctuations)
        self.step_cv_losses_ = tuple(step_losses)
        self.report_ = EstimateReport(
            estimand="delayed_adoption_mean",
            stratum=getattr(panel, "stratum", ""),
            psi_hat=self.psi_hat_,
            contrast_hat=self.contrast_hat_,
            n=n,
            n_clusters=panel.n_clusters,
            folds=folds,
            seed=int(self.seed),
            targeting=self.targeting,
            fluctuations=self.fluctuations_,
            mean_ic_psi=_mean(ic_psi),
            mean_ic_contrast=_mean(ic_contrast),
            outcome_cv_loss=step_losses[-1],
            mean_ratio=_mean(cum_r[:, -1]),
            positivity=positivity,
            support=None,
            identification=identification_checks(positivity=positivity),
            extra={"horizon": T, "step_cv_losses": list(step_losses)},
        )
        if self.strict_positivity and positivity.warn:
            raise PositivityError(
                "truncation diagnostics exceeded the warning threshold and "
                "strict positivity is enabled"
            )
        return self

    def _degenerate(self, y, panel):
        n = y.size
        psi = float(y[0])
        self.psi_hat_ = psi
        self.contrast_hat_ = 0.0
        self.ic_psi_ = np.zeros(n)
        self.ic_contrast_ = np.zeros(n)
        self.fluctuations_ = ()
        self.step_cv_losses_ = ()
        self.report_ = EstimateReport(
            estimand="delayed_adoption_mean",
            stratum=getattr(panel, "stratum", ""),
            psi_hat=psi,
            contrast_hat=0.0,
            n=n,
            n_clusters=panel.n_clusters,
            folds=int(self.folds),
            seed=int(self.seed),
            targeting=self.targeting,
            fluctuations=(),
            mean_ic_psi=0.0,
            mean_ic_contrast=0.0,
            outcome_cv_loss=0.0,
            mean_ratio=1.0,
            positivity=None,
            support=None,
            identification=identification_checks(),
            degenerate_outcome=True,
        )
        return self
