"""Exposure density-ratio estimation by probabilistic classification.

The ratio g_shifted(a | w) / g_observed(a | w) is estimated without any
explicit density fit: stack the observed exposure rows (label 0) with
their policy-shifted copies (label 1), train a probabilistic
classifier, and read the ratio off the predicted odds. Predicted ratios
are truncated into configurable bounds and the truncation mass is
surfaced as a positivity diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.exceptions import NotFittedError

from ._validation import check_matrix, check_vector
from .learners import (
    EnsembleSpec,
    LearnerSpec,
    SuperLearner,
    default_classification_ensemble,
)

__all__ = [
    "DensityRatioClassifier",
    "ConstantDensityRatio",
    "PositivityProfile",
    "summarize_positivity",
    "fit_ratio",
]

PROFILE_QUANTILES = (0.5, 0.9, 0.99)


def _apply_policy(policy, a):
    shifted = policy.apply(a) if hasattr(policy, "apply") else policy(a)
    return np.asarray(shifted, dtype=np.float64)


def _check_bounds(ratio_bounds):
    lo, hi = float(ratio_bounds[0]), float(ratio_bounds[1])
    if not 0.0 < lo <= 1.0 <= hi:
        raise ValueError(
            f"ratio_bounds must satisfy 0 < low <= 1 <= high, got ({lo}, {hi})"
        )
    return lo, hi


@dataclass(frozen=True)
class PositivityProfile:
    """Distribution of estimated ratios and how much mass was truncated."""

    quantiles: tuple
    max_ratio: float
    fraction_truncated_upper: float
    fraction_truncated_lower: float
    ratio_bounds: tuple
    warn_threshold: float
    n: int

    @property
    def warn(self):
        return self.fraction_truncated_upper > self.warn_threshold

    def to_dict(self):
        return {
            "quantiles": {str(q): v for q, v in self.quantiles},
            "max_ratio": self.max_ratio,
            "fraction_truncated_upper": self.fraction_truncated_upper,
            "fraction_truncated_lower": self.fraction_truncated_lower,
            "ratio_bounds": list(self.ratio_bounds),
            "warn_threshold": self.warn_threshold,
            "warn": self.warn,
            "n": self.n,
        }


def summarize_positivity(raw_ratios, ratio_bounds, warn_threshold=0.02):
    """Build a PositivityProfile from untruncated ratio values."""
    raw = check_vector(raw_ratios, "ratios")
    lo, hi = _check_bounds(ratio_bounds)
    quantiles = tuple(
        (q, float(np.quantile(raw, q))) for q in PROFILE_QUANTILES
    )
    return PositivityProfile(
        quantiles=quantiles,
        max_ratio=float(raw.max()),
        fraction_truncated_upper=float(np.mean(raw > hi)),
        fraction_truncated_lower=float(np.mean(raw < lo)),
        ratio_bounds=(lo, hi),
        warn_threshold=float(warn_threshold),
        n=int(raw.size),
    )


class DensityRatioClassifier(BaseEstimator):
    """Classification-based density ratio for a shift policy.

    Parameters
    ----------
    learner : EnsembleSpec, LearnerSpec, estimator, or None
        Probabilistic classifier trained on the stacked sample. None
        selects the default classification ensemble.
    ratio_bounds : (float, float)
        Truncation interval for predicted ratios; must bracket 1.
    warn_threshold : float
        Fraction of upper-truncated mass above which the positivity
        profile raises its warning flag.
    seed : int
        Seeds the ensemble's internal cross-validation split.
    """

    def __init__(self, learner=None, ratio_bounds=(0.01, 100.0), warn_threshold=0.02, seed=0):
        self.learner = learner
        self.ratio_bounds = ratio_bounds
        self.warn_threshold = warn_threshold
        self.seed = seed

    def _build(self):
        learner = self.learner if self.learner is not None else default_classification_ensemble()
        if isinstance(learner, EnsembleSpec):
            return learner.build(seed=self.seed)
        if isinstance(learner, LearnerSpec):
            return learner.build()
        return clone(learner)

    def fit_stacks(self, X_observed, X_shifted, groups=None):
        """Train on two row-aligned design matrices (label 0 vs label 1).

        The generic entry point: callers that shift several design
        columns at once (for example past exposure coordinates in a
        yearly panel) assemble the matrices themselves.
        """
        X0 = check_matrix(X_observed, "X_observed")
        X1 = check_matrix(X_shifted, "X_shifted")
        if X0.shape != X1.shape:
            raise ValueError("observed and shifted design matrices must share a shape")
        _check_bounds(self.ratio_bounds)
        X = np.vstack([X0, X1])
        labels = np.concatenate([np.zeros(X0.shape[0]), np.ones(X0.shape[0])])
        model = self._build()
        if isinstance(model, SuperLearner) and groups is not None:
            model.fit(X, labels, groups=np.concatenate([groups, groups]))
        else:
            model.fit(X, labels)
        self.classifier_ = model
        self.n_features_in_ = X.shape[1]
        return self

    def fit(self, exposure, covariates, policy, groups=None):
        """Train the classifier on observed rows versus shifted copies."""
        a = check_vector(exposure, "exposure")
        w = check_matrix(covariates, "covariates", allow_empty=True)
        if w.shape[0] != a.shape[0]:
            raise ValueError("exposure and covariates disagree on row count")
        shifted = _apply_policy(policy, a)
        return self.fit_stacks(
            np.column_stack([a, w]), np.column_stack([shifted, w]), groups=groups
        )

    def odds_at(self, X):
        """Untruncated ratio (classifier odds) at full design rows."""
        if not hasattr(self, "classifier_"):
            raise NotFittedError("DensityRatioClassifier is not fitted yet")
        X = check_matrix(X, "X")
        p = np.clip(self.classifier_.predict(X), 1e-12, 1.0 - 1e-12)
        return p / (1.0 - p)

    def ratio_at(self, X):
        """Truncated ratio at full design rows."""
        lo, hi = _check_bounds(self.ratio_bounds)
        return np.clip(self.odds_at(X), lo, hi)

    def predict_odds(self, exposure, covariates):
        a = check_vector(exposure, "exposure")
        w = check_matrix(covariates, "covariates", allow_empty=True)
        return self.odds_at(np.column_stack([a, w]))

    def predict_ratio(self, exposure, covariates):
        """Truncated density-ratio values at the given (a, w) points."""
        lo, hi = _check_bounds(self.ratio_bounds)
        return np.clip(self.predict_odds(exposure, covariates), lo, hi)

    def positivity_profile(self, exposure, covariates):
        raw = self.predict_odds(exposure, covariates)
        return summarize_positivity(raw, self.ratio_bounds, self.warn_threshold)


class ConstantDensityRatio(BaseEstimator):
    """A known, constant ratio; handy when the shift is null or external.

    Fitting is a no-op so the class drops into any slot expecting the
    classifier interface.
    """

    def __init__(self, value=1.0, ratio_bounds=(0.01, 100.0), warn_threshold=0.02):
        self.value = value
        self.ratio_bounds = ratio_bounds
        self.warn_threshold = warn_threshold

    def _mark_fitted(self):
        if self.value <= 0:
            raise ValueError("ratio must be positive")
        self.fitted_ = True
        return self

    def fit(self, exposure, covariates, policy, groups=None):
        return self._mark_fitted()

    def fit_stacks(self, X_observed, X_shifted, groups=None):
        return self._mark_fitted()

    def odds_at(self, X):
        if not hasattr(self, "fitted_"):
            raise NotFittedError("ConstantDensityRatio is not fitted yet")
        X = check_matrix(X, "X")
        return np.full(X.shape[0], float(self.value))

    def ratio_at(self, X):
        lo, hi = _check_bounds(self.ratio_bounds)
        return np.clip(self.odds_at(X), lo, hi)

    def predict_odds(self, exposure, covariates):
        a = check_vector(exposure, "exposure")
        return np.full(a.size, float(self.value))

    def predict_ratio(self, exposure, covariates):
        lo, hi = _check_bounds(self.ratio_bounds)
        return np.clip(self.predict_odds(exposure, covariates), lo, hi)

    def positivity_profile(self, exposure, covariates):
        return summarize_positivity(
            self.predict_odds(exposure, covariates), self.ratio_bounds, self.warn_threshold
        )


def fit_ratio(exposure, covariates, policy, learner=None, ratio_bounds=(0.01, 100.0), seed=0, groups=None):
    """One-call convenience wrapper around DensityRatioClassifier."""
    model = DensityRatioClassifier(
        learner=learner, ratio_bounds=ratio_bounds, seed=seed
    )
    return model.fit(exposure, covariates, policy, groups=groups)
