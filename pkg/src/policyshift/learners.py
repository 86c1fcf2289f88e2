"""Deterministic base learners and a cross-validated stacking ensemble.

Everything here is implemented directly on numpy: an intercept-only
predictor, linear and logistic GLMs solved by (weighted) least squares
and IRLS, and gradient-boosted depth-limited regression trees with
exact greedy splits. The ensemble collects out-of-fold predictions,
solves for convex stacking weights by projected gradient descent on the
simplex (or picks the single best member), then refits every member on
the full data. Fits are bit-reproducible: the only randomness is the
seeded fold shuffle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.exceptions import NotFittedError

from ._utils import derive_seed, cluster_folds, expit, project_simplex, row_folds
from ._validation import check_matrix, check_vector

__all__ = [
    "LEARNER_KINDS",
    "LearnerSpec",
    "EnsembleSpec",
    "InterceptOnly",
    "LinearGLM",
    "LogisticGLM",
    "BoostedTreeRegressor",
    "BoostedTreeClassifier",
    "SuperLearner",
    "ImportanceResult",
    "permutation_importance",
    "default_regression_ensemble",
    "default_classification_ensemble",
]

PROB_EPS = 1e-12


def _weights_or_ones(sample_weight, n):
    if sample_weight is None:
        return np.ones(n, dtype=np.float64)
    w = check_vector(sample_weight, "sample_weight", n)
    if np.any(w < 0):
        raise ValueError("sample_weight must be nonnegative")
    return w


def _require_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet")


class InterceptOnly(BaseEstimator):
    """Predict the (weighted) training mean everywhere."""

    predicts_probabilities = False

    def fit(self, X, y, sample_weight=None):
        X = check_matrix(X, allow_empty=True)
        y = check_vector(y, n_rows=X.shape[0])
        w = _weights_or_ones(sample_weight, len(y))
        self.n_features_in_ = X.shape[1]
        self.mean_ = float(np.average(y, weights=w)) if w.sum() > 0 else float(y.mean())
        return self

    def predict(self, X):
        _require_fitted(self, "mean_")
        X = check_matrix(X, allow_empty=True)
        return np.full(X.shape[0], self.mean_, dtype=np.float64)


class LinearGLM(BaseEstimator):
    """Weighted least squares with an intercept and optional L2 penalty.

    A singular design triggers a small ridge fallback and sets
    ``regularized_fallback_`` so callers can surface the flag.
    """

    predicts_probabilities = False

    def __init__(self, l2=0.0):
        self.l2 = l2

    def fit(self, X, y, sample_weight=None):
        X = check_matrix(X, allow_empty=True)
        y = check_vector(y, n_rows=X.shape[0])
        w = _weights_or_ones(sample_weight, len(y))
        Xa = np.column_stack([np.ones(len(y)), X])
        self.n_features_in_ = X.shape[1]
        self.regularized_fallback_ = False

        sw = np.sqrt(w)
        if self.l2 > 0.0:
            beta = self._ridge_solve(Xa, y, w, self.l2)
        else:
            beta, _, rank, _ = np.linalg.lstsq(Xa * sw[:, None], y * sw, rcond=None)
            if rank < Xa.shape[1] or not np.isfinite(beta).all():
                self.regularized_fallback_ = True
                beta = self._ridge_solve(Xa, y, w, self._fallback_penalty(Xa, w))
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:]
        return self

    @staticmethod
    def _fallback_penalty(Xa, w):
        gram_scale = float(np.mean(np.sum(w[:, None] * Xa**2, axis=0)))
        return max(gram_scale, 1.0) * 1e-8

    @staticmethod
    def _ridge_solve(Xa, y, w, l2):
        gram = Xa.T @ (w[:, None] * Xa)
        penalty = np.eye(Xa.shape[1]) * l2
        penalty[0, 0] = 0.0  # never shrink the intercept
        rhs = Xa.T @ (w * y)
        try:
            return np.linalg.solve(gram + penalty, rhs)
        except np.linalg.LinAlgError:
            penalty = np.eye(Xa.shape[1]) * max(l2, LinearGLM._fallback_penalty(Xa, w))
            penalty[0, 0] = 0.0
            return np.linalg.solve(gram + penalty, rhs)

    def predict(self, X):
        _require_fitted(self, "coef_")
        X = check_matrix(X, allow_empty=True)
        return self.intercept_ + X @ self.coef_


class LogisticGLM(BaseEstimator):
    """Logistic regression fitted by IRLS; targets may be in [0, 1]."""

    predicts_probabilities = True

    def __init__(self, l2=0.0, max_iter=100, tol=1e-10):
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y, sample_weight=None):
        X = check_matrix(X, allow_empty=True)
        y = check_vector(y, n_rows=X.shape[0])
        if y.size and (y.min() < 0.0 or y.max() > 1.0):
            raise ValueError("logistic targets must lie in [0, 1]")
        w = _weights_or_ones(sample_weight, len(y))
        Xa = np.column_stack([np.ones(len(y)), X])
        self.n_features_in_ = X.shape[1]
        self.regularized_fallback_ = False

        beta = self._irls(Xa, y, w, self.l2)
        if beta is None or not np.isfinite(beta).all():
            self.regularized_fallback_ = True
            beta = self._irls(Xa, y, w, max(self.l2, 1e-8))
            if beta is None:
                beta = np.zeros(Xa.shape[1])
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:]
        return self

    def _irls(self, Xa, y, w, l2):
        beta = np.zeros(Xa.shape[1])
        penalty = np.eye(Xa.shape[1]) * l2
        penalty[0, 0] = 0.0
        for _ in range(self.max_iter):
            eta = Xa @ beta
            p = expit(eta)
            var = np.clip(p * (1.0 - p), 1e-10, None)
            irls_w = w * var
            z = eta + (y - p) / var
            gram = Xa.T @ (irls_w[:, None] * Xa) + penalty
            rhs = Xa.T @ (irls_w * z)
            try:
                new = np.linalg.solve(gram, rhs)
            except np.linalg.LinAlgError:
                return None
            # separation sends coefficients to infinity; freeze there
            new = np.clip(new, -500.0, 500.0)
            step = np.max(np.abs(new - beta)) if beta.size else 0.0
            beta = new
            if step < self.tol:
                break
        return beta

    def predict(self, X):
        _require_fitted(self, "coef_")
        X = check_matrix(X, allow_empty=True)
        p = expit(self.intercept_ + X @ self.coef_)
        return np.clip(p, 1e-15, 1.0 - 1e-15)


def _best_split(x_node, grad, hess, g_total, h_total, min_leaf, l2):
    """Exact greedy split of one feature; returns (gain, threshold)."""
    order = np.argsort(x_node, kind="stable")
    xs = x_node[order]
    boundaries = np.nonzero(xs[:-1] < xs[1:])[0]
    if boundaries.size == 0:
        return None
    left_counts = boundaries + 1
    keep = (left_counts >= min_leaf) & (len(xs) - left_counts >= min_leaf)
    boundaries = boundaries[keep]
    if boundaries.size == 0:
        return None
    gl = np.cumsum(grad[order])[boundaries]
    hl = np.cumsum(hess[order])[boundaries]
    gr = g_total - gl
    hr = h_total - hl
    denom = l2 + PROB_EPS
    gains = gl**2 / (hl + denom) + gr**2 / (hr + denom) - g_total**2 / (h_total + denom)
    best = int(np.argmax(gains))
    if gains[best] <= 1e-12:
        return None
    cut = boundaries[best]
    threshold = 0.5 * (xs[cut] + xs[cut + 1])
    return float(gains[best]), float(threshold)


def _grow_tree(X, grad, hess, max_depth, min_leaf, l2):
    """Depth-limited regression tree on gradient/hessian residuals.

    Nodes are stored as parallel lists; leaves carry the Newton step
    -G / (H + l2). Ties in gain resolve to the lowest feature index, so
    growth is deterministic.
    """
    features, thresholds, lefts, rights, values = [], [], [], [], []

    def build(idx, depth):
        g = grad[idx]
        h = hess[idx]
        g_total = float(g.sum())
        h_total = float(h.sum())
        node = len(features)
        features.append(-1)
        thresholds.append(0.0)
        lefts.append(-1)
        rights.append(-1)
        values.append(-g_total / (h_total + l2 + PROB_EPS))
        if depth >= max_depth or idx.size < 2 * min_leaf:
            return node
        best_gain, best_feature, best_threshold = 0.0, -1, 0.0
        for j in range(X.shape[1]):
            found = _best_split(X[idx, j], g, h, g_total, h_total, min_leaf, l2)
            if found is not None and found[0] > best_gain + 1e-15:
                best_gain, best_feature, best_threshold = found[0], j, found[1]
        if best_feature < 0:
            return node
        mask = X[idx, best_feature] <= best_threshold
        features[node] = best_feature
        thresholds[node] = best_threshold
        lefts[node] = build(idx[mask], depth + 1)
        rights[node] = build(idx[~mask], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return (
        np.asarray(features, dtype=np.int64),
        np.asarray(thresholds, dtype=np.float64),
        np.asarray(lefts, dtype=np.int64),
        np.asarray(rights, dtype=np.int64),
        np.asarray(values, dtype=np.float64),
    )


def _tree_predict(tree, X):
    features, thresholds, lefts, rights, values = tree
    out = np.empty(X.shape[0], dtype=np.float64)
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if features[node] < 0:
            out[idx] = values[node]
            continue
        mask = X[idx, features[node]] <= thresholds[node]
        stack.append((lefts[node], idx[mask]))
        stack.append((rights[node], idx[~mask]))
    return out


class _BoostedTrees(BaseEstimator):
    """Shared boosting loop; subclasses define the loss."""

    def __init__(self, trees=200, depth=3, learning_rate=0.1, min_leaf=5, l2=0.0):
        self.trees = trees
        self.depth = depth
        self.learning_rate = learning_rate
        self.min_leaf = min_leaf
        self.l2 = l2

    def fit(self, X, y, sample_weight=None):
        X = check_matrix(X)
        y = check_vector(y, n_rows=X.shape[0])
        self._check_targets(y)
        w = _weights_or_ones(sample_weight, len(y))
        if self.trees < 1 or self.depth < 1 or not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("trees >= 1, depth >= 1, learning_rate in (0, 1] required")
        self.n_features_in_ = X.shape[1]
        self.base_score_ = self._initial_score(y, w)
        raw = np.full(len(y), self.base_score_, dtype=np.float64)
        self.trees_ = []
        self.scales_ = []
        losses = [self._loss(y, raw, w)]
        for _ in range(self.trees):
            grad, hess = self._gradients(y, raw, w)
            tree = _grow_tree(X, grad, hess, self.depth, self.min_leaf, self.l2)
            step = self.learning_rate * _tree_predict(tree, X)
            scale = 1.0
            # halve the step until the training loss does not increase;
            # squared loss never triggers this, logistic rarely does
            for _ in range(40):
                loss = self._loss(y, raw + scale * step, w)
                if loss <= losses[-1] + 1e-15:
                    break
                scale *= 0.5
            else:
                scale = 0.0
                loss = losses[-1]
            raw = raw + scale * step
            self.trees_.append(tree)
            self.scales_.append(scale * self.learning_rate)
            losses.append(loss)
        self.train_losses_ = np.asarray(losses)
        return self

    def _raw_predict(self, X):
        _require_fitted(self, "trees_")
        X = check_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        raw = np.full(X.shape[0], self.base_score_, dtype=np.float64)
        for tree, scale in zip(self.trees_, self.scales_):
            if scale != 0.0:
                raw += scale * _tree_predict(tree, X)
        return raw

    def _check_targets(self, y):
        pass


class BoostedTreeRegressor(_BoostedTrees):
    """Gradient boosting with squared-error loss."""

    predicts_probabilities = False

    @staticmethod
    def _initial_score(y, w):
        return float(np.average(y, weights=w))

    @staticmethod
    def _gradients(y, raw, w):
        return w * (raw - y), w.copy()

    @staticmethod
    def _loss(y, raw, w):
        return float(np.average((y - raw) ** 2, weights=w))

    def predict(self, X):
        return self._raw_predict(X)


class BoostedTreeClassifier(_BoostedTrees):
    """Gradient boosting with logistic loss; predictions are probabilities."""

    predicts_probabilities = True

    def __init__(self, trees=200, depth=3, learning_rate=0.1, min_leaf=5, l2=0.0, p_min=0.005):
        super().__init__(trees=trees, depth=depth, learning_rate=learning_rate, min_leaf=min_leaf, l2=l2)
        self.p_min = p_min

    def _check_targets(self, y):
        if y.min() < 0.0 or y.max() > 1.0:
            raise ValueError("classification targets must lie in [0, 1]")

    @staticmethod
    def _initial_score(y, w):
        mean = np.clip(np.average(y, weights=w), 1e-10, 1.0 - 1e-10)
        return float(np.log(mean / (1.0 - mean)))

    @staticmethod
    def _gradients(y, raw, w):
        p = expit(raw)
        return w * (p - y), w * np.clip(p * (1.0 - p), PROB_EPS, None)

    @staticmethod
    def _loss(y, raw, w):
        p = np.clip(expit(raw), PROB_EPS, 1.0 - PROB_EPS)
        return float(np.average(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)), weights=w))

    def predict(self, X):
        p = expit(self._raw_predict(X))
        return np.clip(p, self.p_min, 1.0 - self.p_min)


LEARNER_KINDS = {
    "INTERCEPT_ONLY": (InterceptOnly, ()),
    "GLM_LINEAR": (LinearGLM, ("l2",)),
    "GLM_LOGISTIC": (LogisticGLM, ("l2", "max_iter", "tol")),
    "GBT_REGRESS": (
        BoostedTreeRegressor,
        ("trees", "depth", "learning_rate", "min_leaf", "l2"),
    ),
    "GBT_CLASSIFY": (
        BoostedTreeClassifier,
        ("trees", "depth", "learning_rate", "min_leaf", "l2", "p_min"),
    ),
}


@dataclass(frozen=True)
class LearnerSpec:
    """Declarative learner description; serializes into run configs."""

    kind: str
    hyperparameters: tuple = ()

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ValueError(
                f"unknown learner kind '{self.kind}'; expected one of {sorted(LEARNER_KINDS)}"
            )
        hp = dict(self.hyperparameters)
        allowed = LEARNER_KINDS[self.kind][1]
        unknown = sorted(set(hp) - set(allowed))
        if unknown:
            raise ValueError(
                f"unknown hyperparameters {unknown} for {self.kind}; allowed: {list(allowed)}"
            )
        object.__setattr__(self, "hyperparameters", tuple(sorted(hp.items())))

    def build(self):
        cls = LEARNER_KINDS[self.kind][0]
        return cls(**dict(self.hyperparameters))

    def to_dict(self):
        out = {"kind": self.kind}
        out.update(dict(self.hyperparameters))
        return out

    @classmethod
    def from_dict(cls, payload):
        payload = dict(payload)
        kind = payload.pop("kind", None)
        if kind is None:
            raise ValueError("learner config needs a 'kind' entry")
        return cls(kind=kind, hyperparameters=tuple(payload.items()))


@dataclass(frozen=True)
class EnsembleSpec:
    """Declarative stacking configuration."""

    library: tuple
    v_folds: int = 5
    loss: str = "squared_error"
    weighting: str = "convex_stack"
    p_min: float = 0.005

    def __post_init__(self):
        library = tuple(
            spec if isinstance(spec, LearnerSpec) else LearnerSpec.from_dict(spec)
            for spec in self.library
        )
        if not library:
            raise ValueError("ensemble library is empty")
        object.__setattr__(self, "library", library)
        if self.loss not in ("squared_error", "log_loss"):
            raise ValueError(f"unknown loss '{self.loss}'")
        if self.weighting not in ("convex_stack", "discrete_select"):
            raise ValueError(f"unknown weighting '{self.weighting}'")
        if self.v_folds < 2:
            raise ValueError("v_folds must be at least 2")

    def build(self, seed=0):
        return SuperLearner(
            library=[spec.build() for spec in self.library],
            v_folds=self.v_folds,
            loss=self.loss,
            weighting=self.weighting,
            p_min=self.p_min,
            seed=seed,
        )

    def to_dict(self):
        return {
            "library": [spec.to_dict() for spec in self.library],
            "v_folds": self.v_folds,
            "loss": self.loss,
            "weighting": self.weighting,
            "p_min": self.p_min,
        }

    @classmethod
    def from_dict(cls, payload):
        payload = dict(payload)
        library = payload.pop("library", None)
        if not library:
            raise ValueError("ensemble config needs a nonempty 'library'")
        known = {"v_folds", "loss", "weighting", "p_min"}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ValueError(f"unknown ensemble config keys {unknown}")
        return cls(library=tuple(LearnerSpec.from_dict(e) for e in library), **payload)


def default_regression_ensemble():
    return EnsembleSpec(
        library=(
            LearnerSpec("INTERCEPT_ONLY"),
            LearnerSpec("GLM_LINEAR"),
            LearnerSpec("GBT_REGRESS"),
        ),
        loss="squared_error",
    )


def default_classification_ensemble():
    return EnsembleSpec(
        library=(
            LearnerSpec("INTERCEPT_ONLY"),
            LearnerSpec("GLM_LOGISTIC"),
            LearnerSpec("GBT_CLASSIFY"),
        ),
        loss="log_loss",
    )


def _pointwise_loss(loss, y, pred, p_min):
    if loss == "log_loss":
        p = np.clip(pred, p_min, 1.0 - p_min)
        return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return (y - pred) ** 2


class SuperLearner(BaseEstimator):
    """V-fold stacked ensemble over a fixed learner library.

    Out-of-fold predictions feed either a convex weight vector (solved
    by projected gradient descent on the simplex, 1000 iterations,
    tolerance 1e-10) or a discrete pick of the single best member. The
    cross-validated loss of the returned combination never exceeds the
    best single member's by more than the solver tolerance.
    """

    def __init__(
        self,
        library=None,
        v_folds=5,
        loss="squared_error",
        weighting="convex_stack",
        p_min=0.005,
        seed=0,
    ):
        self.library = library
        self.v_folds = v_folds
        self.loss = loss
        self.weighting = weighting
        self.p_min = p_min
        self.seed = seed

    @property
    def predicts_probabilities(self):
        return self.loss == "log_loss"

    def _build_members(self):
        if not self.library:
            raise ValueError("ensemble library is empty")
        members = []
        for entry in self.library:
            members.append(entry.build() if isinstance(entry, LearnerSpec) else clone(entry))
        return members

    def fit(self, X, y, sample_weight=None, groups=None):
        X = check_matrix(X, allow_empty=True)
        y = check_vector(y, n_rows=X.shape[0])
        w = _weights_or_ones(sample_weight, len(y))
        members = self._build_members()
        n, k = len(y), len(members)
        fold_seed = derive_seed(self.seed, "stack-folds")
        if groups is not None and len(np.unique(groups)) >= self.v_folds:
            folds = cluster_folds(np.asarray(groups), self.v_folds, fold_seed)
        else:
            folds = row_folds(n, self.v_folds, fold_seed)

        oof = np.empty((n, k), dtype=np.float64)
        for v in range(self.v_folds):
            test = folds == v
            train = ~test
            for j, member in enumerate(members):
                fitted = clone(member).fit(X[train], y[train], sample_weight=w[train])
                oof[test, j] = fitted.predict(X[test])
        if self.loss == "log_loss":
            oof = np.clip(oof, self.p_min, 1.0 - self.p_min)

        self.cv_losses_ = np.array(
            [np.average(_pointwise_loss(self.loss, y, oof[:, j], self.p_min), weights=w) for j in range(k)]
        )
        best_member = int(np.argmin(self.cv_losses_))
        if self.weighting == "discrete_select" or k == 1:
            weights = np.zeros(k)
            weights[best_member] = 1.0
        else:
            weights = _solve_convex_weights(oof, y, w, self.loss, self.p_min)
            # never return a stack that cross-validates worse than the best member
            stack_loss = float(np.average(_pointwise_loss(self.loss, y, oof @ weights, self.p_min), weights=w))
            if stack_loss > self.cv_losses_[best_member] + 1e-12:
                weights = np.zeros(k)
                weights[best_member] = 1.0
        self.weights_ = weights
        self.members_ = [
            clone(member).fit(X, y, sample_weight=w) for member in members
        ]
        self.n_features_in_ = X.shape[1]
        self.fold_ids_ = folds
        return self

    def predict(self, X):
        _require_fitted(self, "members_")
        X = check_matrix(X, allow_empty=True)
        preds = np.column_stack([m.predict(X) for m in self.members_])
        if self.loss == "log_loss":
            preds = np.clip(preds, self.p_min, 1.0 - self.p_min)
        out = preds @ self.weights_
        if self.loss == "log_loss":
            out = np.clip(out, self.p_min, 1.0 - self.p_min)
        return out


def _solve_convex_weights(oof, y, w, loss, p_min, iterations=1000, tol=1e-10):
    """Projected gradient descent for simplex-constrained stacking weights."""
    n, k = oof.shape
    alpha = np.full(k, 1.0 / k)
    w_norm = w / w.sum()

    def objective(a):
        return float(np.sum(w_norm * _pointwise_loss(loss, y, oof @ a, p_min)))

    def gradient(a):
        combo = oof @ a
        if loss == "log_loss":
            combo = np.clip(combo, p_min, 1.0 - p_min)
            inner = w_norm * (combo - y) / (combo * (1.0 - combo))
        else:
            inner = w_norm * 2.0 * (combo - y)
        return oof.T @ inner

    current = objective(alpha)
    step = 1.0
    for _ in range(iterations):
        grad = gradient(alpha)
        moved = None
        for _ in range(60):
            candidate = project_simplex(alpha - step * grad)
            value = objective(candidate)
            if value <= current + 1e-15:
                moved = (candidate, value)
                break
            step *= 0.5
        if moved is None:
            break
        candidate, value = moved
        shift = float(np.max(np.abs(candidate - alpha)))
        alpha, current = candidate, value
        step = min(step * 2.0, 1e6)
        if shift < tol:
            break
    return alpha


@dataclass(frozen=True)
class ImportanceResult:
    """Permutation importance of one feature: mean loss increase."""

    feature: str
    score: float
    se: float
    repeats: int
    per_repeat: tuple = field(repr=False, default=())

    def is_important(self, z=2.0):
        """Retain the feature when the loss increase clears z standard errors."""
        return self.score - z * self.se > 0.0


def permutation_importance(model, X, y, feature, repeats=10, seed=0, loss=None, feature_names=None):
    """Mean increase in loss from permuting one feature column.

    Parameters
    ----------
    model : fitted estimator with ``predict``
    X, y : evaluation data
    feature : int or str
        Column index, or name resolved through ``feature_names``.
    repeats : int
        Independent permutations, at least 2 (the screening rule needs
        a standard error).
    loss : {"squared_error", "log_loss"} or None
        Defaults to log loss for probability-predicting models.
    """
    X = check_matrix(X)
    y = check_vector(y, n_rows=X.shape[0])
    if repeats < 2:
        raise ValueError("repeats must be at least 2")
    if isinstance(feature, str):
        if feature_names is None or feature not in feature_names:
            raise ValueError(f"feature '{feature}' not found in feature_names")
        index = list(feature_names).index(feature)
        label = feature
    else:
        index = int(feature)
        if not 0 <= index < X.shape[1]:
            raise ValueError(f"feature index {index} out of range for {X.shape[1]} columns")
        label = str(feature_names[index]) if feature_names is not None else str(index)
    if loss is None:
        loss = "log_loss" if getattr(model, "predicts_probabilities", False) else "squared_error"

    baseline = float(np.mean(_pointwise_loss(loss, y, model.predict(X), PROB_EPS)))
    rng = np.random.default_rng(derive_seed(seed, "perm-importance", index))
    diffs = []
    for _ in range(repeats):
        Xp = X.copy()
        Xp[:, index] = Xp[rng.permutation(X.shape[0]), index]
        permuted = float(np.mean(_pointwise_loss(loss, y, model.predict(Xp), PROB_EPS)))
        diffs.append(permuted - baseline)
    diffs = np.asarray(diffs)
    return ImportanceResult(
        feature=label,
        score=float(diffs.mean()),
        se=float(diffs.std(ddof=1) / np.sqrt(repeats)),
        repeats=repeats,
        per_repeat=tuple(float(d) for d in diffs),
    )
