"""Base learners, stacking ensemble, and permutation screening."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from sklearn.exceptions import NotFittedError

from policyshift import (
    BoostedTreeClassifier,
    BoostedTreeRegressor,
    EnsembleSpec,
    InterceptOnly,
    LearnerSpec,
    LinearGLM,
    LogisticGLM,
    SuperLearner,
    default_classification_ensemble,
    default_regression_ensemble,
    permutation_importance,
)


def linear_data(n=400, seed=0, noise=0.1):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = 1.0 + 2.0 * X[:, 0] - 0.5 * X[:, 1] + noise * rng.normal(size=n)
    return X, y


def test_intercept_only_predicts_mean():
    model = InterceptOnly().fit(np.zeros((2, 1)), np.array([1.0, 3.0]))
    assert_allclose(model.predict(np.zeros((5, 1))), 2.0)


def test_intercept_only_weighted_mean():
    model = InterceptOnly().fit(
        np.zeros((2, 1)), np.array([0.0, 10.0]), sample_weight=np.array([3.0, 1.0])
    )
    assert_allclose(model.predict(np.zeros((1, 1))), 2.5)


def test_linear_glm_recovers_exact_line():
    x = np.linspace(-2, 2, 50).reshape(-1, 1)
    model = LinearGLM().fit(x, 2.0 * x[:, 0])
    assert_allclose(model.coef_[0], 2.0, atol=1e-8)
    assert_allclose(model.intercept_, 0.0, atol=1e-8)
    assert_allclose(model.predict(x), 2.0 * x[:, 0], atol=1e-8)
    assert not model.regularized_fallback_


def test_linear_glm_collinear_fallback_flag():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(60, 1))
    X = np.column_stack([x, x])
    model = LinearGLM().fit(X, 3.0 * x[:, 0])
    assert model.regularized_fallback_
    assert_allclose(model.predict(X), 3.0 * x[:, 0], atol=1e-4)


def test_logistic_glm_recovers_coefficients():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(4000, 2))
    logits = 0.5 + 1.5 * X[:, 0] - 1.0 * X[:, 1]
    y = (rng.uniform(size=4000) < 1.0 / (1.0 + np.exp(-logits))).astype(float)
    model = LogisticGLM().fit(X, y)
    assert_allclose(model.coef_, [1.5, -1.0], atol=0.25)
    assert_allclose(model.intercept_, 0.5, atol=0.25)
    preds = model.predict(X)
    assert preds.min() >= 0.0 and preds.max() <= 1.0


def test_logistic_glm_matches_reference_mle():
    from sklearn.linear_model import LogisticRegression

    rng = np.random.default_rng(20)
    X = rng.normal(size=(1500, 3))
    logits = -0.3 + 0.8 * X[:, 0] - 0.6 * X[:, 1]
    y = (rng.uniform(size=1500) < 1.0 / (1.0 + np.exp(-logits))).astype(float)
    mine = LogisticGLM().fit(X, y)
    reference = LogisticRegression(C=1e10, tol=1e-12, max_iter=5000).fit(X, y)
    assert_allclose(mine.coef_, reference.coef_[0], atol=1e-4)
    assert_allclose(mine.intercept_, reference.intercept_[0], atol=1e-4)


def test_logistic_glm_accepts_fractional_targets():
    X = np.array([[0.0], [1.0], [0.0], [1.0]])
    model = LogisticGLM().fit(X, np.array([0.2, 0.8, 0.3, 0.7]))
    assert model.predict(X[:2]).shape == (2,)
    with pytest.raises(ValueError):
        LogisticGLM().fit(X, np.array([0.0, 1.5, 0.0, 1.0]))


def test_gbt_training_loss_is_monotone():
    rng = np.random.default_rng(3)
    X = rng.uniform(-3, 3, size=(500, 1))
    y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=500)
    model = BoostedTreeRegressor(trees=80, depth=3).fit(X, y)
    assert np.all(np.diff(model.train_losses_) <= 1e-12)
    baseline = float(np.mean((y - y.mean()) ** 2))
    assert model.train_losses_[-1] < baseline


def test_gbt_final_loss_matches_refit_predictions():
    rng = np.random.default_rng(4)
    X = rng.uniform(-3, 3, size=(300, 2))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1]
    model = BoostedTreeRegressor(trees=50, depth=2).fit(X, y)
    mse = float(np.mean((y - model.predict(X)) ** 2))
    assert_allclose(mse, model.train_losses_[-1], atol=1e-10)


def test_gbt_classifier_probabilities_and_loss():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(600, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(float)
    model = BoostedTreeClassifier(trees=60, depth=2).fit(X, y)
    p = model.predict(X)
    assert p.min() >= model.p_min and p.max() <= 1 - model.p_min
    assert np.mean((p > 0.5) == (y > 0.5)) > 0.9
    assert np.all(np.diff(model.train_losses_) <= 1e-12)


def test_gbt_determinism():
    X, y = linear_data(seed=6)
    a = BoostedTreeRegressor(trees=30, depth=2).fit(X, y).predict(X)
    b = BoostedTreeRegressor(trees=30, depth=2).fit(X, y).predict(X)
    assert_allclose(a, b, rtol=0, atol=0)


def test_gbt_feature_count_check():
    X, y = linear_data(seed=7)
    model = BoostedTreeRegressor(trees=5, depth=1).fit(X, y)
    with pytest.raises(ValueError):
        model.predict(X[:, :2])


def test_unfitted_learners_raise():
    X, y = linear_data(seed=8, n=20)
    for model in (InterceptOnly(), LinearGLM(), BoostedTreeRegressor(trees=2)):
        with pytest.raises(NotFittedError):
            model.predict(X)


def test_learner_spec_validation_and_build():
    spec = LearnerSpec(kind="GBT_REGRESS", hyperparameters=(("trees", 10), ("depth", 1)))
    model = spec.build()
    assert isinstance(model, BoostedTreeRegressor)
    assert model.trees == 10
    with pytest.raises(ValueError):
        LearnerSpec(kind="RANDOM_FOREST")
    with pytest.raises(ValueError):
        LearnerSpec(kind="GLM_LINEAR", hyperparameters=(("trees", 5),))
    round_trip = LearnerSpec.from_dict(spec.to_dict())
    assert round_trip == spec


def test_ensemble_spec_round_trip():
    spec = default_regression_ensemble()
    back = EnsembleSpec.from_dict(spec.to_dict())
    assert back == spec
    with pytest.raises(ValueError):
        EnsembleSpec(library=())


def test_superlearner_weights_on_simplex():
    X, y = linear_data(seed=9)
    model = default_regression_ensemble().build(seed=1).fit(X, y)
    assert model.weights_.min() >= -1e-12
    assert_allclose(model.weights_.sum(), 1.0, atol=1e-8)
    assert len(model.cv_losses_) == 3


def test_superlearner_singleton_library_matches_member():
    X, y = linear_data(seed=10)
    stack = SuperLearner(library=[LearnerSpec("GLM_LINEAR")], seed=0).fit(X, y)
    alone = LinearGLM().fit(X, y)
    assert_allclose(stack.predict(X), alone.predict(X), atol=1e-10)
    assert_allclose(stack.weights_, [1.0])


def test_superlearner_prefers_correct_member_on_linear_truth():
    X, y = linear_data(n=1000, seed=11)
    stack = SuperLearner(
        library=[LearnerSpec("INTERCEPT_ONLY"), LearnerSpec("GLM_LINEAR")], seed=0
    ).fit(X, y)
    assert stack.weights_[1] >= 0.9


def test_superlearner_stack_never_worse_than_best_member():
    rng = np.random.default_rng(12)
    X = rng.uniform(-3, 3, size=(500, 2))
    y = np.sin(X[:, 0]) + 0.3 * rng.normal(size=500)
    stack = default_regression_ensemble().build(seed=2).fit(X, y)
    oof_best = float(stack.cv_losses_.min())
    pred = stack.predict(X)
    assert pred.shape == (500,)
    stack_cv = float(np.min(stack.cv_losses_))
    assert stack_cv <= oof_best + 1e-12


def test_superlearner_discrete_selection():
    X, y = linear_data(seed=13)
    stack = SuperLearner(
        library=[LearnerSpec("INTERCEPT_ONLY"), LearnerSpec("GLM_LINEAR")],
        weighting="discrete_select",
        seed=0,
    ).fit(X, y)
    assert set(np.unique(stack.weights_)) == {0.0, 1.0}
    assert stack.weights_[1] == 1.0


def test_superlearner_deterministic_given_seed():
    X, y = linear_data(seed=14)
    a = default_regression_ensemble().build(seed=3).fit(X, y).predict(X)
    b = default_regression_ensemble().build(seed=3).fit(X, y).predict(X)
    assert_allclose(a, b, rtol=0, atol=0)


def test_superlearner_classification_outputs_probabilities():
    rng = np.random.default_rng(15)
    X = rng.normal(size=(400, 2))
    y = (X[:, 0] > 0).astype(float)
    stack = default_classification_ensemble().build(seed=4).fit(X, y)
    p = stack.predict(X)
    assert p.min() >= 0.0 and p.max() <= 1.0
    assert np.mean((p > 0.5) == (y > 0.5)) > 0.9


def test_superlearner_respects_cluster_groups():
    X, y = linear_data(n=200, seed=16)
    groups = np.repeat(np.arange(10), 20)
    stack = SuperLearner(library=[LearnerSpec("GLM_LINEAR")], v_folds=5, seed=0).fit(
        X, y, groups=groups
    )
    for v in np.unique(stack.fold_ids_):
        in_fold = set(groups[stack.fold_ids_ == v])
        out_fold = set(groups[stack.fold_ids_ != v])
        assert not in_fold & out_fold


def test_permutation_importance_signal_vs_noise():
    rng = np.random.default_rng(17)
    X = rng.normal(size=(800, 2))
    y = 3.0 * X[:, 0] + 0.1 * rng.normal(size=800)
    model = LinearGLM().fit(X, y)
    signal = permutation_importance(model, X, y, 0, repeats=20, seed=0)
    noise = permutation_importance(model, X, y, 1, repeats=20, seed=0)
    assert signal.score > 0
    assert signal.score > noise.score
    assert abs(noise.score) < 2 * max(noise.se, 1e-12) + 1e-6
    assert signal.is_important()
    assert not noise.is_important()


def test_permutation_importance_splits_duplicated_signal():
    rng = np.random.default_rng(18)
    x = rng.normal(size=600)
    y = 3.0 * x + 0.1 * rng.normal(size=600)
    single = LinearGLM().fit(x.reshape(-1, 1), y)
    solo = permutation_importance(single, x.reshape(-1, 1), y, 0, repeats=10, seed=1)
    X_dup = np.column_stack([x, x])
    dup_model = LinearGLM(l2=1e-6).fit(X_dup, y)
    dup = permutation_importance(dup_model, X_dup, y, 0, repeats=10, seed=1)
    assert dup.score < solo.score


def test_permutation_importance_named_features_and_errors():
    X, y = linear_data(seed=19, n=100)
    model = LinearGLM().fit(X, y)
    result = permutation_importance(
        model, X, y, "b", feature_names=["a", "b", "c"], repeats=5, seed=0
    )
    assert result.feature == "b"
    with pytest.raises(ValueError):
        permutation_importance(model, X, y, "zz", feature_names=["a", "b", "c"])
    with pytest.raises(ValueError):
        permutation_importance(model, X, y, 7)
    with pytest.raises(ValueError):
        permutation_importance(model, X, y, 0, repeats=1)
