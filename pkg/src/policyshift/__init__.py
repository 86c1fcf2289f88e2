"""Estimation of modified-exposure-policy effects on panel outcomes.

The package covers the full pipeline: raw county-year and law-date
ingestion, exposure-shift policies, hand-rolled learners with stacked
ensembling, classification-based exposure density ratios, doubly robust
cross-fitted estimators, cluster-robust influence-curve inference, law
co-occurrence diagnostics, and oracle simulators for verification.
"""

from .density_ratio import (
    ConstantDensityRatio,
    DensityRatioClassifier,
    PositivityProfile,
    fit_ratio,
    summarize_positivity,
)
from .diagnostics import (
    BundleRecommendation,
    CooccurrenceMatrix,
    VarianceExplained,
    bundle_recommendation,
    cooccurrence_by_year,
    cooccurrence_matrix,
    variance_explained,
    variance_explained_table,
)
from .estimators import (
    EstimateReport,
    IdentificationCheck,
    LongitudinalDelayTMLE,
    PointShiftTMLE,
    PositivityError,
    identification_checks,
)
from .inference import (
    ClusteredVariance,
    cluster_robust_se,
    confidence_interval,
    iid_se,
    normal_quantile,
    results_table,
)
from .learners import (
    LEARNER_KINDS,
    BoostedTreeClassifier,
    BoostedTreeRegressor,
    EnsembleSpec,
    ImportanceResult,
    InterceptOnly,
    LearnerSpec,
    LinearGLM,
    LogisticGLM,
    SuperLearner,
    default_classification_ensemble,
    default_regression_ensemble,
    permutation_importance,
)
from .panel import (
    LAW_CODES,
    STRATUM_WINDOWS,
    AttritionReport,
    LongitudinalPanel,
    PanelTable,
    SchemaError,
    augment_with_loo_cluster_means,
    build_longitudinal_panel,
    build_panel,
    compute_rate,
    exposure_years,
    load_county_year,
    load_law_dates,
    proportion_of_year_in_effect,
    resolve_masked_counts,
    state_year_law_table,
)
from .policies import (
    BoundedAdditiveShift,
    LongitudinalDelayPolicy,
    SupportReport,
    check_shift_support,
)
from .simulate import (
    DgpSpec,
    LongitudinalDgpSpec,
    TruthReport,
    simulate,
    stratum_shaped_spec,
    structural_mean,
    true_longitudinal_contrast,
    true_shift_contrast,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BoundedAdditiveShift",
    "LongitudinalDelayPolicy",
    "SupportReport",
    "check_shift_support",
    "LAW_CODES",
    "STRATUM_WINDOWS",
    "SchemaError",
    "AttritionReport",
    "PanelTable",
    "LongitudinalPanel",
    "load_county_year",
    "load_law_dates",
    "resolve_masked_counts",
    "compute_rate",
    "proportion_of_year_in_effect",
    "exposure_years",
    "state_year_law_table",
    "build_panel",
    "build_longitudinal_panel",
    "augment_with_loo_cluster_means",
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
    "DensityRatioClassifier",
    "ConstantDensityRatio",
    "PositivityProfile",
    "summarize_positivity",
    "fit_ratio",
    "PointShiftTMLE",
    "LongitudinalDelayTMLE",
    "EstimateReport",
    "IdentificationCheck",
    "identification_checks",
    "PositivityError",
    "ClusteredVariance",
    "cluster_robust_se",
    "iid_se",
    "normal_quantile",
    "confidence_interval",
    "results_table",
    "CooccurrenceMatrix",
    "cooccurrence_matrix",
    "cooccurrence_by_year",
    "VarianceExplained",
    "variance_explained",
    "variance_explained_table",
    "BundleRecommendation",
    "bundle_recommendation",
    "DgpSpec",
    "LongitudinalDgpSpec",
    "TruthReport",
    "simulate",
    "structural_mean",
    "true_shift_contrast",
    "true_longitudinal_contrast",
    "stratum_shaped_spec",
]
