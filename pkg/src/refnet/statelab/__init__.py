"""State-level comparative statistics over network features."""

from .features import EXTRA_IDS, FEATURE_IDS, FEATURE_LABELS, FeatureConfig, StateFeatureVector, build_features, features_frame
from .mixed import MixedModelFit, StepwiseResult, fit_mixed_model, lrt, stepwise_select
from .multivariate import (TRIAD_FA_IDS, FactorLoadings, KMeansResult, MdsResult, TriadGroups, classical_mds,
                           euclidean_distances, factor_analysis, kmeans, pearson_table, standardize, triad_groups)

__all__ = [
    "EXTRA_IDS", "FEATURE_IDS", "FEATURE_LABELS", "FeatureConfig", "StateFeatureVector", "build_features",
    "features_frame", "MixedModelFit", "StepwiseResult", "fit_mixed_model", "lrt", "stepwise_select",
    "FactorLoadings", "KMeansResult", "MdsResult", "classical_mds", "euclidean_distances", "factor_analysis",
    "kmeans", "pearson_table", "standardize", "TRIAD_FA_IDS", "TriadGroups", "triad_groups",
]
