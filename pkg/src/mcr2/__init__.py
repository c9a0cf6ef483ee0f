"""Maximal coding rate reduction: rates, theory checks, optimizers, metrics."""
from .errors import (
    DegenerateFeatureError,
    DimensionMismatchError,
    InvalidInputError,
    InvalidMembershipError,
    NumericalError,
    StagnationError,
)
from .learn import (
    FeatureMapParams,
    OptimizerConfig,
    OptTrace,
    feature_map_forward,
    init_feature_map,
    optimize_representation,
    train_feature_map,
)
from .metrics import MetricReport, evaluate, fit_class_models, kmeans, nearest_subspace_predict
from .rates import (
    RateParams,
    RateReport,
    coding_length,
    coding_rate,
    pair_distance,
    rate_reduction,
    scaled_rate,
    segmented_rate,
)
from .synth import SubspaceMixtureSpec, gen_gaussian, gen_subspace_mixture
from .theory import ScalarProgram, diagnose_optimum, optimal_rate_reduction, optimal_singular_values

__version__ = "0.1.0"
