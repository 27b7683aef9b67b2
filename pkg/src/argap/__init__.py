"""Gap-statistic state-count selection for Markov-switching AR time series."""

from .arcore import (
    ArFilter,
    StationaryMoments,
    distance_cov,
    distance_full,
    distance_mc,
    distance_resultant,
    distance_roots,
    is_stable,
    roots,
    stationary_moments,
)
from .clustering import (
    Clustering,
    build_distance_matrix,
    cluster,
    k_medoids,
    reference_curve,
    reference_point,
)
from .errors import (
    ArgapError,
    DegenerateCaseError,
    InvalidInputError,
    NumericalFailureError,
    UnsupportedOrderError,
)
from .gapselect import (
    BenchmarkReport,
    GapCurves,
    SelectConfig,
    aic_bic,
    estimate_radius,
    run_benchmark,
    select,
)
from .sampler import FilterBatch, sample_batch, sample_filter
from .switching import (
    FitResult,
    PosteriorWeights,
    SwitchingArModel,
    e_step,
    fit_em,
    init_split,
    m_step,
    observed_mspe,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "ArFilter",
    "ArgapError",
    "BenchmarkReport",
    "Clustering",
    "DegenerateCaseError",
    "FilterBatch",
    "FitResult",
    "GapCurves",
    "InvalidInputError",
    "NumericalFailureError",
    "PosteriorWeights",
    "SelectConfig",
    "StationaryMoments",
    "SwitchingArModel",
    "UnsupportedOrderError",
    "aic_bic",
    "build_distance_matrix",
    "cluster",
    "distance_cov",
    "distance_full",
    "distance_mc",
    "distance_resultant",
    "distance_roots",
    "e_step",
    "estimate_radius",
    "fit_em",
    "init_split",
    "is_stable",
    "k_medoids",
    "m_step",
    "observed_mspe",
    "reference_curve",
    "reference_point",
    "roots",
    "run_benchmark",
    "sample_batch",
    "sample_filter",
    "select",
    "simulate",
    "stationary_moments",
]
