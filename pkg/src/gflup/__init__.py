"""Genomic prediction from high-dimensional secondary phenotypes via genetic latent factors."""

from .covariance import (
    CovariancePair,
    cor_to_cov,
    cov_to_cor,
    estimate_covariances,
    nearest_positive_definite,
)
from .data import (
    BlueMatrix,
    Kinship,
    MarkerMatrix,
    Partition,
    PlotData,
    center_and_scale,
    genotype_means,
    read_markers,
    read_phenotypes,
    vanraden_kinship,
    write_markers,
    write_phenotypes,
)
from .factors import (
    FactorModel,
    FactorScores,
    factor_scores,
    fit_factor_model,
    latent_dimension,
    ledermann_bound,
    varimax,
)
from .pipeline import (
    FittedPipeline,
    PipelineConfig,
    fit,
    fit_siblup,
    fit_univariate,
    load_pipeline,
    predict,
    predict_siblup,
    run_benchmark,
    save_pipeline,
)
from .prediction import (
    PredictionResult,
    SelectedFactors,
    TraitCovariances,
    accuracy,
    blup_cv1,
    blup_cv2,
    blup_univariate,
    estimate_trait_covariances,
    estimate_variance_components,
    fast_kron_solve,
    select_factors,
    siblup_weights,
)
from .shrinkage import (
    FilterResult,
    PenaltyFit,
    cv_penalty_loss,
    optimize_penalty,
    penalized_correlation,
    redundancy_filter,
)
from .simulation import (
    SimConfig,
    SimTruth,
    benchmark_oracle,
    simulate_dataset,
    simulate_markers,
    split_train_test,
)

__version__ = "0.1.0"
