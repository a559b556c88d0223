"""Confidence areas for fixed-effects PCA."""

from .core import (
    Dataset,
    NoiseModel,
    PcaFit,
    Preprocess,
    ProjectionOperator,
    apply_projection,
    corrected_residuals,
    curvature_index,
    estimate_noise_variance,
    fit_pca,
    nonlinearity,
    preprocess,
    projection_diagonal,
    projection_operator,
)
from .geometry import (
    ConfidenceEllipsoid,
    align_set,
    aligned_coordinates,
    contains,
    ellipse_outline,
    fit_ellipsoid,
    procrustes_rotation,
    project_scores,
)
from .inference import (
    PseudoRealizationSet,
    approximate_jackknife,
    asymptotic_draws,
    cellwise_jackknife,
    parametric_bootstrap,
    run_method,
)
from .missing import EmConfig, MaskedMatrix, em_pca, weighted_loss
from .simulation import (
    CoverageTable,
    SimulationConfig,
    add_noise,
    generate_structure,
    run_coverage_experiment,
    signal_from_dataset,
)

__version__ = "0.1.0"
