"""Conjugate Bayesian heteroscedastic spatial regression with MLG priors."""
__version__ = "0.1.0"

from .basis import (
    DEFAULT_RESOLUTIONS,
    BasisSet,
    Knot,
    Landuse,
    basis_matrix,
    bisquare,
    generate_knots,
    interaction_basis,
)
from .design import DesignSet, Hyperparams, SiteTable, build_design, variant_table
from .estimator import HeteroscedasticSpatialRegressor
from .exceptions import (
    DataError,
    DegenerateError,
    DegenerateTruncationError,
    MLGSpatialError,
    NumericalError,
    ParameterError,
)
from .gibbs import PosteriorDraws, SamplerConfig, chain_diagnostics, run_chain
from .mlg import (
    CMLGParams,
    MLGParams,
    mlg_log_density,
    sample_cmlg,
    sample_inverse_gamma,
    sample_mlg,
    sample_truncated_scalar_cmlg,
)
from .prediction import (
    LanduseRaster,
    PredictionGrid,
    aggregate_landuse,
    posterior_predictive,
    predict_grid,
)
from .scoring import (
    MetricsRow,
    coverage,
    cross_validate,
    empirical_semivariogram,
    energy_score,
    interval_score,
    kfold_split,
    mse,
    msev,
)
from .simulate import SyntheticSpec, simulate
from .spectra import SpectralBasis, SpectralPCA, fit_pca, knn_predict_coeffs, project

__all__ = [name for name in dir() if not name.startswith("_")]
