"""Scikit-learn style estimator wrapping design construction and the Gibbs sampler."""
import warnings

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._rng import substream
from .basis import DEFAULT_RESOLUTIONS, basis_matrix, generate_knots
from .design import Hyperparams, SiteTable, build_design, check_model, uses_spectra
from .exceptions import DataError
from .gibbs import SamplerConfig, run_chain
from .prediction import posterior_predictive, predict_grid, summarize_predictive


def check_sites_X(X, model=None, n_coeffs=None):
    """Validate an estimator input matrix ``[lon, lat, landuse, v1..vK]``."""
    X = check_array(X, ensure_min_samples=1, ensure_all_finite=False)
    if X.shape[1] < 3:
        raise DataError("X needs at least the columns lon, lat, landuse")
    if not np.all(np.isfinite(X[:, :3])):
        raise DataError("lon, lat and landuse must be finite")
    codes = X[:, 2]
    if np.any((codes != np.rint(codes)) | (codes < 0) | (codes > 3)):
        raise DataError("landuse column must hold codes 0-3 (C, F, W, Oth)")
    if model is not None and uses_spectra(model):
        if X.shape[1] == 3:
            raise DataError(f"model {model} needs spectral coefficient columns")
        if n_coeffs is not None and X.shape[1] - 3 != n_coeffs:
            raise DataError(f"expected {n_coeffs} coefficient columns, got {X.shape[1] - 3}")
    return X


def data_bbox(X, pad=1e-9):
    lon, lat = X[:, 0], X[:, 1]
    return (lon.min() - pad, lat.min() - pad, lon.max() + pad, lat.max() + pad)


class HeteroscedasticSpatialRegressor(RegressorMixin, BaseEstimator):
    """Bayesian heteroscedastic spatial regression (Models 1-6).

    Input rows are sites with columns ``lon, lat, landuse`` followed by any
    spectral coefficients (required for models 5 and 6). The target is
    log SOC.

    Parameters
    ----------
    model : int, default=5
        Model variant 1-6.
    basis : BasisSet, optional
        Fixed knot set. When None, knots are generated over `bbox` (or the
        training-data extent) at `resolutions`.
    resolutions : sequence of (int, int)
    bbox : (lon_min, lat_min, lon_max, lat_max), optional
    center_coords : bool, default=False
        Center lon/lat covariates on the training mean.
    hyperparams : Hyperparams, optional
    n_iter, burn_in, thin : int
    cmlg_update : {"exact", "projection"}
    joint_blocks : bool, default=True
        Draw (beta1, eta1) and (beta2, eta2) as joint blocks.
    random_state : int
    """

    def __init__(
        self,
        model=5,
        basis=None,
        resolutions=DEFAULT_RESOLUTIONS,
        bbox=None,
        center_coords=False,
        hyperparams=None,
        n_iter=5000,
        burn_in=1000,
        thin=1,
        cmlg_update="exact",
        joint_blocks=True,
        random_state=0,
    ):
        self.model = model
        self.basis = basis
        self.resolutions = resolutions
        self.bbox = bbox
        self.center_coords = center_coords
        self.hyperparams = hyperparams
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.cmlg_update = cmlg_update
        self.joint_blocks = joint_blocks
        self.random_state = random_state

    def _sites(self, X, y=None):
        return SiteTable.from_X(X, y)

    def fit(self, X, y):
        model = check_model(self.model)
        if not np.all(np.isfinite(np.asarray(y, dtype=float))):
            raise DataError("y must be finite at every training site")
        X, y = check_X_y(X, y, ensure_all_finite=False, y_numeric=True)
        X = check_sites_X(X, model)
        self.hyperparams_ = self.hyperparams or Hyperparams()
        if self.basis is not None:
            self.basis_ = self.basis
        else:
            self.basis_ = generate_knots(self.bbox or data_bbox(X), self.resolutions)
        self.center_ = tuple(X[:, :2].mean(axis=0)) if self.center_coords else None
        self.n_coeffs_ = X.shape[1] - 3 if uses_spectra(model) else 0
        sites = self._sites(X if uses_spectra(model) else X[:, :3], y)
        Phi = basis_matrix(sites.locations, self.basis_)
        empty = int(np.sum(~Phi.any(axis=1)))
        if empty:
            warnings.warn(f"{empty} training site(s) lie outside every basis kernel", RuntimeWarning)
        self.designs_ = build_design(model, sites, self.basis_, center=self.center_, require_y=True)
        self.config_ = SamplerConfig(
            n_iter=self.n_iter,
            burn_in=self.burn_in,
            thin=self.thin,
            seed=self.random_state,
            cmlg_update=self.cmlg_update,
            joint_blocks=self.joint_blocks,
        )
        self.draws_ = run_chain(y, self.designs_, self.hyperparams_, self.config_)
        self.n_features_in_ = X.shape[1]
        return self

    def design(self, X):
        """Design matrices for new sites."""
        check_is_fitted(self, "draws_")
        model = check_model(self.model)
        X = check_sites_X(X, model, self.n_coeffs_ or None)
        sites = self._sites(X if uses_spectra(model) else X[:, :3])
        return build_design(model, sites, self.basis_, center=self.center_)

    def predict(self, X):
        """Posterior mean of ``mu(s)``."""
        return self.draws_.mean_function(self.design(X)).mean(axis=0)

    def predict_variance(self, X):
        """Posterior mean of ``sigma^2(s)``."""
        return np.exp(-self.draws_.neg_log_variance(self.design(X))).mean(axis=0)

    def sample_predictive(self, X, random_state=None):
        """Predictive draws (``T x m``) plus their mean and variance components."""
        seed = self.random_state if random_state is None else random_state
        rng = substream(seed, "prediction-noise")
        return posterior_predictive(self.draws_, self.design(X), rng)

    def predict_interval(self, X, level=0.95, random_state=None):
        return summarize_predictive(self.sample_predictive(X, random_state).y, level)

    def predict_grid(self, grid, reference=None, random_state=None, level=0.95):
        """Summaries over a :class:`~mlgspatial.prediction.PredictionGrid`."""
        check_is_fitted(self, "draws_")
        seed = self.random_state if random_state is None else random_state
        return predict_grid(
            self.draws_,
            grid,
            reference,
            self.basis_,
            self.model,
            substream(seed, "prediction-noise"),
            center=self.center_,
            level=level,
        )
