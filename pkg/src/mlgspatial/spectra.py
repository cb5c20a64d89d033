"""PCA compression of reflectance spectra and nearest-site coefficient prediction."""
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DegenerateError, ParameterError


def wavelength_grid(w_min=350, w_max=2500):
    return np.arange(int(w_min), int(w_max) + 1)


@dataclass(frozen=True)
class Spectrum:
    wavelengths: np.ndarray
    reflectance: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.wavelengths)
        r = np.asarray(self.reflectance, dtype=float)
        if w.ndim != 1 or r.shape != w.shape:
            raise ParameterError("reflectance must match the wavelength grid")
        steps = np.diff(w)
        if w.size > 1 and (np.any(steps <= 0) or np.any(steps != steps[0])):
            raise ParameterError("wavelengths must be strictly increasing with a uniform step")
        if not np.all(np.isfinite(r)):
            raise ParameterError("reflectance contains missing values")
        object.__setattr__(self, "wavelengths", w)
        object.__setattr__(self, "reflectance", r)


@dataclass(frozen=True)
class SpectralBasis:
    """Mean spectrum plus ``K x W`` orthonormal loadings."""

    wavelengths: np.ndarray
    mean_spectrum: np.ndarray
    loadings: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def n_components(self):
        return self.loadings.shape[0]

    def reconstruct(self, coeffs):
        return self.mean_spectrum + np.asarray(coeffs) @ self.loadings


def fit_pca(spectra, n_components, wavelengths=None, min_explained=0.99):
    """Covariance PCA by SVD of the mean-centered spectra matrix.

    Each loading row is sign-normalized so its largest-magnitude entry is
    non-negative. A ``UserWarning`` is emitted when the retained components
    explain less than `min_explained` of the total variance.
    """
    X = np.asarray(spectra, dtype=float)
    n, W = X.shape
    K = int(n_components)
    if K < 1 or n <= K:
        raise ParameterError(f"need n > K >= 1, got n={n}, K={K}")
    if wavelengths is None:
        wavelengths = np.arange(W)
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    total = np.sum(s**2)
    if total <= 0 or s[0] <= 1e-12 * np.sqrt(n * W) * max(1.0, np.abs(mean).max()):
        raise DegenerateError("spectra have zero variance")
    loadings = Vt[:K].copy()
    pivot = np.argmax(np.abs(loadings), axis=1)
    signs = np.where(loadings[np.arange(K), pivot] < 0, -1.0, 1.0)
    loadings *= signs[:, None]
    ratio = s[:K] ** 2 / total
    if ratio.sum() < min_explained:
        warnings.warn(
            f"{K} components explain only {ratio.sum():.4f} of spectral variance",
            UserWarning,
        )
    return SpectralBasis(np.asarray(wavelengths), mean, loadings, ratio)


def project(spectrum, basis):
    """Scores of one spectrum (a :class:`Spectrum` or raw vector)."""
    if isinstance(spectrum, Spectrum):
        if not np.array_equal(spectrum.wavelengths, basis.wavelengths):
            raise ParameterError("spectrum wavelength grid does not match the basis")
        r = spectrum.reflectance
    else:
        r = np.asarray(spectrum, dtype=float)
        if r.shape[-1] != basis.mean_spectrum.size:
            raise ParameterError("spectrum length does not match the basis")
    return (r - basis.mean_spectrum) @ basis.loadings.T


def knn_predict_coeffs(targets, ref_locations, ref_coeffs, k=1, chunk=2048):
    """Mean coefficients of the `k` nearest reference sites.

    Distances are Euclidean in raw coordinates; ties go to the lower
    reference index. Accepts a single target ``(2,)`` or many ``(m, 2)``.
    """
    ref = np.atleast_2d(np.asarray(ref_locations, dtype=float))
    coeffs = np.asarray(ref_coeffs, dtype=float)
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None]
    if ref.shape[0] == 0:
        raise ParameterError("reference set is empty")
    if coeffs.shape[0] != ref.shape[0]:
        raise ParameterError("one coefficient row per reference site required")
    k = int(k)
    if not 1 <= k <= ref.shape[0]:
        raise ParameterError(f"k must be in [1, {ref.shape[0]}]")
    t = np.asarray(targets, dtype=float)
    single = t.ndim == 1
    t = np.atleast_2d(t)
    out = np.empty((t.shape[0], coeffs.shape[1]))
    for start in range(0, t.shape[0], chunk):
        block = t[start:start + chunk]
        d2 = (block[:, :1] - ref[:, 0]) ** 2 + (block[:, 1:2] - ref[:, 1]) ** 2
        if k == 1:
            idx = np.argmin(d2, axis=1)  # first minimum = lowest index
            out[start:start + chunk] = coeffs[idx]
        else:
            idx = np.argsort(d2, axis=1, kind="stable")[:, :k]
            out[start:start + chunk] = coeffs[idx].mean(axis=1)
    return out[0] if single else out


class SpectralPCA(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`fit_pca`.

    Parameters
    ----------
    n_components : int, default=9
    min_explained : float, default=0.99
        Threshold for the low-explained-variance warning.
    """

    def __init__(self, n_components=9, min_explained=0.99):
        self.n_components = n_components
        self.min_explained = min_explained

    def fit(self, X, y=None, wavelengths=None):
        X = check_array(X)
        self.basis_ = fit_pca(X, self.n_components, wavelengths, self.min_explained)
        self.components_ = self.basis_.loadings
        self.mean_ = self.basis_.mean_spectrum
        self.explained_variance_ratio_ = self.basis_.explained_variance_ratio
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        return project(check_array(X), self.basis_)

    def inverse_transform(self, X):
        check_is_fitted(self, "basis_")
        return self.basis_.reconstruct(check_array(X))


class NearestSiteRegressor(RegressorMixin, BaseEstimator):
    """K-nearest-site regression on ``(lon, lat)`` with index tie-breaking."""

    def __init__(self, n_neighbors=1):
        self.n_neighbors = n_neighbors

    def fit(self, X, y):
        X = check_array(X)
        y = np.asarray(y, dtype=float)
        if X.shape[0] == 0:
            raise ParameterError("reference set is empty")
        self.locations_ = X[:, :2]
        self.coeffs_ = y
        return self

    def predict(self, X):
        check_is_fitted(self, "locations_")
        X = check_array(X)
        out = knn_predict_coeffs(X[:, :2], self.locations_, self.coeffs_, k=self.n_neighbors)
        return out[:, 0] if self.coeffs_.ndim == 1 else out
