"""Synthetic data from the heteroscedastic spatial model's generative process."""
from dataclasses import asdict, dataclass, field

import numpy as np

from ._rng import substream
from .basis import Landuse, generate_knots
from .design import SiteTable, build_design, check_model, uses_spectra
from .exceptions import ParameterError
from .prediction import LanduseRaster
from .spectra import wavelength_grid


@dataclass(frozen=True)
class SyntheticSpec:
    """Settings for :func:`simulate`.

    Locations are uniform in `bbox`. Land use comes from one smooth random
    surface (plus white noise of sd `landuse_noise`) cut at the quantiles of
    `proportions`. Spectral coefficients are a smooth field of length scale
    `coeff_lengthscale` plus noise of sd `coeff_noise`; `n_reference`
    additional sites get spectra but no response.

    The response follows variant `model` on the knot set `resolutions`:
    fixed effects are set from the intercept/slope fields and the random
    effects are drawn as ``N(0, sigma_eta^2)``.
    """

    n_sites: int = 500
    n_reference: int = 0
    bbox: tuple = (0.0, 0.0, 10.0, 10.0)
    proportions: tuple = (0.4, 0.3, 0.1, 0.2)
    landuse_lengthscale: float = 2.0
    landuse_noise: float = 0.3
    model: int = 5
    resolutions: tuple = ((2, 2), (4, 4))
    n_components: int = 3
    w_min: int = 350
    w_max: int = 2500
    w_step: int = 10
    spectral_noise: float = 0.0
    coeff_lengthscale: float = 0.4
    coeff_noise: float = 0.1
    landuse_intercepts: tuple = (1.0, 1.6, 2.4, 1.3)
    coord_slopes: tuple = (0.02, -0.03)
    spectral_slopes: tuple = (0.4, -0.3, 0.2)
    neg_log_var_intercepts: tuple = (1.6, 1.2, 0.8, 1.4)
    neg_log_var_coord_slopes: tuple = (0.0, 0.0)
    sigma_eta1: float = 0.3
    sigma_eta2: float = 0.3
    raster_cellsize: float = 0.5
    raster_na_fraction: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if int(self.n_sites) < 1 or int(self.n_reference) < 0:
            raise ParameterError("n_sites must be positive and n_reference non-negative")
        p = np.asarray(self.proportions, dtype=float)
        if p.shape != (4,) or np.any(p < 0) or not np.isclose(p.sum(), 1.0):
            raise ParameterError("proportions must be four non-negative values summing to 1")
        check_model(self.model)
        if uses_spectra(self.model) and len(self.spectral_slopes) != self.n_components:
            raise ParameterError("one spectral slope per component required")
        if self.n_components < 1 or self.w_step < 1 or self.w_max <= self.w_min:
            raise ParameterError("invalid spectral construction settings")
        if not 0 <= self.raster_na_fraction < 1:
            raise ParameterError("raster_na_fraction must lie in [0, 1)")

    def to_dict(self):
        return {k: (list(map(list, v)) if k == "resolutions" else v) for k, v in asdict(self).items()}


@dataclass
class SyntheticData:
    sites: SiteTable
    wavelengths: np.ndarray
    spectra: np.ndarray
    truth: dict
    basis: object
    raster: LanduseRaster
    designs: object = field(repr=False, default=None)


def _fourier_field(rng, lengthscale, n_features=200):
    """A unit-variance smooth stationary random field (random Fourier features)."""
    omega = rng.standard_normal((n_features, 2)) / lengthscale
    phase = rng.uniform(0, 2 * np.pi, n_features)
    scale = np.sqrt(2.0 / n_features)

    def evaluate(lon, lat):
        pts = np.column_stack([np.ravel(lon), np.ravel(lat)])
        return (scale * np.cos(pts @ omega.T + phase).sum(axis=1)).reshape(np.shape(lon))

    return evaluate


def _cut(values, proportions):
    edges = np.quantile(values, np.cumsum(proportions)[:-1])
    return np.searchsorted(edges, values, side="right")


def _spectral_shapes(wavelengths, K, rng):
    """Smooth mean spectrum and ``K`` orthonormal smooth loading curves."""
    u = (wavelengths - wavelengths[0]) / (wavelengths[-1] - wavelengths[0])
    mean = 0.15 + 0.35 / (1 + np.exp(-8 * (u - 0.35))) - 0.05 * np.exp(-((u - 0.7) / 0.03) ** 2)
    centers = rng.uniform(0.05, 0.95, K)
    bumps = np.exp(-((u[:, None] - centers) / 0.15) ** 2) + 0.1 * np.cos(np.pi * (np.arange(K) + 1) * u[:, None])
    q, _ = np.linalg.qr(bumps)
    return mean, q.T


def simulate(spec):
    """Draw a synthetic data set.

    Returns a :class:`SyntheticData` whose ``truth`` dict holds the true
    coefficient blocks (with labels), ``mu`` and ``neg_log_var`` at every
    site, and the spectral loadings.
    """
    seed = spec.seed
    n = int(spec.n_sites)
    m = n + int(spec.n_reference)
    lon_min, lat_min, lon_max, lat_max = spec.bbox

    rng = substream(seed, "simulate", 0)
    lon = rng.uniform(lon_min, lon_max, m)
    lat = rng.uniform(lat_min, lat_max, m)

    surface = _fourier_field(substream(seed, "simulate", 1), spec.landuse_lengthscale)
    lu_rng = substream(seed, "simulate", 2)
    score = surface(lon, lat) + spec.landuse_noise * lu_rng.standard_normal(m)
    landuse = _cut(score, spec.proportions)

    K = int(spec.n_components)
    coeff_rng = substream(seed, "simulate", 3)
    fields_ = [_fourier_field(coeff_rng, spec.coeff_lengthscale) for _ in range(K)]
    coeffs = np.column_stack([f(lon, lat) for f in fields_])
    coeffs += spec.coeff_noise * coeff_rng.standard_normal((m, K))

    wavelengths = wavelength_grid(spec.w_min, spec.w_max)[:: int(spec.w_step)]
    spec_rng = substream(seed, "simulate", 4)
    mean_curve, loadings = _spectral_shapes(wavelengths.astype(float), K, spec_rng)
    spectra = mean_curve + 0.02 * coeffs @ loadings
    if spec.spectral_noise > 0:
        spectra = spectra + spec.spectral_noise * spec_rng.standard_normal(spectra.shape)

    basis = generate_knots(spec.bbox, spec.resolutions)
    all_sites = SiteTable(np.arange(m), lon, lat, landuse, None, coeffs)
    designs = build_design(spec.model, all_sites, basis)
    d = designs.dims

    beta1 = list(spec.landuse_intercepts) + list(spec.coord_slopes)
    if uses_spectra(spec.model):
        beta1 += list(spec.spectral_slopes)
    if spec.model == 1:
        beta2 = [float(np.dot(spec.proportions, spec.neg_log_var_intercepts))]
    else:
        beta2 = list(spec.neg_log_var_intercepts) + list(spec.neg_log_var_coord_slopes)
    beta1, beta2 = np.array(beta1, dtype=float), np.array(beta2, dtype=float)
    eff_rng = substream(seed, "simulate", 5)
    eta1 = spec.sigma_eta1 * eff_rng.standard_normal(d["r1"])
    eta2 = spec.sigma_eta2 * eff_rng.standard_normal(d["r2"])

    mu = designs.X1 @ beta1 + designs.Psi1 @ eta1
    nlv = designs.X2 @ beta2 + designs.Psi2 @ eta2
    y = mu + np.exp(-0.5 * nlv) * substream(seed, "simulate", 6).standard_normal(m)
    y[n:] = np.nan

    sites = SiteTable(np.arange(m), lon, lat, landuse, y, coeffs)
    truth = {
        "model": int(spec.model),
        "beta1": beta1,
        "eta1": eta1,
        "beta2": beta2,
        "eta2": eta2,
        "sigma2_eta1": spec.sigma_eta1**2,
        "sigma2_eta2": spec.sigma_eta2**2,
        "labels": designs.labels,
        "mu": mu,
        "neg_log_var": nlv,
        "spectral_loadings": loadings,
        "spectral_mean": mean_curve,
    }
    raster = _landuse_raster(spec, surface, substream(seed, "simulate", 7))
    return SyntheticData(sites, wavelengths, spectra, truth, basis, raster, designs)


def _landuse_raster(spec, surface, rng):
    lon_min, lat_min, lon_max, lat_max = spec.bbox
    cs = float(spec.raster_cellsize)
    ncols = max(1, int(np.ceil((lon_max - lon_min) / cs)))
    nrows = max(1, int(np.ceil((lat_max - lat_min) / cs)))
    tmp = LanduseRaster(np.zeros((nrows, ncols), dtype=int), lon_min, lat_min, cs)
    LON, LAT = tmp.cell_centers()
    score = surface(LON, LAT) + spec.landuse_noise * rng.standard_normal(LON.shape)
    codes = _cut(score.ravel(), spec.proportions).reshape(LON.shape)
    codes[rng.random(LON.shape) < spec.raster_na_fraction] = int(Landuse.NA)
    return LanduseRaster(codes, lon_min, lat_min, cs)


def truth_record(data):
    """JSON-ready truth dict (lists instead of arrays)."""
    out = {}
    for key, value in data.truth.items():
        out[key] = value.tolist() if isinstance(value, np.ndarray) else value
    return out
