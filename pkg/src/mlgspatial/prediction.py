"""Posterior predictive draws, land-use rasters and gridded prediction maps."""
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ._rng import as_generator
from .basis import CATEGORY_NAMES, Landuse
from .design import SiteTable, build_design, uses_spectra
from .exceptions import DataError, ParameterError
from .spectra import knn_predict_coeffs


@dataclass
class PredictiveDraws:
    """Per-draw predictive quantities, each ``T x m``."""

    y: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray


def posterior_predictive(draws, designs, rng):
    """One predictive draw of ``y(s)`` per stored posterior draw.

    For draw ``t`` the site mean and variance are recomputed from that draw's
    coefficient blocks and ``y_t ~ N(mu_t(s), sigma2_t(s))``.
    """
    rng = as_generator(rng)
    mu = draws.mean_function(designs)
    sigma2 = np.exp(-draws.neg_log_variance(designs))
    y = mu + np.sqrt(sigma2) * rng.standard_normal(mu.shape)
    return PredictiveDraws(y, mu, sigma2)


def summarize_predictive(ydraws, level=0.95):
    """Mean, sd and equal-tailed interval of predictive draws per column."""
    ydraws = np.atleast_2d(ydraws)
    tail = 100 * (1 - level) / 2
    lo, hi = np.percentile(ydraws, [tail, 100 - tail], axis=0)
    T = ydraws.shape[0]
    return pd.DataFrame(
        {
            "mean": ydraws.mean(axis=0),
            "sd_log": ydraws.std(axis=0, ddof=1) if T > 1 else np.zeros(ydraws.shape[1]),
            "lo": lo,
            "hi": hi,
            "n_draws": T,
        }
    )


# ---------------------------------------------------------------------------
# land-use rasters


@dataclass
class LanduseRaster:
    """Categorical grid; row 0 is the northern edge.

    Codes follow :class:`~mlgspatial.basis.Landuse` (``-1`` = not applicable).
    """

    codes: np.ndarray
    xll: float
    yll: float
    cellsize: float
    nodata: int = -1

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=int)
        if self.codes.ndim != 2:
            raise ParameterError("raster codes must be 2-D")
        if not self.cellsize > 0:
            raise ParameterError("cellsize must be positive")

    @property
    def shape(self):
        return self.codes.shape

    def cell_centers(self):
        nrows, ncols = self.codes.shape
        lon = self.xll + (np.arange(ncols) + 0.5) * self.cellsize
        lat = self.yll + (nrows - np.arange(nrows) - 0.5) * self.cellsize
        LON, LAT = np.meshgrid(lon, lat)
        return LON, LAT

    def to_asc(self, fh):
        nrows, ncols = self.codes.shape
        fh.write(f"ncols {ncols}\n")
        fh.write(f"nrows {nrows}\n")
        fh.write(f"xllcorner {self.xll!r}\n")
        fh.write(f"yllcorner {self.yll!r}\n")
        fh.write(f"cellsize {self.cellsize!r}\n")
        fh.write(f"NODATA_value {self.nodata}\n")
        for row in self.codes:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")

    @classmethod
    def from_asc(cls, fh):
        header = {}
        for _ in range(6):
            key, value = fh.readline().split()
            header[key.lower()] = value
        try:
            ncols, nrows = int(header["ncols"]), int(header["nrows"])
            xll = float(header.get("xllcorner", header.get("xllcenter")))
            yll = float(header.get("yllcorner", header.get("yllcenter")))
            cellsize = float(header["cellsize"])
            nodata = int(float(header["nodata_value"]))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed raster header: missing {exc}") from None
        codes = np.loadtxt(fh, dtype=int, ndmin=2)
        if codes.shape != (nrows, ncols):
            raise DataError(f"raster body {codes.shape} does not match header {(nrows, ncols)}")
        codes = np.where(codes == nodata, Landuse.NA, codes)
        return cls(codes, xll, yll, cellsize, int(Landuse.NA))


def aggregate_landuse(fine, factor):
    """Modal aggregation of a categorical grid by ``factor x factor`` blocks.

    Not-applicable cells do not vote; an all-NA block stays NA. Ties go to
    the lowest category code (C < F < W < Oth). Edge blocks that are only
    partially covered vote with the cells they contain.
    """
    fine = np.asarray(fine, dtype=int)
    factor = int(factor)
    if factor < 1:
        raise ParameterError("factor must be >= 1")
    nrows, ncols = fine.shape
    out_r, out_c = -(-nrows // factor), -(-ncols // factor)
    pad = np.full((out_r * factor, out_c * factor), int(Landuse.NA))
    pad[:nrows, :ncols] = fine
    blocks = pad.reshape(out_r, factor, out_c, factor).transpose(0, 2, 1, 3)
    counts = np.stack([(blocks == c).sum(axis=(2, 3)) for c in range(4)], axis=-1)
    mode = np.argmax(counts, axis=-1)  # first maximum = lowest code
    return np.where(counts.sum(axis=-1) > 0, mode, int(Landuse.NA))


def aggregate_raster(raster, factor):
    return LanduseRaster(
        aggregate_landuse(raster.codes, factor),
        raster.xll,
        raster.yll + (raster.shape[0] - factor * -(-raster.shape[0] // factor)) * raster.cellsize,
        raster.cellsize * factor,
    )


@dataclass
class PredictionGrid:
    """Applicable prediction cells."""

    lon: np.ndarray
    lat: np.ndarray
    landuse: np.ndarray
    coeffs: np.ndarray = None
    resolution: float = None

    @classmethod
    def from_raster(cls, raster):
        LON, LAT = raster.cell_centers()
        keep = raster.codes != Landuse.NA
        return cls(LON[keep], LAT[keep], raster.codes[keep], None, raster.cellsize)

    def __len__(self):
        return np.asarray(self.lon).size


def fill_coeffs(grid, reference):
    """Nearest-reference spectral coefficients for grid cells lacking them."""
    ref = reference.coeffs
    if ref is None or len(reference) == 0:
        raise DataError("reference sites with spectral coefficients are required")
    targets = np.column_stack([grid.lon, grid.lat])
    filled = knn_predict_coeffs(targets, reference.locations, ref, k=1)
    if grid.coeffs is None:
        return filled
    coeffs = np.array(grid.coeffs, dtype=float)
    missing = ~np.all(np.isfinite(coeffs), axis=1)
    coeffs[missing] = filled[missing]
    return coeffs


def predict_grid(draws, grid, reference, basis, model, rng, center=None, level=0.95):
    """Posterior predictive summaries for every applicable grid cell.

    Spectral models take missing cell coefficients from the nearest reference
    site. Columns: lon, lat, landuse, mean, sd_log, lo95, hi95,
    exp_mean_log (``exp`` of the posterior mean log SOC), mean_exp
    (posterior mean of ``exp(y)``), n_draws.
    """
    keep = np.asarray(grid.landuse) != Landuse.NA
    lon, lat, lu = (np.asarray(a)[keep] for a in (grid.lon, grid.lat, grid.landuse))
    coeffs = None
    if uses_spectra(model):
        if reference is None:
            raise DataError("spectral models need reference sites to fill coefficients")
        sub = PredictionGrid(lon, lat, lu, None if grid.coeffs is None else np.asarray(grid.coeffs)[keep])
        coeffs = fill_coeffs(sub, reference)
    sites = SiteTable(np.arange(lon.size), lon, lat, lu, None, coeffs)
    designs = build_design(model, sites, basis, center=center)
    pred = posterior_predictive(draws, designs, rng)
    summary = summarize_predictive(pred.y, level)
    pct = int(round(100 * level))
    return pd.DataFrame(
        {
            "lon": lon,
            "lat": lat,
            "landuse": [CATEGORY_NAMES[c] for c in lu],
            "mean": summary["mean"],
            "sd_log": summary["sd_log"],
            f"lo{pct}": summary["lo"],
            f"hi{pct}": summary["hi"],
            "exp_mean_log": np.exp(summary["mean"]),
            "mean_exp": np.exp(pred.y).mean(axis=0),
            "n_draws": summary["n_draws"],
        }
    )
