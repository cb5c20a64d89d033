"""Predictive scores, K-fold cross-validation and the empirical semivariogram."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist, pdist

from ._rng import substream
from .basis import CATEGORY_NAMES
from .design import check_model, uses_spectra
from .exceptions import ParameterError
from .gibbs import with_seed
from .spectra import knn_predict_coeffs


def _pair(y, yhat):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise ParameterError(f"length mismatch: {y.size} vs {yhat.size}")
    if y.size == 0:
        raise ParameterError("at least one observation is required")
    return y, yhat


def _bounds(y, lo, hi):
    y, lo = _pair(y, lo)
    _, hi = _pair(y, hi)
    if np.any(lo > hi):
        raise ParameterError("interval lower bound exceeds upper bound")
    return y, lo, hi


def mse(y, yhat):
    y, yhat = _pair(y, yhat)
    return float(np.mean((y - yhat) ** 2))


def msev(y, yhat, tau2hat):
    """Mean squared difference between squared residuals and predicted variances."""
    y, yhat = _pair(y, yhat)
    _, tau2hat = _pair(y, tau2hat)
    return float(np.mean(((y - yhat) ** 2 - tau2hat) ** 2))


def coverage(y, lo, hi):
    """Fraction of observations inside the closed interval ``[lo, hi]``."""
    y, lo, hi = _bounds(y, lo, hi)
    return float(np.mean((lo <= y) & (y <= hi)))


def interval_score(y, lo, hi, level_alpha=0.05):
    """Average interval score of central ``(1 - level_alpha)`` intervals."""
    y, lo, hi = _bounds(y, lo, hi)
    penalty = 2.0 / level_alpha
    score = (hi - lo) + penalty * (lo - y) * (y < lo) + penalty * (y - hi) * (y > hi)
    return float(np.mean(score))


def energy_score(y, draws):
    """Monte Carlo energy score of ``T x m`` predictive draws for the m-vector `y`.

    Uses the full double sum ``(1/T) sum ||x_t - y|| - 1/(2T^2) sum sum ||x_t - x_t'||``.
    """
    y = np.asarray(y, dtype=float).ravel()
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    T, m = draws.shape
    if T < 2:
        raise ParameterError("energy score needs at least two draws")
    if m != y.size:
        raise ParameterError(f"draws have {m} columns, y has {y.size}")
    first = cdist(draws, y[None, :]).mean()
    second = 2.0 * pdist(draws).sum() / (2.0 * T * T)
    return float(first - second)


@dataclass
class MetricsRow:
    model: int
    mse: float
    msev: float
    cr: float
    is_avg: float
    es: float
    coeff_mode: str = "known"
    n: int = 0

    def as_table_row(self):
        return {
            "Model": self.model,
            "MSE": self.mse,
            "MSEV": self.msev,
            "CR": self.cr,
            "IS": self.is_avg,
            "ES": self.es,
        }


def metrics_table(rows):
    """Metrics laid out as ``Model, MSE, MSEV, CR, IS, ES``."""
    return pd.DataFrame([r.as_table_row() for r in rows])


def kfold_split(n, k=5, seed=0):
    """Balanced random fold labels ``0..k-1`` for `n` items."""
    n, k = int(n), int(k)
    if k < 2 or n < k:
        raise ParameterError(f"need n >= k >= 2, got n={n}, k={k}")
    rng = substream(seed, "cv-split")
    folds = np.empty(n, dtype=int)
    folds[rng.permutation(n)] = np.arange(n) % k
    return folds


def score_fold(y, pred, level=0.95):
    """Per-site predictive summaries used for pooling plus the fold energy score."""
    tail = 100 * (1 - level) / 2
    lo, hi = np.percentile(pred.y, [tail, 100 - tail], axis=0)
    return {
        "y": np.asarray(y, dtype=float),
        "yhat": pred.y.mean(axis=0),
        "tau2": pred.sigma2.mean(axis=0),
        "lo": lo,
        "hi": hi,
        "es": energy_score(y, pred.y),
    }


def pool_scores(model, parts, coeff_mode="known", level_alpha=0.05):
    cat = {k: np.concatenate([p[k] for p in parts]) for k in ("y", "yhat", "tau2", "lo", "hi")}
    return MetricsRow(
        model=model,
        mse=mse(cat["y"], cat["yhat"]),
        msev=msev(cat["y"], cat["yhat"], cat["tau2"]),
        cr=coverage(cat["y"], cat["lo"], cat["hi"]),
        is_avg=interval_score(cat["y"], cat["lo"], cat["hi"], level_alpha),
        es=float(np.mean([p["es"] for p in parts])),
        coeff_mode=coeff_mode,
        n=int(cat["y"].size),
    )


def cross_validate(
    model,
    sites,
    basis,
    hyper,
    sampler_config,
    k=5,
    seed=0,
    coeff_mode="known",
    threads=1,
    center_coords=False,
):
    """K-fold cross-validation of one model variant.

    Only sites with a response are scored. With ``coeff_mode="knn"`` the
    held-out sites' spectral coefficients are replaced by those of the nearest
    site outside the fold (any site with coefficients, with or without a
    response). `coeff_mode` may be a tuple of modes, in which case each fold
    is fit once and a dict of :class:`MetricsRow` is returned.
    """
    from .estimator import HeteroscedasticSpatialRegressor

    model = check_model(model)
    modes = (coeff_mode,) if isinstance(coeff_mode, str) else tuple(coeff_mode)
    for mode in modes:
        if mode not in ("known", "knn"):
            raise ParameterError(f"unknown coeff_mode {mode!r}")
    lab = np.flatnonzero(sites.has_y)
    folds = kfold_split(lab.size, k, seed)
    spectral = uses_spectra(model)
    X_all = sites.to_X() if spectral else sites.to_X()[:, :3]

    def run_fold(i):
        test = lab[folds == i]
        train = lab[folds != i]
        cfg = with_seed(sampler_config, int(substream(seed, "cv-fold", i).integers(2**31)))
        est = HeteroscedasticSpatialRegressor(
            model=model,
            basis=basis,
            center_coords=center_coords,
            hyperparams=hyper,
            n_iter=cfg.n_iter,
            burn_in=cfg.burn_in,
            thin=cfg.thin,
            cmlg_update=cfg.cmlg_update,
            joint_blocks=cfg.joint_blocks,
            random_state=cfg.seed,
        ).fit(X_all[train], sites.y[train])
        out = {}
        for mode in modes:
            X_test = X_all[test].copy()
            if spectral and mode == "knn":
                mask = np.all(np.isfinite(sites.coeffs), axis=1)
                mask[test] = False
                X_test[:, 3:] = knn_predict_coeffs(
                    X_test[:, :2], sites.locations[mask], sites.coeffs[mask], k=1
                )
            pred = est.sample_predictive(X_test, random_state=int(cfg.seed))
            out[mode] = score_fold(sites.y[test], pred)
        return out

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        results = list(pool.map(run_fold, range(k)))
    rows = {mode: pool_scores(model, [r[mode] for r in results], mode) for mode in modes}
    return rows[modes[0]] if isinstance(coeff_mode, str) else rows


def empirical_semivariogram(locations, y, n_bins=15, max_dist=None, landuse=None):
    """Classical (Matheron) semivariogram on equal-width distance bins.

    Parameters
    ----------
    locations : (n, 2) array
    y : (n,) array
    n_bins : int
    max_dist : float, optional
        Upper edge of the last bin; defaults to half the largest pairwise
        distance (per category when grouping).
    landuse : (n,) int array, optional
        When given, one semivariogram per land-use category.

    Returns
    -------
    DataFrame with columns category, bin, bin_center, semivariance, n_pairs.
    Empty bins have ``n_pairs = 0`` and NaN semivariance.
    """
    locations = np.asarray(locations, dtype=float)
    y = np.asarray(y, dtype=float)
    if locations.shape != (y.size, 2):
        raise ParameterError("locations must be (n, 2) matching y")
    if landuse is None:
        groups = [("all", np.arange(y.size))]
    else:
        landuse = np.asarray(landuse, dtype=int)
        groups = [
            (CATEGORY_NAMES[c], np.flatnonzero(landuse == c))
            for c in range(4)
            if np.any(landuse == c)
        ]
    frames = []
    for name, idx in groups:
        if idx.size < 2:
            raise ParameterError(f"category {name} has fewer than two sites")
        d = pdist(locations[idx])
        g = 0.5 * pdist(y[idx, None], "sqeuclidean")
        top = max_dist if max_dist is not None else d.max() / 2.0
        if not top > 0:
            raise ParameterError("maximum distance must be positive")
        edges = np.linspace(0.0, top, int(n_bins) + 1)
        which = np.digitize(d, edges[1:-1])
        inside = d <= top
        counts = np.bincount(which[inside], minlength=n_bins)[:n_bins]
        sums = np.bincount(which[inside], weights=g[inside], minlength=n_bins)[:n_bins]
        with np.errstate(invalid="ignore", divide="ignore"):
            gamma = np.where(counts > 0, sums / counts, np.nan)
        frames.append(
            pd.DataFrame(
                {
                    "category": name,
                    "bin": np.arange(n_bins),
                    "bin_center": 0.5 * (edges[:-1] + edges[1:]),
                    "semivariance": gamma,
                    "n_pairs": counts,
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


__all__ = [
    "MetricsRow",
    "coverage",
    "cross_validate",
    "empirical_semivariogram",
    "energy_score",
    "interval_score",
    "kfold_split",
    "metrics_table",
    "mse",
    "msev",
]
