"""Site tables, prior hyperparameters and design matrices for Models 1-6."""
from dataclasses import dataclass, field, fields

import numpy as np

from .basis import CATEGORY_NAMES, Landuse, basis_matrix, interaction_basis, parse_landuse
from .exceptions import DataError, ParameterError

MODEL_IDS = (1, 2, 3, 4, 5, 6)

# (mean random effects, variance random effects, spectral covariates)
_VARIANTS = {
    1: ("none", "none", False),
    2: ("basis", "basis", False),
    3: ("interaction", "basis", False),
    4: ("interaction", "interaction", False),
    5: ("interaction", "basis", True),
    6: ("interaction", "interaction", True),
}


def check_model(model):
    try:
        m = int(model)
    except (TypeError, ValueError):
        raise ParameterError(f"model must be an integer 1-6, got {model!r}") from None
    if m not in MODEL_IDS:
        raise ParameterError(f"model must be in 1-6, got {model!r}")
    return m


def uses_spectra(model):
    return _VARIANTS[check_model(model)][2]


def variant_table():
    """Column structure of each model variant."""
    describe = {
        "none": "none",
        "basis": "Phi",
        "interaction": "[Phi | Phi x landuse]",
    }
    rows = []
    for m in MODEL_IDS:
        mean_re, var_re, spectral = _VARIANTS[m]
        rows.append(
            {
                "model": m,
                "X1": "landuse(4) + lon + lat" + (" + spectral(K)" if spectral else ""),
                "Psi1": describe[mean_re],
                "X2": "intercept" if m == 1 else "landuse(4) + lon + lat",
                "Psi2": describe[var_re],
                "heteroscedastic": m != 1,
            }
        )
    return rows


@dataclass
class SiteTable:
    """Observation or prediction sites.

    ``landuse`` holds integer codes (0=C, 1=F, 2=W, 3=Oth); ``y`` is natural
    log SOC with NaN for sites lacking a lab value; ``coeffs`` is ``n x K``
    or None.
    """

    ids: np.ndarray
    lon: np.ndarray
    lat: np.ndarray
    landuse: np.ndarray
    y: np.ndarray = None
    coeffs: np.ndarray = None

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=int)
        n = self.ids.size
        self.lon = np.asarray(self.lon, dtype=float).reshape(n)
        self.lat = np.asarray(self.lat, dtype=float).reshape(n)
        self.landuse = parse_landuse(self.landuse) if n else np.zeros(0, dtype=int)
        if self.y is None:
            self.y = np.full(n, np.nan)
        self.y = np.asarray(self.y, dtype=float).reshape(n)
        if self.coeffs is not None:
            self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(n, -1)
        if np.unique(self.ids).size != n:
            raise DataError("site ids must be unique")
        if np.any(self.landuse == Landuse.NA):
            raise DataError("observation sites must carry an applicable land-use category")

    def __len__(self):
        return self.ids.size

    @property
    def locations(self):
        return np.column_stack([self.lon, self.lat])

    @property
    def has_y(self):
        return np.isfinite(self.y)

    def subset(self, index):
        index = np.asarray(index)
        return SiteTable(
            self.ids[index],
            self.lon[index],
            self.lat[index],
            self.landuse[index],
            self.y[index],
            None if self.coeffs is None else self.coeffs[index],
        )

    def with_coeffs(self, coeffs):
        return SiteTable(self.ids, self.lon, self.lat, self.landuse, self.y, coeffs)

    def to_X(self):
        """Estimator input: columns ``lon, lat, landuse, v1..vK``."""
        cols = [self.lon, self.lat, self.landuse.astype(float)]
        if self.coeffs is not None:
            cols.extend(self.coeffs.T)
        return np.column_stack(cols)

    @classmethod
    def from_X(cls, X, y=None, ids=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        coeffs = X[:, 3:] if X.shape[1] > 3 else None
        return cls(
            np.arange(n) if ids is None else ids,
            X[:, 0],
            X[:, 1],
            np.rint(X[:, 2]).astype(int),
            y,
            coeffs,
        )


@dataclass(frozen=True)
class Hyperparams:
    """Prior hyperparameters.

    ``sigma2_beta1`` and ``sigma2_beta2`` are prior variances; the MLG prior on
    the variance coefficients uses scale ``sqrt(alpha_mlg * sigma2_beta2)`` so
    that it approaches ``N(0, sigma2_beta2)``. ``w``/``p`` are the shape/rate
    of the truncated log-gamma prior on ``1/sigma_eta2``.
    """

    alpha_mlg: float = 1000.0
    sigma2_beta1: float = 1000.0
    sigma2_beta2: float = 1000.0
    a: float = 0.5
    b: float = 0.5
    w: float = 1000.0
    p: float = 1000.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (np.isfinite(v) and v > 0):
                raise ParameterError(f"hyperparameter {f.name} must be positive, got {v}")


@dataclass
class DesignSet:
    X1: np.ndarray
    Psi1: np.ndarray
    X2: np.ndarray
    Psi2: np.ndarray
    labels: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.X1.shape[0]

    @property
    def dims(self):
        return {
            "p1": self.X1.shape[1],
            "r1": self.Psi1.shape[1],
            "p2": self.X2.shape[1],
            "r2": self.Psi2.shape[1],
        }


def _indicators(landuse):
    return (landuse[:, None] == np.arange(4)).astype(float)


def _random_block(kind, Phi, landuse, prefix):
    J = Phi.shape[1]
    if kind == "none":
        return np.zeros((Phi.shape[0], 0)), []
    labels = [f"{prefix}_phi{j + 1}" for j in range(J)]
    if kind == "basis":
        return Phi, labels
    for name in CATEGORY_NAMES:
        labels += [f"{prefix}_{name}_phi{j + 1}" for j in range(J)]
    return np.hstack([Phi, interaction_basis(Phi, landuse)]), labels


def build_design(model, sites, basis, center=None, require_y=False):
    """Assemble ``X1, Psi1, X2, Psi2`` for a model variant.

    Parameters
    ----------
    model : int
        Variant 1-6.
    sites : SiteTable
    basis : BasisSet
    center : (float, float), optional
        Subtracted from ``(lon, lat)`` before use as covariates.
    require_y : bool
        Raise :class:`DataError` if any site lacks a response.
    """
    model = check_model(model)
    mean_re, var_re, spectral = _VARIANTS[model]
    n = len(sites)
    if require_y and not np.all(sites.has_y):
        raise DataError("fitting requires a response y at every site")
    if spectral and sites.coeffs is None:
        raise DataError(f"model {model} requires spectral coefficients")
    if spectral and not np.all(np.isfinite(sites.coeffs)):
        raise DataError(f"model {model} requires spectral coefficients at every site")
    lon, lat = sites.lon, sites.lat
    if center is not None:
        lon, lat = lon - center[0], lat - center[1]
    L = _indicators(sites.landuse)

    X1 = np.column_stack([L, lon, lat])
    x1_labels = [f"gamma_{c}" for c in CATEGORY_NAMES] + ["lon", "lat"]
    if spectral:
        X1 = np.column_stack([X1, sites.coeffs])
        x1_labels += [f"chi{k + 1}" for k in range(sites.coeffs.shape[1])]
    Phi = basis_matrix(sites.locations, basis) if n else np.zeros((0, len(basis)))
    Psi1, psi1_labels = _random_block(mean_re, Phi, sites.landuse, "eta1")
    if model == 1:
        X2 = np.ones((n, 1))
        x2_labels = ["intercept"]
    else:
        X2 = np.column_stack([L, lon, lat])
        x2_labels = [f"zeta_{c}" for c in CATEGORY_NAMES] + ["lon", "lat"]
    Psi2, psi2_labels = _random_block(var_re, Phi, sites.landuse, "eta2")
    return DesignSet(
        X1,
        Psi1,
        X2,
        Psi2,
        {"beta1": x1_labels, "eta1": psi1_labels, "beta2": x2_labels, "eta2": psi2_labels},
    )
