"""Multivariate log-gamma (MLG) distributions and related samplers.

A vector ``Y ~ MLG(mu, V, alpha, kappa)`` is generated as ``V @ log(g) + mu``
with independent ``g_i ~ Gamma(shape=alpha_i, rate=kappa_i)``. The
conditional form (cMLG) has unnormalized density

    exp{ alpha' H x - kappa' exp(H x) }

for an ``n x r`` matrix ``H`` of full column rank. Any centering offset is
absorbed into ``kappa`` by the caller (``kappa <- kappa * exp(-mu_star)``).

Two cMLG samplers are provided:

* :func:`sample_cmlg` draws ``Y ~ MLG(0, I, alpha, kappa)`` and returns the
  least-squares projection ``(H'H)^{-1} H'Y``. This is exact when ``H`` is
  square; for ``n > r`` it generally is *not* a draw from the cMLG density.
* :func:`cmlg_mh_step` is a Metropolis-Hastings update that leaves the exact
  cMLG density invariant, using a Laplace (mode + Hessian) Gaussian
  independence proposal.
"""
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import digamma, gammaln, polygamma

from ._rng import as_generator
from .exceptions import DegenerateTruncationError, NumericalError, ParameterError

EXP_CLAMP = 700.0


def _as_vector(x, name):
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ParameterError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


def safe_exp(z):
    """``exp(z)`` with arguments clamped to +/-700; warns on saturation."""
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z) > EXP_CLAMP):
        warnings.warn("exponent argument clamped at +/-700", RuntimeWarning, stacklevel=2)
        z = np.clip(z, -EXP_CLAMP, EXP_CLAMP)
    return np.exp(z)


@dataclass(frozen=True)
class MLGParams:
    """Parameters of ``MLG(mu, V, alpha, kappa)``."""

    mu: np.ndarray
    V: np.ndarray
    alpha: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        mu = _as_vector(self.mu, "mu")
        alpha = _as_vector(self.alpha, "alpha")
        kappa = _as_vector(self.kappa, "kappa")
        V = np.atleast_2d(np.asarray(self.V, dtype=float))
        n = mu.size
        if alpha.size != n or kappa.size != n or V.shape != (n, n):
            raise ParameterError(
                f"dimension mismatch: |mu|={n}, |alpha|={alpha.size}, "
                f"|kappa|={kappa.size}, V={V.shape}"
            )
        if not (np.all(alpha > 0) and np.all(kappa > 0)):
            raise ParameterError("alpha and kappa must be strictly positive")
        cond = np.linalg.cond(V)
        if not np.isfinite(cond) or cond > 1e14:
            raise ParameterError("V is not invertible")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "V", V)

    @property
    def n(self):
        return self.mu.size

    @classmethod
    def normal_limit(cls, c, V, alpha):
        """``MLG(c, alpha^{1/2} V, alpha 1, alpha 1)``, close to ``N(c, VV')`` for large alpha."""
        c = _as_vector(c, "c")
        V = np.atleast_2d(np.asarray(V, dtype=float))
        ones = np.full(c.size, float(alpha))
        return cls(c, np.sqrt(alpha) * V, ones, ones)

    def mean(self):
        return self.mu + self.V @ (digamma(self.alpha) - np.log(self.kappa))

    def cov(self):
        return (self.V * polygamma(1, self.alpha)) @ self.V.T


@dataclass(frozen=True)
class CMLGParams:
    """Parameters ``(H, alpha, kappa)`` of the conditional MLG.

    Rows with ``kappa_i == 0`` carry no rate information; samplers drop them.
    """

    H: np.ndarray
    alpha: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        if H.ndim == 1:
            H = H[:, None]
        alpha = _as_vector(self.alpha, "alpha")
        kappa = _as_vector(self.kappa, "kappa")
        n, r = H.shape
        if alpha.size != n or kappa.size != n:
            raise ParameterError(
                f"dimension mismatch: H={H.shape}, |alpha|={alpha.size}, |kappa|={kappa.size}"
            )
        if r > n:
            raise ParameterError(f"H must have r <= n columns, got {H.shape}")
        if not np.all(alpha > 0):
            raise ParameterError("alpha must be strictly positive")
        if not np.all(kappa >= 0) or not np.any(kappa > 0):
            raise ParameterError("kappa must be non-negative with at least one positive entry")
        _check_full_rank(H[kappa > 0])
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "kappa", kappa)

    @property
    def r(self):
        return self.H.shape[1]


@dataclass(frozen=True)
class InverseGammaParams:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ParameterError("inverse-gamma shape and scale must be positive")


def _check_full_rank(H):
    if H.shape[0] < H.shape[1]:
        raise ParameterError("H is rank deficient")
    try:
        linalg.cholesky(H.T @ H, lower=True)
    except linalg.LinAlgError:
        raise ParameterError("H is rank deficient") from None


def log_gamma_variates(alpha, log_kappa, rng, size=None):
    """Draw ``log(g)`` with ``g ~ Gamma(alpha, rate=exp(log_kappa))``.

    Shapes below one use the boost identity ``G_a = G_{a+1} U^{1/a}`` in the
    log domain so tiny gamma variates never underflow to zero.
    """
    alpha = np.asarray(alpha, dtype=float)
    shape = alpha.shape if size is None else tuple(np.atleast_1d(size)) + alpha.shape
    small = alpha < 1.0
    g = rng.standard_gamma(np.where(small, alpha + 1.0, alpha), size=shape)
    out = np.log(g)
    if np.any(small):
        u = rng.random(size=shape)
        out = np.where(small, out + np.log(u) / np.where(small, alpha, 1.0), out)
    return out - log_kappa


def sample_mlg(params, rng, size=None):
    """Draw from ``MLG(mu, V, alpha, kappa)``.

    Parameters
    ----------
    params : MLGParams
    rng : numpy.random.Generator or seed
    size : int, optional
        Number of independent draws. When given the result has shape
        ``(size, n)``; otherwise a single length-``n`` vector.
    """
    rng = as_generator(rng)
    w = log_gamma_variates(params.alpha, np.log(params.kappa), rng, size=size)
    return w @ params.V.T + params.mu


def mlg_log_density(y, params):
    """Log density of ``MLG(mu, V, alpha, kappa)`` at ``y``."""
    y = _as_vector(y, "y")
    if y.size != params.n:
        raise ParameterError(f"|y|={y.size} does not match n={params.n}")
    try:
        w = linalg.solve(params.V, y - params.mu)
    except linalg.LinAlgError:
        raise ParameterError("V is not invertible") from None
    _, logabsdet = np.linalg.slogdet(params.V)
    const = np.sum(params.alpha * np.log(params.kappa) - gammaln(params.alpha))
    return float(-logabsdet + const + params.alpha @ w - params.kappa @ safe_exp(w))


def _projection(H, alpha, log_kappa, rng, size=None):
    w = log_gamma_variates(alpha, log_kappa, rng, size=size)
    L = linalg.cholesky(H.T @ H, lower=True)
    rhs = H.T @ (w.T if size is not None else w)
    sol = linalg.cho_solve((L, True), rhs)
    return sol.T if size is not None else sol


def _informative(params):
    keep = params.kappa > 0
    return params.H[keep], params.alpha[keep], np.log(params.kappa[keep])


def sample_cmlg(params, rng, size=None):
    """Projection draw ``(H'H)^{-1} H'Y`` with ``Y ~ MLG(0, I, alpha, kappa)``."""
    rng = as_generator(rng)
    H, alpha, log_kappa = _informative(params)
    return _projection(H, alpha, log_kappa, rng, size=size)


def sample_inverse_gamma(params, rng):
    """Draw ``1/G`` with ``G ~ Gamma(shape, rate=scale)``."""
    rng = as_generator(rng)
    return 1.0 / (rng.standard_gamma(params.shape) / params.scale)


def sample_truncated_scalar_cmlg(params, rng, max_attempts=10**7, batch=10_000):
    """Scalar projection cMLG draw restricted to ``(0, inf)`` by rejection.

    The first attempts consume the stream exactly like :func:`sample_cmlg`,
    so when the first draw is positive both samplers agree.
    """
    if params.r != 1:
        raise ParameterError("truncated sampler requires r = 1")
    rng = as_generator(rng)
    H, alpha, log_kappa = _informative(params)
    h = H[:, 0]
    hh = h @ h
    attempts = 0
    while attempts < 100:
        x = (h @ log_gamma_variates(alpha, log_kappa, rng)) / hh
        attempts += 1
        if x > 0:
            return float(x)
    while attempts < max_attempts:
        xs = log_gamma_variates(alpha, log_kappa, rng, size=batch) @ h / hh
        attempts += batch
        pos = np.flatnonzero(xs > 0)
        if pos.size:
            return float(xs[pos[0]])
    raise DegenerateTruncationError(
        f"no positive draw in {attempts} attempts (acceptance < 1e-6)"
    )


def cmlg_log_kernel(x, H, alpha, log_kappa, log_power=0.0):
    """Unnormalized cMLG log density, optionally times ``x**log_power`` (scalar x > 0)."""
    z = H @ x
    val = alpha @ z - np.exp(np.minimum(z + log_kappa, EXP_CLAMP)).sum()
    if log_power:
        val += log_power * np.log(x[0])
    return float(val)


def _spd_cholesky(A):
    jitter = 0.0
    scale = np.trace(A) / A.shape[0]
    for _ in range(6):
        try:
            if jitter:
                A = A.copy()
                A[np.diag_indices_from(A)] += jitter
            return linalg.cholesky(A, lower=True, check_finite=False)
        except linalg.LinAlgError:
            jitter = 1e-10 * scale if jitter == 0 else jitter * 10
    raise NumericalError("cMLG Hessian is not positive definite")


def _newton_system(x, H, alpha, log_kappa, log_power):
    w = np.exp(np.minimum(H @ x + log_kappa, EXP_CLAMP))
    grad = H.T @ (alpha - w)
    prec = (H.T * w) @ H
    if log_power:
        grad[0] += log_power / x[0]
        prec[0, 0] += log_power / x[0] ** 2
    return grad, prec


def cmlg_mode(H, alpha, log_kappa, x0, log_power=0.0, tol=1e-10, max_iter=100):
    """Newton ascent to the cMLG mode; returns ``(mode, cholesky of precision)``.

    The target is strictly log-concave for full-rank ``H``, so damped Newton
    converges from any starting point in the domain.
    """
    x = np.array(x0, dtype=float)
    positive = log_power > 0
    f = cmlg_log_kernel(x, H, alpha, log_kappa, log_power)
    for _ in range(max_iter):
        grad, prec = _newton_system(x, H, alpha, log_kappa, log_power)
        if x.size == 1:
            step = grad / prec[0]
        else:
            step = linalg.cho_solve((_spd_cholesky(prec), True), grad, check_finite=False)
        t = 1.0
        while True:
            cand = x + t * step
            if not (positive and cand[0] <= 0):
                fc = cmlg_log_kernel(cand, H, alpha, log_kappa, log_power)
                if fc >= f - 1e-12 * abs(f) or t < 1e-12:
                    break
            t *= 0.5
        x, f = cand, fc
        if np.max(np.abs(t * step)) < tol * (1.0 + np.max(np.abs(x))):
            break
    _, prec = _newton_system(x, H, alpha, log_kappa, log_power)
    if x.size == 1:
        if not prec[0, 0] > 0:
            raise NumericalError("cMLG Hessian is not positive definite")
        return x, np.sqrt(prec)
    return x, _spd_cholesky(prec)


DEFENSIVE_WEIGHT = 0.1
DEFENSIVE_DF = 4.0


def _mixture_log_q(d2, r):
    """Log density (up to the shared Jacobian) of the defensive proposal.

    `d2` is the squared Mahalanobis distance from the mode under the Laplace
    precision; the mixture is ``0.9 N(0, I) + 0.1 t_4(0, I)`` in whitened
    coordinates.
    """
    nu = DEFENSIVE_DF
    log_n = -0.5 * d2 - 0.5 * r * np.log(2 * np.pi)
    log_t = (
        gammaln((nu + r) / 2)
        - gammaln(nu / 2)
        - 0.5 * r * np.log(nu * np.pi)
        - 0.5 * (nu + r) * np.log1p(d2 / nu)
    )
    return np.logaddexp(np.log1p(-DEFENSIVE_WEIGHT) + log_n, np.log(DEFENSIVE_WEIGHT) + log_t)


def cmlg_mh_step(current, H, alpha, log_kappa, rng, log_power=0.0, positive=False, start=None):
    """One Metropolis-Hastings update leaving the exact cMLG density invariant.

    The independence proposal is centred at the cMLG mode with the Laplace
    (negative Hessian) precision: a Gaussian with probability 0.9 and a
    multivariate t with 4 degrees of freedom otherwise. The t component
    dominates the target's exponential tails, so the importance weights stay
    bounded and the chain cannot stall at a start value far from the mode.

    Parameters
    ----------
    current : array of shape (r,)
        Current value of the block.
    H, alpha, log_kappa
        cMLG parameters; rows with ``log_kappa = -inf`` must be removed first.
    log_power : float
        Extra ``x**log_power`` factor for scalar positive targets.
    positive : bool
        Restrict the (scalar) support to ``x > 0``.
    start : array, optional
        Newton starting point (e.g. the previous mode); defaults to `current`.
        Only affects speed: the mode is solved to tight tolerance.

    Returns
    -------
    value : ndarray
    accepted : bool
    mode : ndarray
    """
    current = np.atleast_1d(np.asarray(current, dtype=float))
    if start is None or (positive and not start[0] > 0):
        start = current
    if positive and not start[0] > 0:
        start = np.array([1.0])
    mode, L = cmlg_mode(H, alpha, log_kappa, start, log_power=log_power)
    r = mode.size

    def whiten(x):
        d = L.T @ (x - mode)
        return d @ d

    for _ in range(10_000):
        z = rng.standard_normal(r)
        if rng.random() < DEFENSIVE_WEIGHT:
            z *= np.sqrt(DEFENSIVE_DF / rng.chisquare(DEFENSIVE_DF))
        if r == 1:
            prop = mode + z / L[0, 0]
        else:
            prop = mode + linalg.solve_triangular(L.T, z, lower=False, check_finite=False)
        if not positive or prop[0] > 0:
            break
    else:
        raise DegenerateTruncationError("Laplace proposal has no mass on x > 0")
    log_u = np.log(rng.random())
    if positive and not current[0] > 0:
        return prop, True, mode
    log_ratio = (
        cmlg_log_kernel(prop, H, alpha, log_kappa, log_power)
        - _mixture_log_q(whiten(prop), r)
        - cmlg_log_kernel(current, H, alpha, log_kappa, log_power)
        + _mixture_log_q(whiten(current), r)
    )
    if log_u < log_ratio:
        return prop, True, mode
    return current, False, mode
