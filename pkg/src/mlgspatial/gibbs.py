"""Gibbs sampler for the heteroscedastic spatial model.

Mean model ``mu = X1 beta1 + Psi1 eta1`` with Gaussian priors; variance model
``-log sigma^2 = X2 beta2 + Psi2 eta2`` with MLG priors. Updates run in the
fixed order beta1, eta1, beta2, eta2, sigma2_eta1, 1/sigma_eta2.

With ``joint_blocks=True`` (default) beta1 and eta1 are drawn together from
their joint Gaussian conditional, and beta2 and eta2 from their joint cMLG
conditional. The basis terms can mimic the land-use intercepts, and one-at-
a-time updates then drift slowly along that direction.

The MLG-prior blocks have cMLG full conditionals. ``cmlg_update="exact"``
(default) updates them with :func:`~mlgspatial.mlg.cmlg_mh_step`, which
targets the exact conditional. ``cmlg_update="projection"`` uses the
least-squares projection draw, which is cheaper but only approximates the
conditional when the stacked system has more rows than unknowns.
"""
import time
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import linalg

from ._rng import substream
from .exceptions import NumericalError, ParameterError
from .mlg import (
    EXP_CLAMP,
    CMLGParams,
    InverseGammaParams,
    _projection,
    cmlg_mh_step,
    sample_inverse_gamma,
    sample_truncated_scalar_cmlg,
)

BLOCKS = ("beta1", "eta1", "beta2", "eta2", "sigma2_eta1", "sigma2_eta2")
CMLG_UPDATES = ("exact", "projection")


@dataclass
class ChainState:
    beta1: np.ndarray
    eta1: np.ndarray
    beta2: np.ndarray
    eta2: np.ndarray
    sigma2_eta1: float = 1.0
    sigma2_eta2: float = 1.0

    def copy(self):
        return ChainState(
            self.beta1.copy(),
            self.eta1.copy(),
            self.beta2.copy(),
            self.eta2.copy(),
            self.sigma2_eta1,
            self.sigma2_eta2,
        )

    def check(self, designs):
        d = designs.dims
        got = (self.beta1.size, self.eta1.size, self.beta2.size, self.eta2.size)
        if got != (d["p1"], d["r1"], d["p2"], d["r2"]):
            raise ParameterError(f"state dimensions {got} do not match designs {d}")
        if not (self.sigma2_eta1 > 0 and self.sigma2_eta2 > 0):
            raise ParameterError("variance components must be positive")


@dataclass(frozen=True)
class SamplerConfig:
    """Chain length and update options.

    ``fixed`` names blocks held at their initial value (useful for
    conjugate sub-model checks).
    """

    n_iter: int = 5000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    cmlg_update: str = "exact"
    joint_blocks: bool = True
    fixed: frozenset = frozenset()

    def __post_init__(self):
        if not (0 <= self.burn_in < self.n_iter):
            raise ParameterError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ParameterError("thin must be >= 1")
        if self.cmlg_update not in CMLG_UPDATES:
            raise ParameterError(f"cmlg_update must be one of {CMLG_UPDATES}")
        unknown = set(self.fixed) - set(BLOCKS)
        if unknown:
            raise ParameterError(f"unknown fixed blocks {sorted(unknown)}")
        object.__setattr__(self, "fixed", frozenset(self.fixed))

    @property
    def n_stored(self):
        return len(range(self.burn_in, self.n_iter, self.thin))


# ---------------------------------------------------------------------------
# linear predictors


def mean_vector(state, designs):
    return designs.X1 @ state.beta1 + designs.Psi1 @ state.eta1


def neg_log_variance(state, designs):
    return designs.X2 @ state.beta2 + designs.Psi2 @ state.eta2


def precision_vector(state, designs):
    """Diagonal of ``Omega_y`` (``1/sigma^2`` per site)."""
    z = neg_log_variance(state, designs)
    if not np.all(np.isfinite(z)) or np.any(np.abs(z) > EXP_CLAMP):
        raise NumericalError("non-finite observation precision Omega_y")
    return np.exp(z)


# ---------------------------------------------------------------------------
# Gaussian blocks


def _spd_factor(A):
    scale = np.mean(np.diag(A))
    jitter = 0.0
    while True:
        try:
            return linalg.cholesky(A + jitter * np.eye(A.shape[0]), lower=True)
        except linalg.LinAlgError:
            jitter = 1e-10 * scale if jitter == 0 else jitter * 10
            if jitter > 1e-6 * scale:
                raise NumericalError("posterior precision is not positive definite") from None


def _gaussian_conditional(D, resid, omega, prior_var):
    A = (D.T * omega) @ D
    A[np.diag_indices_from(A)] += 1.0 / prior_var
    L = _spd_factor(A)
    mean = linalg.cho_solve((L, True), D.T @ (omega * resid))
    return mean, L


def _gaussian_draw(mean, L, rng):
    z = rng.standard_normal(mean.size)
    return mean + linalg.solve_triangular(L.T, z, lower=False)


def beta1_conditional(state, y, designs, hyper):
    """Mean and covariance of ``beta1 | rest``."""
    omega = precision_vector(state, designs)
    mean, L = _gaussian_conditional(
        designs.X1, y - designs.Psi1 @ state.eta1, omega, hyper.sigma2_beta1
    )
    return mean, linalg.cho_solve((L, True), np.eye(mean.size))


def eta1_conditional(state, y, designs, hyper):
    """Mean and covariance of ``eta1 | rest``."""
    omega = precision_vector(state, designs)
    mean, L = _gaussian_conditional(
        designs.Psi1, y - designs.X1 @ state.beta1, omega, state.sigma2_eta1
    )
    return mean, linalg.cho_solve((L, True), np.eye(mean.size))


def sample_beta1(state, y, designs, hyper, rng):
    omega = precision_vector(state, designs)
    mean, L = _gaussian_conditional(
        designs.X1, y - designs.Psi1 @ state.eta1, omega, hyper.sigma2_beta1
    )
    return _gaussian_draw(mean, L, rng)


def sample_mean_block(state, y, designs, hyper, rng):
    """Joint draw of ``(beta1, eta1)``; returns the two pieces."""
    p1, r1 = designs.X1.shape[1], designs.Psi1.shape[1]
    prior_var = np.concatenate([np.full(p1, hyper.sigma2_beta1), np.full(r1, state.sigma2_eta1)])
    mean, L = _gaussian_conditional(
        np.hstack([designs.X1, designs.Psi1]), y, precision_vector(state, designs), prior_var
    )
    x = _gaussian_draw(mean, L, rng)
    return x[:p1], x[p1:]


def sample_eta1(state, y, designs, hyper, rng):
    if designs.Psi1.shape[1] == 0:
        return np.zeros(0)
    omega = precision_vector(state, designs)
    mean, L = _gaussian_conditional(
        designs.Psi1, y - designs.X1 @ state.beta1, omega, state.sigma2_eta1
    )
    return _gaussian_draw(mean, L, rng)


# ---------------------------------------------------------------------------
# MLG blocks


def cmlg_system(D, offset, state, y, designs, prior_scale, alpha):
    """Stacked ``(H, alpha, log_kappa)`` for a variance-coefficient block.

    Data rows have shape 1/2 and rate ``(y - mu)^2 exp(offset) / 2``; prior rows
    have ``H = alpha^{-1/2} / prior_scale * I`` with shape and rate ``alpha``.
    Rows with zero residual have rate 0 and are returned with
    ``log_kappa = -inf``.
    """
    k = D.shape[1]
    prior_scale = np.broadcast_to(np.asarray(prior_scale, dtype=float), (k,))
    res2 = (y - mean_vector(state, designs)) ** 2
    with np.errstate(divide="ignore"):
        log_k_data = np.log(0.5 * res2) + offset
    H = np.vstack([D, np.diag(1.0 / (np.sqrt(alpha) * prior_scale))])
    a = np.concatenate([np.full(D.shape[0], 0.5), np.full(k, float(alpha))])
    log_k = np.concatenate([log_k_data, np.full(k, np.log(alpha))])
    return H, a, log_k


def _cmlg_update(current, H, a, log_k, rng, method, cache, key):
    keep = np.isfinite(log_k)
    H, a, log_k = H[keep], a[keep], log_k[keep]
    if method == "projection":
        return _projection(H, a, log_k, rng)
    start = None if cache is None else cache.get(key)
    value, accepted, mode = cmlg_mh_step(current, H, a, log_k, rng, start=start)
    _record(cache, key, accepted, mode)
    return value


def _record(cache, key, accepted, mode):
    if cache is None:
        return
    cache[key] = mode
    stats = cache.setdefault("accept", {})
    n, k = stats.get(key, (0, 0))
    stats[key] = (n + 1, k + int(accepted))


def sample_beta2(state, y, designs, hyper, rng, method="exact", cache=None):
    H, a, log_k = cmlg_system(
        designs.X2,
        designs.Psi2 @ state.eta2,
        state,
        y,
        designs,
        np.sqrt(hyper.sigma2_beta2),
        hyper.alpha_mlg,
    )
    return _cmlg_update(state.beta2, H, a, log_k, rng, method, cache, "beta2")


def sample_eta2(state, y, designs, hyper, rng, method="exact", cache=None):
    if designs.Psi2.shape[1] == 0:
        return np.zeros(0)
    H, a, log_k = cmlg_system(
        designs.Psi2,
        designs.X2 @ state.beta2,
        state,
        y,
        designs,
        np.sqrt(state.sigma2_eta2),
        hyper.alpha_mlg,
    )
    return _cmlg_update(state.eta2, H, a, log_k, rng, method, cache, "eta2")


def sample_variance_block(state, y, designs, hyper, rng, method="exact", cache=None):
    """Joint draw of ``(beta2, eta2)``; returns the two pieces."""
    p2, r2 = designs.X2.shape[1], designs.Psi2.shape[1]
    scale = np.concatenate(
        [np.full(p2, np.sqrt(hyper.sigma2_beta2)), np.full(r2, np.sqrt(state.sigma2_eta2))]
    )
    H, a, log_k = cmlg_system(
        np.hstack([designs.X2, designs.Psi2]),
        np.zeros(designs.n),
        state,
        y,
        designs,
        scale,
        hyper.alpha_mlg,
    )
    current = np.concatenate([state.beta2, state.eta2])
    x = _cmlg_update(current, H, a, log_k, rng, method, cache, "beta2+eta2")
    return x[:p2], x[p2:]


def sample_sigma2_eta1(state, hyper, rng):
    eta1 = state.eta1
    params = InverseGammaParams(hyper.a + eta1.size / 2.0, hyper.b + eta1 @ eta1 / 2.0)
    return float(sample_inverse_gamma(params, rng))


def inv_sigma_eta2_system(state, hyper):
    """``(H_sigma, omega_sigma, rho_sigma)`` for the ``1/sigma_eta2`` update."""
    alpha = hyper.alpha_mlg
    r2 = state.eta2.size
    H = np.concatenate([state.eta2 / np.sqrt(alpha), [1.0]])[:, None]
    shape = np.concatenate([np.full(r2, alpha), [hyper.w]])
    rate = np.concatenate([np.full(r2, alpha), [hyper.p]])
    return H, shape, rate


def sample_inv_sigma_eta2(state, hyper, rng, method="exact", cache=None):
    """Draw ``1/sigma_eta2`` restricted to positive values.

    The exact update includes the ``(1/sigma_eta2)^{r2}`` factor contributed
    by the scale of the MLG prior on ``eta2``.
    """
    H, shape, rate = inv_sigma_eta2_system(state, hyper)
    if method == "projection":
        return sample_truncated_scalar_cmlg(CMLGParams(H, shape, rate), rng)
    current = np.array([1.0 / np.sqrt(state.sigma2_eta2)])
    value, accepted, mode = cmlg_mh_step(
        current,
        H,
        shape,
        np.log(rate),
        rng,
        log_power=float(state.eta2.size),
        positive=True,
        start=None if cache is None else cache.get("sigma2_eta2"),
    )
    _record(cache, "sigma2_eta2", accepted, mode)
    return float(value[0])


# ---------------------------------------------------------------------------
# chain


def gibbs_step(
    state,
    y,
    designs,
    hyper,
    rng,
    method="exact",
    fixed=frozenset(),
    timing=None,
    cache=None,
    joint_blocks=False,
):
    """One full scan; returns a new :class:`ChainState`.

    `cache` (a dict) carries Newton warm starts and MH acceptance counts
    between scans; `timing` accumulates seconds per block. With
    `joint_blocks` set, a pair is drawn jointly when the model has that
    random effect and neither member of the pair is fixed.
    """
    s = state.copy()

    def run(name, fn):
        if name in fixed:
            return
        t0 = time.perf_counter()
        value = fn()
        if "+" in name:
            for part, v in zip(name.split("+"), value):
                setattr(s, part, v)
        else:
            setattr(s, name, value)
        if timing is not None:
            timing[name] = timing.get(name, 0.0) + time.perf_counter() - t0

    def joint(a, b, Psi):
        return joint_blocks and Psi.shape[1] > 0 and not {a, b} & set(fixed)

    if joint("beta1", "eta1", designs.Psi1):
        run("beta1+eta1", lambda: sample_mean_block(s, y, designs, hyper, rng))
    else:
        run("beta1", lambda: sample_beta1(s, y, designs, hyper, rng))
        run("eta1", lambda: sample_eta1(s, y, designs, hyper, rng))
    if joint("beta2", "eta2", designs.Psi2):
        run("beta2+eta2", lambda: sample_variance_block(s, y, designs, hyper, rng, method, cache))
    else:
        run("beta2", lambda: sample_beta2(s, y, designs, hyper, rng, method, cache))
        run("eta2", lambda: sample_eta2(s, y, designs, hyper, rng, method, cache))
    run("sigma2_eta1", lambda: sample_sigma2_eta1(s, hyper, rng))
    run("sigma2_eta2", lambda: 1.0 / sample_inv_sigma_eta2(s, hyper, rng, method, cache) ** 2)
    return s


def initial_state(y, designs):
    """OLS warm start for ``beta1``; ``beta2`` matches the pooled residual variance."""
    d = designs.dims
    n = designs.n
    if n == 0:
        return ChainState(np.zeros(d["p1"]), np.zeros(d["r1"]), np.zeros(d["p2"]), np.zeros(d["r2"]))
    beta1 = linalg.lstsq(designs.X1, y)[0]
    resid = y - designs.X1 @ beta1
    dof = n - d["p1"]
    s2 = resid @ resid / dof if dof > 0 else np.var(y) + 1.0
    s2 = max(float(s2), 1e-8)
    beta2 = linalg.lstsq(designs.X2, np.full(n, -np.log(s2)))[0]
    return ChainState(beta1, np.zeros(d["r1"]), beta2, np.zeros(d["r2"]))


@dataclass
class PosteriorDraws:
    """Stored post-burn-in draws; one row per retained iteration."""

    beta1: np.ndarray
    eta1: np.ndarray
    beta2: np.ndarray
    eta2: np.ndarray
    sigma2_eta1: np.ndarray
    sigma2_eta2: np.ndarray
    iterations: np.ndarray
    labels: dict
    timing: dict = field(default_factory=dict)
    acceptance: dict = field(default_factory=dict)

    def __len__(self):
        return self.iterations.size

    def state(self, t):
        return ChainState(
            self.beta1[t],
            self.eta1[t],
            self.beta2[t],
            self.eta2[t],
            float(self.sigma2_eta1[t]),
            float(self.sigma2_eta2[t]),
        )

    def mean_function(self, designs):
        """``T x n`` draws of ``mu(s)``."""
        return self.beta1 @ designs.X1.T + self.eta1 @ designs.Psi1.T

    def neg_log_variance(self, designs):
        """``T x n`` draws of ``-log sigma^2(s)``."""
        return self.beta2 @ designs.X2.T + self.eta2 @ designs.Psi2.T

    def to_frame(self):
        cols = {"iteration": self.iterations}
        for block in ("beta1", "eta1", "beta2", "eta2"):
            values = getattr(self, block)
            for j, name in enumerate(self.labels[block]):
                cols[f"{block}:{name}"] = values[:, j]
        cols["sigma2_eta1"] = self.sigma2_eta1
        cols["sigma2_eta2"] = self.sigma2_eta2
        return pd.DataFrame(cols)

    @classmethod
    def from_frame(cls, df):
        blocks, labels = {}, {}
        for block in ("beta1", "eta1", "beta2", "eta2"):
            names = [c for c in df.columns if c.startswith(block + ":")]
            labels[block] = [c.split(":", 1)[1] for c in names]
            blocks[block] = df[names].to_numpy(dtype=float).reshape(len(df), len(names))
        return cls(
            sigma2_eta1=df["sigma2_eta1"].to_numpy(dtype=float),
            sigma2_eta2=df["sigma2_eta2"].to_numpy(dtype=float),
            iterations=df["iteration"].to_numpy(dtype=int),
            labels=labels,
            **blocks,
        )

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path):
        return cls.from_frame(pd.read_csv(path, float_precision="round_trip"))


def run_chain(y, designs, hyper, config, init=None):
    """Run a single Gibbs chain and keep post-burn-in, thinned draws."""
    y = np.asarray(y, dtype=float)
    if y.shape != (designs.n,):
        raise ParameterError("y must have one entry per design row")
    rng = substream(config.seed, "fit")
    state = initial_state(y, designs) if init is None else init.copy()
    state.check(designs)
    d = designs.dims
    T = config.n_stored
    out = {
        "beta1": np.empty((T, d["p1"])),
        "eta1": np.empty((T, d["r1"])),
        "beta2": np.empty((T, d["p2"])),
        "eta2": np.empty((T, d["r2"])),
        "sigma2_eta1": np.empty(T),
        "sigma2_eta2": np.empty(T),
    }
    iterations = np.empty(T, dtype=int)
    timing = {}
    cache = {}
    k = 0
    for it in range(config.n_iter):
        try:
            state = gibbs_step(
                state,
                y,
                designs,
                hyper,
                rng,
                config.cmlg_update,
                config.fixed,
                timing,
                cache,
                config.joint_blocks,
            )
        except NumericalError as exc:
            raise NumericalError(str(exc), iteration=it) from exc
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            for name in BLOCKS:
                out[name][k] = getattr(state, name)
            iterations[k] = it
            k += 1
    acceptance = {key: k_acc / n_tot for key, (n_tot, k_acc) in cache.get("accept", {}).items()}
    return PosteriorDraws(
        iterations=iterations,
        labels=dict(designs.labels),
        timing=timing,
        acceptance=acceptance,
        **out,
    )


# ---------------------------------------------------------------------------
# diagnostics


def _autocorr(x):
    n = x.size
    xc = x - x.mean()
    f = np.fft.rfft(xc, n=2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    return acov / acov[0] if acov[0] > 0 else np.zeros(n)


def effective_sample_size(x):
    """ESS via Geyer's initial monotone positive-sequence estimator."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.ptp(x) == 0:
        return float(n)
    rho = _autocorr(x)
    pairs = rho[: n - n % 2].reshape(-1, 2).sum(axis=1)
    total = 0.0
    prev = np.inf
    for g in pairs[0:]:
        if g <= 0:
            break
        g = min(g, prev)
        total += g
        prev = g
    tau = -1.0 + 2.0 * total
    return float(n / max(tau, 1.0 / np.log10(max(n, 10))))


def split_rhat(x):
    """Potential scale reduction from the two halves of a single chain."""
    x = np.asarray(x, dtype=float)
    m = x.size // 2
    if m < 2:
        return np.nan
    halves = np.stack([x[:m], x[m:2 * m]])
    w = halves.var(axis=1, ddof=1).mean()
    b = m * halves.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else np.inf
    var_plus = (m - 1) / m * w + b / m
    return float(np.sqrt(var_plus / w))


def chain_diagnostics(draws):
    """Per-parameter posterior mean, sd, split R-hat and ESS."""
    df = draws.to_frame().drop(columns="iteration")
    rows = []
    for name in df.columns:
        x = df[name].to_numpy()
        rows.append(
            {
                "parameter": name,
                "mean": x.mean(),
                "sd": x.std(ddof=1) if x.size > 1 else 0.0,
                "rhat": split_rhat(x),
                "ess": effective_sample_size(x),
            }
        )
    return pd.DataFrame(rows)


def with_seed(config, seed):
    return replace(config, seed=int(seed))
