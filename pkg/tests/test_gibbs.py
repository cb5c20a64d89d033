import numpy as np
import pytest
from scipy import integrate

from mlgspatial.design import DesignSet, Hyperparams
from mlgspatial.exceptions import ParameterError
from mlgspatial.gibbs import (
    BLOCKS,
    ChainState,
    PosteriorDraws,
    SamplerConfig,
    beta1_conditional,
    chain_diagnostics,
    effective_sample_size,
    eta1_conditional,
    gibbs_step,
    initial_state,
    precision_vector,
    run_chain,
    sample_beta1,
    sample_beta2,
    sample_eta1,
    sample_eta2,
    sample_inv_sigma_eta2,
    sample_mean_block,
    sample_sigma2_eta1,
    sample_variance_block,
    split_rhat,
)


def make_designs(rng, n=12, p1=2, r1=3, p2=2, r2=2):
    labels = {
        "beta1": [f"b{j}" for j in range(p1)],
        "eta1": [f"e{j}" for j in range(r1)],
        "beta2": [f"c{j}" for j in range(p2)],
        "eta2": [f"f{j}" for j in range(r2)],
    }
    return DesignSet(
        rng.normal(size=(n, p1)),
        rng.uniform(size=(n, r1)),
        rng.normal(size=(n, p2)) * 0.3,
        rng.uniform(size=(n, r2)) * 0.3,
        labels,
    )


def random_state(rng, d):
    dims = d.dims
    return ChainState(
        rng.normal(size=dims["p1"]),
        rng.normal(size=dims["r1"]),
        rng.normal(size=dims["p2"]) * 0.2,
        rng.normal(size=dims["r2"]) * 0.2,
        0.7,
        1.3,
    )


def test_beta1_conditional_dense_oracle(rng):
    d = make_designs(rng)
    s = random_state(rng, d)
    y = rng.normal(size=d.n)
    h = Hyperparams(sigma2_beta1=4.0)
    omega = np.diag(np.exp(d.X2 @ s.beta2 + d.Psi2 @ s.eta2))
    prec = d.X1.T @ omega @ d.X1 + np.eye(2) / 4.0
    cov = np.linalg.inv(prec)
    mean = cov @ d.X1.T @ omega @ (y - d.Psi1 @ s.eta1)
    m, c = beta1_conditional(s, y, d, h)
    np.testing.assert_allclose(m, mean, rtol=1e-10)
    np.testing.assert_allclose(c, cov, rtol=1e-10)


def test_eta1_conditional_dense_oracle(rng):
    d = make_designs(rng)
    s = random_state(rng, d)
    y = rng.normal(size=d.n)
    omega = np.diag(precision_vector(s, d))
    prec = d.Psi1.T @ omega @ d.Psi1 + np.eye(3) / s.sigma2_eta1
    cov = np.linalg.inv(prec)
    mean = cov @ d.Psi1.T @ omega @ (y - d.X1 @ s.beta1)
    m, c = eta1_conditional(s, y, d, Hyperparams())
    np.testing.assert_allclose(m, mean, rtol=1e-10)
    np.testing.assert_allclose(c, cov, rtol=1e-10)


def test_beta1_toy_example():
    d = DesignSet(np.ones((1, 1)), np.zeros((1, 0)), np.ones((1, 1)), np.zeros((1, 0)))
    s = ChainState(np.zeros(1), np.zeros(0), np.zeros(1), np.zeros(0))
    m, c = beta1_conditional(s, np.array([2.0]), d, Hyperparams(sigma2_beta1=1.0))
    assert m[0] == pytest.approx(1.0) and c[0, 0] == pytest.approx(0.5)


def test_beta1_draw_moments(rng):
    d = make_designs(rng)
    s = random_state(rng, d)
    y = rng.normal(size=d.n)
    h = Hyperparams()
    m, c = beta1_conditional(s, y, d, h)
    draws = np.array([sample_beta1(s, y, d, h, rng) for _ in range(20000)])
    se = np.sqrt(np.diag(c) / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - m) < 4 * se)
    np.testing.assert_allclose(np.cov(draws.T), c, rtol=0.05)


def test_prior_recovery_without_data(rng):
    d = DesignSet(np.zeros((0, 2)), np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((0, 0)))
    s = ChainState(np.zeros(2), np.zeros(0), np.zeros(1), np.zeros(0))
    draws = np.array([sample_beta1(s, np.zeros(0), d, Hyperparams(), rng) for _ in range(20000)])
    np.testing.assert_allclose(draws.var(axis=0), 1000.0, rtol=0.05)
    assert sample_eta1(s, np.zeros(0), d, Hyperparams(), rng).size == 0


def test_sigma2_eta1_inverse_gamma(rng):
    s = ChainState(np.zeros(1), np.array([1.0, 1.0, 1.0, 0.0]), np.zeros(1), np.zeros(0))
    h = Hyperparams(a=0.5, b=0.5)
    # posterior IG(2.5, 2): the precision is Gamma(2.5, rate 2), mean 1.25, var 0.625
    prec = 1.0 / np.array([sample_sigma2_eta1(s, h, rng) for _ in range(40000)])
    assert abs(prec.mean() - 1.25) < 4 * np.sqrt(0.625 / prec.size)


def beta2_target_moments(y, h):
    """Quadrature moments of the one-site, intercept-only variance conditional."""
    alpha = h.alpha_mlg
    hp = 1.0 / (np.sqrt(alpha) * np.sqrt(h.sigma2_beta2))
    rate = y**2 / 2

    def logk(x):
        return 0.5 * x - rate * np.exp(x) + alpha * hp * x - alpha * np.exp(hp * x)

    grid = np.linspace(-40, 15, 200001)
    shift = logk(grid).max()
    mass = integrate.quad(lambda x: np.exp(logk(x) - shift), -60, 20, points=[0], limit=200)[0]
    m1 = integrate.quad(lambda x: x * np.exp(logk(x) - shift), -60, 20, points=[0], limit=200)[0] / mass
    m2 = integrate.quad(lambda x: x * x * np.exp(logk(x) - shift), -60, 20, points=[0], limit=200)[0] / mass
    return m1, m2 - m1**2


@pytest.mark.parametrize("alpha", [1000.0, 2.0])
def test_beta2_conditional_against_quadrature(rng, alpha):
    h = Hyperparams(alpha_mlg=alpha, sigma2_beta2=1.0)
    d = DesignSet(np.zeros((1, 0)), np.zeros((1, 0)), np.ones((1, 1)), np.zeros((1, 0)))
    s = ChainState(np.zeros(0), np.zeros(0), np.zeros(1), np.zeros(0))
    y = np.array([1.0])
    cache = {}
    draws = []
    for _ in range(30000):
        s.beta2 = sample_beta2(s, y, d, h, rng, cache=cache)
        draws.append(s.beta2[0])
    draws = np.array(draws[1000:])
    mean, var = beta2_target_moments(1.0, h)
    assert draws.mean() == pytest.approx(mean, rel=0.02, abs=0.02)
    assert draws.var() == pytest.approx(var, rel=0.05)


def test_beta2_zero_residual_row_dropped(rng):
    d = DesignSet(np.ones((2, 1)), np.zeros((2, 0)), np.ones((2, 1)), np.zeros((2, 0)))
    s = ChainState(np.array([1.0]), np.zeros(0), np.zeros(1), np.zeros(0))
    out = sample_beta2(s, np.array([1.0, 2.0]), d, Hyperparams(), rng)
    assert np.all(np.isfinite(out))
    s2 = sample_beta2(s, np.array([1.0, 1.0]), d, Hyperparams(), rng, method="projection")
    assert np.all(np.isfinite(s2))


def test_inv_sigma_eta2_positive(rng):
    s = ChainState(np.zeros(0), np.zeros(0), np.zeros(0), rng.normal(size=5) * 0.1)
    for method in ("exact", "projection"):
        vals = [sample_inv_sigma_eta2(s, Hyperparams(), rng, method=method) for _ in range(200)]
        assert min(vals) > 0


def test_gibbs_step_fixed_blocks_and_stream(rng):
    d = make_designs(rng)
    s = random_state(rng, d)
    y = rng.normal(size=d.n)
    h = Hyperparams()
    same = gibbs_step(s, y, d, h, np.random.default_rng(1), fixed=frozenset(BLOCKS))
    for name in BLOCKS:
        np.testing.assert_array_equal(getattr(same, name), getattr(s, name))
    only_beta1 = gibbs_step(s, y, d, h, np.random.default_rng(5), fixed=frozenset(BLOCKS) - {"beta1"})
    manual = sample_beta1(s, y, d, h, np.random.default_rng(5))
    np.testing.assert_array_equal(only_beta1.beta1, manual)


def test_conjugate_submodel_matches_ridge(rng):
    d = make_designs(rng, n=40)
    s = random_state(rng, d)
    y = rng.normal(size=d.n) + 1.0
    h = Hyperparams(sigma2_beta1=2.0)
    fixed = frozenset(BLOCKS) - {"beta1", "eta1"}
    cfg = SamplerConfig(n_iter=12000, burn_in=500, seed=3, fixed=fixed)
    draws = run_chain(y, d, h, cfg, init=s)
    D = np.hstack([d.X1, d.Psi1])
    omega = precision_vector(s, d)
    prior = np.concatenate([np.full(2, 1 / 2.0), np.full(3, 1 / s.sigma2_eta1)])
    cov = np.linalg.inv((D.T * omega) @ D + np.diag(prior))
    mean = cov @ D.T @ (omega * y)
    got = np.hstack([draws.beta1, draws.eta1])
    ess = min(effective_sample_size(got[:, j]) for j in range(5))
    assert np.all(np.abs(got.mean(axis=0) - mean) < 5 * np.sqrt(np.diag(cov) / ess))
    np.testing.assert_allclose(got.var(axis=0), np.diag(cov), rtol=0.15)


def test_run_chain_shapes_and_determinism(rng):
    d = make_designs(rng, n=30)
    y = rng.normal(size=d.n)
    cfg = SamplerConfig(n_iter=60, burn_in=20, thin=3, seed=11)
    a = run_chain(y, d, Hyperparams(), cfg)
    b = run_chain(y, d, Hyperparams(), cfg)
    c = run_chain(y, d, Hyperparams(), SamplerConfig(n_iter=60, burn_in=20, thin=3, seed=12))
    assert len(a) == cfg.n_stored == 14
    assert a.iterations[0] == 20 and a.iterations[-1] == 59
    for name in BLOCKS:
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.beta1, c.beta1)
    assert np.all(a.sigma2_eta1 > 0) and np.all(a.sigma2_eta2 > 0)
    assert set(a.acceptance) == {"beta2+eta2", "sigma2_eta2"}
    sep = run_chain(y, d, Hyperparams(), SamplerConfig(n_iter=30, burn_in=10, joint_blocks=False))
    assert set(sep.acceptance) == {"beta2", "eta2", "sigma2_eta2"}


def test_sampler_config_validation():
    with pytest.raises(ParameterError):
        SamplerConfig(n_iter=10, burn_in=10)
    with pytest.raises(ParameterError):
        SamplerConfig(thin=0)
    with pytest.raises(ParameterError):
        SamplerConfig(cmlg_update="other")
    with pytest.raises(ParameterError):
        SamplerConfig(fixed={"nope"})


def test_initial_state_and_mismatch(rng):
    d = make_designs(rng)
    s = initial_state(rng.normal(size=d.n), d)
    s.check(d)
    with pytest.raises(ParameterError):
        ChainState(np.zeros(1), np.zeros(3), np.zeros(2), np.zeros(2)).check(d)
    with pytest.raises(ParameterError):
        run_chain(np.zeros(3), d, Hyperparams(), SamplerConfig(n_iter=2, burn_in=0))


def test_draws_csv_round_trip_and_diagnostics(rng, tmp_path):
    d = make_designs(rng, n=20)
    draws = run_chain(rng.normal(size=d.n), d, Hyperparams(), SamplerConfig(n_iter=40, burn_in=10))
    draws.to_csv(tmp_path / "d.csv")
    back = PosteriorDraws.from_csv(tmp_path / "d.csv")
    for name in BLOCKS:
        np.testing.assert_array_equal(getattr(back, name), getattr(draws, name))
    assert back.labels == draws.labels
    diag = chain_diagnostics(draws)
    assert list(diag.columns) == ["parameter", "mean", "sd", "rhat", "ess"]
    assert len(diag) == 2 + 3 + 2 + 2 + 2


def test_diagnostic_oracles(rng):
    iid = rng.normal(size=4000)
    assert effective_sample_size(iid) == pytest.approx(4000, rel=0.15)
    assert split_rhat(iid) == pytest.approx(1.0, abs=0.01)
    assert split_rhat(np.linspace(0, 10, 400) + rng.normal(size=400) * 0.1) > 1.5
    ar = np.zeros(20000)
    for t in range(1, ar.size):
        ar[t] = 0.9 * ar[t - 1] + rng.normal()
    # AR(1): ESS/n = (1 - phi) / (1 + phi)
    assert effective_sample_size(ar) / ar.size == pytest.approx(0.1 / 1.9, rel=0.3)


def test_mean_block_matches_dense_joint_conditional(rng):
    d = make_designs(rng)
    s = random_state(rng, d)
    y = rng.normal(size=d.n)
    h = Hyperparams(sigma2_beta1=3.0)
    D = np.hstack([d.X1, d.Psi1])
    omega = precision_vector(s, d)
    prior = np.concatenate([np.full(2, 1 / 3.0), np.full(3, 1 / s.sigma2_eta1)])
    cov = np.linalg.inv((D.T * omega) @ D + np.diag(prior))
    mean = cov @ D.T @ (omega * y)
    draws = np.array([np.concatenate(sample_mean_block(s, y, d, h, rng)) for _ in range(20000)])
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * np.sqrt(np.diag(cov) / draws.shape[0]))
    np.testing.assert_allclose(np.cov(draws.T), cov, rtol=0.06, atol=0.02 * np.abs(cov).max())


def test_joint_and_separate_variance_updates_agree(rng):
    d = make_designs(rng, n=60, r2=3)
    truth = random_state(rng, d)
    y = d.X1 @ truth.beta1 + d.Psi1 @ truth.eta1 + rng.normal(size=d.n) * np.exp(-0.5 * (d.X2 @ truth.beta2))
    fixed = frozenset({"beta1", "eta1", "sigma2_eta1", "sigma2_eta2"})
    runs = {}
    for joint in (True, False):
        cfg = SamplerConfig(n_iter=12000, burn_in=1000, seed=8, fixed=fixed, joint_blocks=joint)
        dr = run_chain(y, d, Hyperparams(sigma2_beta2=1.0), cfg, init=truth)
        runs[joint] = np.hstack([dr.beta2, dr.eta2])
    se = np.sqrt(
        sum(runs[j].var(axis=0) / min(effective_sample_size(runs[j][:, k]) for k in range(5)) for j in runs)
    )
    assert np.all(np.abs(runs[True].mean(axis=0) - runs[False].mean(axis=0)) < 5 * se)
    np.testing.assert_allclose(runs[True].std(axis=0), runs[False].std(axis=0), rtol=0.15)


@pytest.mark.parametrize("joint", [False, True])
def test_gibbs_step_matches_hand_traced_sequence(rng, joint):
    d = make_designs(rng, n=3, p1=1, r1=2, p2=1, r2=2)
    s0 = random_state(rng, d)
    y = rng.normal(size=3)
    h = Hyperparams()
    got = gibbs_step(s0, y, d, h, np.random.default_rng(77), joint_blocks=joint)

    r = np.random.default_rng(77)
    s = s0.copy()
    if joint:
        s.beta1, s.eta1 = sample_mean_block(s, y, d, h, r)
        s.beta2, s.eta2 = sample_variance_block(s, y, d, h, r)
    else:
        s.beta1 = sample_beta1(s, y, d, h, r)
        s.eta1 = sample_eta1(s, y, d, h, r)
        s.beta2 = sample_beta2(s, y, d, h, r)
        s.eta2 = sample_eta2(s, y, d, h, r)
    s.sigma2_eta1 = sample_sigma2_eta1(s, h, r)
    s.sigma2_eta2 = 1.0 / sample_inv_sigma_eta2(s, h, r) ** 2
    for name in BLOCKS:
        np.testing.assert_array_equal(getattr(got, name), getattr(s, name))
