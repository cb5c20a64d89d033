import io

import numpy as np
import pytest

from mlgspatial.basis import BasisSet, Knot, Landuse
from mlgspatial.design import SiteTable, build_design
from mlgspatial.exceptions import DataError, ParameterError
from mlgspatial.gibbs import PosteriorDraws
from mlgspatial.prediction import (
    LanduseRaster,
    PredictionGrid,
    aggregate_landuse,
    aggregate_raster,
    fill_coeffs,
    posterior_predictive,
    predict_grid,
    summarize_predictive,
)

C, F, W, O, NA = 0, 1, 2, 3, -1


def fake_draws(rng, designs, T=50, var_shift=0.0):
    d = designs.dims
    return PosteriorDraws(
        beta1=rng.normal(size=(T, d["p1"])) * 0.1 + 1.0,
        eta1=rng.normal(size=(T, d["r1"])) * 0.1,
        beta2=np.full((T, d["p2"]), var_shift) + rng.normal(size=(T, d["p2"])) * 0.05,
        eta2=rng.normal(size=(T, d["r2"])) * 0.05,
        sigma2_eta1=np.ones(T),
        sigma2_eta2=np.ones(T),
        iterations=np.arange(T),
        labels=dict(designs.labels),
    )


@pytest.fixture
def basis():
    return BasisSet((Knot(0, 0, 3.0), Knot(2, 2, 3.0)), (0, 0))


@pytest.fixture
def sites(rng):
    n = 8
    return SiteTable(np.arange(n), rng.uniform(0, 2, n), rng.uniform(0, 2, n), np.arange(n) % 4, None, rng.normal(size=(n, 2)))


def test_recomputation_oracle(rng, basis, sites):
    d = build_design(5, sites.subset(np.arange(3)), basis)
    draws = fake_draws(rng, d)
    pred = posterior_predictive(draws, d, np.random.default_rng(9))
    z = np.random.default_rng(9).standard_normal((50, 3))
    for t in (0, 17, 49):
        mu = d.X1 @ draws.beta1[t] + d.Psi1 @ draws.eta1[t]
        s2 = np.exp(-(d.X2 @ draws.beta2[t] + d.Psi2 @ draws.eta2[t]))
        np.testing.assert_allclose(pred.mu[t], mu, rtol=1e-12)
        np.testing.assert_allclose(pred.sigma2[t], s2, rtol=1e-12)
        np.testing.assert_allclose(pred.y[t], mu + np.sqrt(s2) * z[t], rtol=1e-12)


def test_vanishing_noise(rng, basis, sites):
    d = build_design(3, sites, basis)
    draws = fake_draws(rng, d, var_shift=30.0)
    pred = posterior_predictive(draws, d, rng)
    np.testing.assert_allclose(pred.y, pred.mu, atol=1e-5)


def test_summary_single_draw_and_levels(rng):
    s = summarize_predictive(np.array([[1.0, 2.0]]))
    assert s["sd_log"].tolist() == [0.0, 0.0] and s["lo"].tolist() == [1.0, 2.0]
    y = rng.normal(size=(400, 5))
    s95, s99 = summarize_predictive(y, 0.95), summarize_predictive(y, 0.99)
    assert np.all(s99["lo"] <= s95["lo"]) and np.all(s99["hi"] >= s95["hi"])


@pytest.mark.parametrize(
    "block, expected",
    [
        ([[C, C], [C, F]], C),
        ([[C, F], [F, C]], C),
        ([[W, W], [NA, O]], W),
        ([[NA, NA], [NA, NA]], NA),
        ([[O, F], [NA, NA]], F),
    ],
)
def test_aggregate_examples(block, expected):
    assert aggregate_landuse(np.array(block), 2).tolist() == [[expected]]


def test_aggregate_partial_edges_and_geometry():
    fine = np.array([[C, C, F], [C, F, F], [W, W, W]])
    out = aggregate_landuse(fine, 2)
    assert out.tolist() == [[C, F], [W, W]]
    r = aggregate_raster(LanduseRaster(fine, 10.0, 20.0, 1.0), 2)
    assert r.cellsize == 2.0 and r.xll == 10.0 and r.yll == 19.0
    assert aggregate_landuse(fine, 1).tolist() == fine.tolist()
    with pytest.raises(ParameterError):
        aggregate_landuse(fine, 0)


def test_raster_asc_round_trip_and_centers():
    r = LanduseRaster(np.array([[0, 1, -1], [3, 2, 0]]), 5.0, 7.0, 0.5)
    buf = io.StringIO()
    r.to_asc(buf)
    back = LanduseRaster.from_asc(io.StringIO(buf.getvalue()))
    np.testing.assert_array_equal(back.codes, r.codes)
    assert (back.xll, back.yll, back.cellsize) == (5.0, 7.0, 0.5)
    LON, LAT = r.cell_centers()
    assert LON[0].tolist() == [5.25, 5.75, 6.25]
    assert LAT[:, 0].tolist() == [7.75, 7.25]
    grid = PredictionGrid.from_raster(r)
    assert len(grid) == 5


def test_raster_bad_body():
    text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n0 1\n"
    with pytest.raises(DataError):
        LanduseRaster.from_asc(io.StringIO(text))
    text = "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n-9999\n"
    assert LanduseRaster.from_asc(io.StringIO(text)).codes.tolist() == [[-1]]


def test_fill_coeffs_nearest(sites):
    grid = PredictionGrid(np.array([sites.lon[3], 100.0]), np.array([sites.lat[3], 100.0]), np.array([0, 1]))
    filled = fill_coeffs(grid, sites)
    np.testing.assert_array_equal(filled[0], sites.coeffs[3])
    far = np.argmax(sites.lon + sites.lat)
    np.testing.assert_array_equal(filled[1], sites.coeffs[far])
    partial = PredictionGrid(grid.lon, grid.lat, grid.landuse, np.array([[9.0, 9.0], [np.nan, 0.0]]))
    out = fill_coeffs(partial, sites)
    assert out[0].tolist() == [9.0, 9.0]
    np.testing.assert_array_equal(out[1], sites.coeffs[far])


def test_predict_grid_zero_basis_cell(rng, basis, sites):
    d = build_design(2, sites, basis)
    draws = fake_draws(rng, d, T=30)
    grid = PredictionGrid(np.array([50.0, 1.0]), np.array([50.0, 1.0]), np.array([F, NA]))
    out = predict_grid(draws, grid, None, basis, 2, np.random.default_rng(0))
    assert len(out) == 1 and out["landuse"].tolist() == ["F"]
    fixed = draws.beta1[:, 1] + draws.beta1[:, 4] * 50 + draws.beta1[:, 5] * 50
    s2 = np.exp(-(draws.beta2[:, 1] + draws.beta2[:, 4] * 50 + draws.beta2[:, 5] * 50))
    z = np.random.default_rng(0).standard_normal((30, 1))[:, 0]
    assert out["mean"].iloc[0] == pytest.approx(np.mean(fixed + np.sqrt(s2) * z), rel=1e-12)
    assert {"lo95", "hi95", "exp_mean_log", "mean_exp"} <= set(out.columns)


def test_predict_grid_spectral_needs_reference(rng, basis, sites):
    d = build_design(5, sites, basis)
    draws = fake_draws(rng, d, T=5)
    grid = PredictionGrid(np.array([1.0]), np.array([1.0]), np.array([C]))
    with pytest.raises(DataError):
        predict_grid(draws, grid, None, basis, 5, rng)
    out = predict_grid(draws, grid, sites, basis, 5, rng, level=0.9)
    assert "lo90" in out.columns and out["n_draws"].iloc[0] == 5
