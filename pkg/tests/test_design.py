import numpy as np
import pytest

from mlgspatial.basis import generate_knots
from mlgspatial.design import (
    DesignSet,
    Hyperparams,
    SiteTable,
    build_design,
    check_model,
    variant_table,
)
from mlgspatial.exceptions import DataError, ParameterError


@pytest.fixture
def sites(rng):
    n = 30
    return SiteTable(
        np.arange(n),
        rng.uniform(0, 10, n),
        rng.uniform(0, 7, n),
        np.arange(n) % 4,
        rng.normal(size=n),
        rng.normal(size=(n, 9)),
    )


@pytest.fixture
def basis76():
    return generate_knots((0, 0, 10, 7))


def test_model1_columns(sites, basis76):
    d = build_design(1, sites, basis76)
    assert d.dims == {"p1": 6, "r1": 0, "p2": 1, "r2": 0}
    assert d.labels["beta2"] == ["intercept"]


def test_model5_and_6_columns(sites, basis76):
    assert build_design(5, sites, basis76).dims == {"p1": 15, "r1": 380, "p2": 6, "r2": 76}
    assert build_design(6, sites, basis76).dims["r2"] == 380


@pytest.mark.parametrize("model", range(1, 7))
def test_indicators_and_unique_columns(model, sites, basis76):
    d = build_design(model, sites, basis76)
    np.testing.assert_array_equal(d.X1[:, :4].sum(axis=1), 1.0)
    labels = d.labels["beta1"] + d.labels["eta1"]
    assert len(set(labels)) == len(labels)
    assert all(M.shape[0] == len(sites) for M in (d.X1, d.Psi1, d.X2, d.Psi2))


def test_model_nesting(sites, basis76):
    d3, d5 = build_design(3, sites, basis76), build_design(5, sites, basis76)
    np.testing.assert_array_equal(d5.X1[:, :6], d3.X1)
    np.testing.assert_array_equal(d5.Psi1, d3.Psi1)
    d2, d4 = build_design(2, sites, basis76), build_design(4, sites, basis76)
    np.testing.assert_array_equal(d4.Psi2[:, :76], d2.Psi2)


def test_permutation_equivariance(sites, basis76, rng):
    perm = rng.permutation(len(sites))
    a = build_design(6, sites, basis76)
    b = build_design(6, sites.subset(perm), basis76)
    for name in ("X1", "Psi1", "X2", "Psi2"):
        np.testing.assert_array_equal(getattr(b, name), getattr(a, name)[perm])


def test_missing_inputs(sites, basis76):
    with pytest.raises(DataError):
        build_design(5, sites.with_coeffs(None), basis76)
    no_y = SiteTable(sites.ids, sites.lon, sites.lat, sites.landuse)
    with pytest.raises(DataError):
        build_design(2, no_y, basis76, require_y=True)
    with pytest.raises(ParameterError):
        check_model(7)


def test_site_table_invariants():
    with pytest.raises(DataError):
        SiteTable([1, 1], [0, 0], [0, 0], [0, 0])
    with pytest.raises(DataError):
        SiteTable([1], [0], [0], [-1])


def test_centering(sites, basis76):
    d = build_design(2, sites, basis76, center=(5.0, 3.0))
    np.testing.assert_allclose(d.X1[:, 4], sites.lon - 5.0)


def test_variant_table():
    table = variant_table()
    assert len(table) == 6
    by_id = {row["model"]: row for row in table}
    same = ("Psi1", "X2", "Psi2", "heteroscedastic")
    assert all(by_id[3][k] == by_id[5][k] for k in same)
    assert "spectral" in by_id[5]["X1"] and "spectral" not in by_id[3]["X1"]
    assert not by_id[1]["heteroscedastic"]


def test_hyperparams_defaults_and_validation():
    h = Hyperparams()
    assert (h.alpha_mlg, h.sigma2_beta1, h.sigma2_beta2, h.a, h.b, h.w, h.p) == (1000, 1000, 1000, 0.5, 0.5, 1000, 1000)
    with pytest.raises(ParameterError):
        Hyperparams(a=0)


def test_empty_design(basis76):
    empty = SiteTable(np.zeros(0, dtype=int), [], [], [])
    d = build_design(3, empty, basis76)
    assert isinstance(d, DesignSet) and d.n == 0 and d.dims["r1"] == 380
