import math

import numpy as np
import pytest

import svhmc


def test_version():
    assert svhmc.__version__.count(".") == 2


def test_degenerate_families_match_gaussian():
    x = list(np.linspace(-4, 4, 41))
    gauss = svhmc.log_density("gaussian", 0.0, x)
    assert gauss[20] == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-14)
    assert svhmc.log_density("ged", 2.0, x) == pytest.approx(gauss, abs=1e-12)
    assert svhmc.log_density("skew-normal", 0.0, x) == pytest.approx(gauss, abs=1e-12)
    with pytest.raises(Exception):
        svhmc.log_density("student-t", 3.0, x)


def test_simulate_is_seeded():
    a = svhmc.simulate(-9.0, 0.95, 0.15, 200, seed=3)
    b = svhmc.simulate(-9.0, 0.95, 0.15, 200, seed=3)
    c = svhmc.simulate(-9.0, 0.95, 0.15, 200, seed=4)
    assert a["y"] == b["y"]
    assert a["y"] != c["y"]
    assert len(a["h"]) == 200


def test_waic_hand_example():
    loglik = np.log([[0.5], [0.25]])
    w = svhmc.waic(loglik)
    assert w["lpd"] == pytest.approx(math.log(0.375), abs=1e-12)
    assert w["p_waic"] == pytest.approx(np.var(loglik, ddof=1), abs=1e-12)


def test_identical_rows_give_lpd():
    row = np.array([-1.0, -2.0, -0.5])
    loglik = np.tile(row, (50, 1))
    w = svhmc.waic(loglik)
    loo = svhmc.psis_loo(loglik)
    assert w["p_waic"] == pytest.approx(0.0, abs=1e-12)
    assert loo["elpd"] == pytest.approx(row.sum(), abs=1e-12)
    assert w["elpd"] == pytest.approx(row.sum(), abs=1e-12)


def test_gpd_fit_exponential():
    rng = np.random.default_rng(11)
    k, sigma = svhmc.gpd_fit(list(rng.exponential(size=10000)))
    assert abs(k) < 0.05
    assert sigma == pytest.approx(1.0, rel=0.1)


def test_describe_and_prices():
    d = svhmc.describe([1.0, 2.0, 3.0, 4.0])
    assert d["T"] == 4
    assert d["kurtosis"] == pytest.approx(1.64)
    r = svhmc.returns_from_prices([100.0, 101.0])
    assert r[0] == pytest.approx(100 * math.log(1.01), rel=1e-14)
    with pytest.raises(ValueError):
        svhmc.describe([0.7] * 10)


def test_small_fit():
    y = svhmc.simulate(-9.0, 0.95, 0.15, 150, seed=5)["y"]
    r = svhmc.fit(y, warmup=300, draws=300, chains=2, seed=7)
    assert set(r["parameters"]) == {"mu", "phi", "sigma"}
    phi = r["parameters"]["phi"]
    assert phi["lower"] <= phi["mean"] <= phi["upper"]
    assert 0.0 < phi["mean"] < 1.0
    assert len(r["volatility"]["mean"]) == 150
    assert r["total_draws"] == 600
    assert len(r["criteria"]["pareto_k"]) == 150
    again = svhmc.fit(y, warmup=300, draws=300, chains=2, seed=7)
    assert again["parameters"] == r["parameters"]
