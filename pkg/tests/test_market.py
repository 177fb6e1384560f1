import numpy as np
import pytest

from robust_forward import (ConvexSet, FactorModelSpec, MeasureShift, constant_theta_model, ou_tanh_model,
                            scalar_theta_model, simulate_factor, simulate_wealth, validate_assumptions)
from robust_forward.market import RankDeficiencyError, market_price_of_risk, well_posedness_threshold
from robust_forward import rng


def _spec(b, sigma, d=2, n=1, a=1.0):
    return FactorModelSpec(dim_factor=d, dim_noise=d, dim_stocks=n, eta=lambda v: -a * np.asarray(v),
                           kappa=np.eye(d), b=b, sigma=sigma, theta_bound=1.0, theta_lipschitz=1.0,
                           dissipativity=a)


def test_price_of_risk_pseudo_inverse():
    s = _spec(lambda v: np.full((v.shape[0], 1), 0.1), lambda v: np.tile([[[0.2, 0.0]]], (v.shape[0], 1, 1)))
    np.testing.assert_allclose(market_price_of_risk(s, [0.3, -1.0]), [0.5, 0.0], atol=1e-15)


def test_price_of_risk_zero_drift_and_identity_vol():
    zero = _spec(lambda v: np.zeros((v.shape[0], 1)), lambda v: np.tile([[[0.2, 0.1]]], (v.shape[0], 1, 1)))
    np.testing.assert_array_equal(market_price_of_risk(zero, [1.0, 2.0]), [0.0, 0.0])
    ident = _spec(lambda v: np.column_stack([np.sin(v[:, 0]), v[:, 1] ** 2]),
                  lambda v: np.broadcast_to(np.eye(2), (v.shape[0], 2, 2)), n=2)
    np.testing.assert_allclose(market_price_of_risk(ident, [0.4, 1.5]), [np.sin(0.4), 2.25], rtol=1e-14)


def test_price_of_risk_singular_names_state():
    s = _spec(lambda v: np.full((v.shape[0], 1), 0.1), lambda v: np.zeros((v.shape[0], 1, 2)))
    with pytest.raises(RankDeficiencyError, match="0.7"):
        market_price_of_risk(s, [0.7, 0.0])


def test_empirical_dissipativity_of_linear_drift():
    m = ou_tanh_model(a=1.5)
    rep = validate_assumptions(m, 0.5, ConvexSet.box([-0.2], [0.2]))
    assert abs(rep.c_eta_empirical - 1.5) <= 1e-9


def test_well_posedness_threshold():
    assert well_posedness_threshold(0.5, 0.5, 0.5, 1.0) == pytest.approx(2.25)
    tanh = lambda v: 0.5 * np.tanh(np.atleast_2d(v))
    ball = ConvexSet.ball([0.0], 1.0)
    assert validate_assumptions(scalar_theta_model(tanh, 0.5, 0.5, a=3.0), 0.5, ball).passed
    assert not validate_assumptions(scalar_theta_model(tanh, 0.5, 0.5, a=1.0), 0.5, ball).passed


@pytest.fixture(scope="module")
def unit_ou():
    return constant_theta_model(theta=0.3, a=1.0)


def test_stationary_moments(unit_ou):
    P = 4000
    ens = simulate_factor(unit_ou, MeasureShift.base(), 10.0, 0.01, P, seed=3)
    vT = ens.factor[:, -1, 0]
    assert abs(vT.mean()) <= 3 * vT.std(ddof=1) / np.sqrt(P)
    var_se = vT.var(ddof=1) * np.sqrt(2.0 / (P - 1))
    assert abs(vT.var(ddof=1) - 0.5) <= 3 * var_se


def test_scenario_shifts_stationary_mean(unit_ou):
    P = 4000
    shift = MeasureShift.scenario(lambda v: np.full((v.shape[0], 1), 0.4))
    vT = simulate_factor(unit_ou, shift, 10.0, 0.01, P, seed=4).factor[:, -1, 0]
    assert abs(vT.mean() - 0.4) <= 3 * vT.std(ddof=1) / np.sqrt(P)


def test_scenario_equals_base_with_manual_drift(unit_ou):
    c = 0.4
    shift = MeasureShift.scenario(lambda v: np.full((v.shape[0], 1), c))
    ens = simulate_factor(unit_ou, shift, 1.0, 0.01, 50, seed=5)
    V = np.zeros((50, 1))
    ids = np.arange(50)
    for j in range(100):
        xi = rng.normals(5, ids, j, 1)
        V = V + (unit_ou.eta(V) + np.full((50, 1), c) @ unit_ou.kappa.T) * 0.01 + (xi * 0.1) @ unit_ou.kappa.T
    assert np.array_equal(V, ens.factor[:, -1])


def test_factor_determinism_and_prefix(unit_ou):
    a = simulate_factor(unit_ou, MeasureShift.base(), 1.0, 0.01, 64, seed=9)
    b = simulate_factor(unit_ou, MeasureShift.base(), 1.0, 0.01, 64, seed=9)
    c = simulate_factor(unit_ou, MeasureShift.base(), 1.0, 0.01, 16, seed=9)
    assert a.factor.tobytes() == b.factor.tobytes()
    assert np.array_equal(a.factor[:16], c.factor)


def test_stationarity_proxy():
    m = ou_tanh_model(a=2.0)
    P = 4000
    e = simulate_factor(m, MeasureShift.base(), 40.0, 0.02, P, seed=11)
    v20, v40 = e.factor[:, 1000, 0], e.factor[:, 2000, 0]
    se = np.sqrt((v20.var() + v40.var()) / P)
    assert abs(v20.mean() - v40.mean()) <= 3 * se
    var_se = np.sqrt(2.0 / P) * (v20.var() + v40.var()) / np.sqrt(2)
    assert abs(v20.var() - v40.var()) <= 3 * var_se


def test_zero_portfolio_keeps_wealth(unit_ou):
    shift = MeasureShift.base()
    ens = simulate_factor(unit_ou, shift, 1.0, 0.01, 20, seed=1)
    w = simulate_wealth(ens, unit_ou, lambda v: np.zeros((v.shape[0], 1)), shift, 2.5)
    assert np.all(w.wealth == 2.5)


def test_gbm_log_mean_and_positivity(unit_ou):
    P, p, T = 20000, 0.8, 1.0
    shift = MeasureShift.base()
    ens = simulate_factor(unit_ou, shift, T, 0.01, P, seed=2)
    w = simulate_wealth(ens, unit_ou, lambda v: np.full((v.shape[0], 1), p), shift, 1.0)
    assert w.wealth.min() > 0
    lx = np.log(w.wealth[:, -1])
    assert abs(lx.mean() - (p * 0.3 - 0.5 * p * p) * T) <= 3 * lx.std(ddof=1) / np.sqrt(P)


def test_power_moment_equals_running_payoff(unit_ou):
    P, p, c, d, T = 20000, 0.8, -0.1, 0.5, 1.0
    shift = MeasureShift.scenario(lambda v: np.full((v.shape[0], 1), c))
    ens = simulate_factor(unit_ou, shift, T, 0.01, P, seed=6)
    w = simulate_wealth(ens, unit_ou, lambda v: np.full((v.shape[0], 1), p), shift, 1.0)
    xd = w.wealth[:, -1] ** d
    est = np.log(xd.mean()) / T
    se = xd.std(ddof=1) / np.sqrt(P) / xd.mean() / T
    target = d * p * (0.3 + c) - 0.5 * d * (1 - d) * p * p
    assert abs(est - target) <= 3 * se


def test_wealth_rejects_foreign_shift(unit_ou):
    ens = simulate_factor(unit_ou, MeasureShift.base(), 0.1, 0.01, 4, seed=0)
    with pytest.raises(ValueError):
        simulate_wealth(ens, unit_ou, lambda v: np.zeros((v.shape[0], 1)), MeasureShift.base(), 1.0)
    with pytest.raises(ValueError):
        simulate_wealth(ens, unit_ou, lambda v: np.zeros((v.shape[0], 1)), ens.shift, 0.0)
