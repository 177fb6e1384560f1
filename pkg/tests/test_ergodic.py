import warnings

import numpy as np
import pytest

from conftest import const_theta
from robust_forward import (ConvexSet, GridOperators, MarkovianSolutionField, ShiftedGenerator, SpatialGrid,
                            UtilityClass, constant_theta_model, extract_z, forward_process_value, ou_tanh_model,
                            power_driver, single_stock_factor_model, solve_discounted,
                            solve_ergodic_false_transient, solve_ergodic_vanishing_discount)
from robust_forward.ergodic import CFLError, ExtrapolationWarning, constant_generator

R1 = ConvexSet.unconstrained(1)


@pytest.fixture(scope="module")
def ou():
    m = ou_tanh_model()
    return m, SpatialGrid.for_model(m)


def test_grid_requires_enough_nodes():
    with pytest.raises(ValueError):
        SpatialGrid([-1.0], [1.0], [50])


def test_extract_z_of_quadratic(ou):
    m, g = ou
    v = g.points[:, 0]
    z, _ = extract_z(v**2, g, [[1.0]])
    np.testing.assert_allclose(z[:, 0], 2 * v, atol=10 * g.h[0] ** 2)
    z, sup = extract_z(np.full(g.size, 3.7), g, [[1.0]])
    assert sup <= 1e-12


def test_interpolation_2d_is_exact_for_bilinear():
    g = SpatialGrid([-1.0, -2.0], [1.0, 2.0], [101, 101])
    f = lambda p: 1.0 + 2 * p[:, 0] - p[:, 1] + 0.5 * p[:, 0] * p[:, 1]
    q = np.random.default_rng(0).uniform([-1, -2], [1, 2], (50, 2))
    np.testing.assert_allclose(g.interpolate(f(g.points), q), f(q), atol=1e-12)


def test_generator_annihilates_constants_and_is_exact_on_linear(ou):
    m, g = ou
    ops = GridOperators(g)
    L = ops.generator(m.kappa, m.eta(g.points))
    inside = g.interior
    assert np.max(np.abs((L @ np.ones(g.size))[inside])) < 1e-12
    v = g.points[:, 0]
    np.testing.assert_allclose((L @ v)[inside], m.eta(g.points)[inside, 0], atol=1e-10)


def test_discounted_constant_driver(ou):
    m, g = ou
    f = solve_discounted(constant_generator(0.3, 1), g, 0.05, model=m)
    np.testing.assert_allclose(f.y_rho, 0.3 / 0.05, rtol=1e-10)


def test_discounted_large_uncertainty_vanishes(ou):
    m, g = ou
    d = power_driver(m.theta, 0.5, R1, ConvexSet.ball([0.0], 1.5), variant="model1")
    assert np.max(np.abs(solve_discounted(d, g, 0.1, model=m).y_rho)) <= 1e-8


def test_discounted_rate_near_ergodic_constant(model1, model1_ft):
    m, d, g = model1
    f = solve_discounted(d, g, 0.05, model=m)
    assert abs(0.05 * g.interpolate(f.y_rho, m.fixed_point)[0] - model1_ft.lam) <= 1e-2


def test_constant_driver_both_methods(ou):
    m, g = ou
    G = constant_generator(0.25, 1)
    for f in (solve_ergodic_vanishing_discount(G, g, model=m), solve_ergodic_false_transient(G, g, model=m)):
        assert f.lam == pytest.approx(0.25, abs=1e-10)
        assert np.max(np.abs(f.y)) <= 1e-8


def test_nonrobust_analytic_rate():
    m = constant_theta_model(theta=0.4)
    g = SpatialGrid.for_model(m)
    d = power_driver(m.theta, 0.5, R1, ConvexSet.origin(1), variant="model1")
    for f in (solve_ergodic_vanishing_discount(d, g, model=m), solve_ergodic_false_transient(d, g, model=m)):
        assert abs(f.lam - 0.08) <= 1e-4
        assert np.max(np.abs(f.y)) <= 1e-6 and np.max(np.abs(f.z)) <= 1e-6


def test_model1_cross_method(model1_vd, model1_ft):
    assert abs(model1_vd.lam - model1_ft.lam) <= 1e-3
    assert abs(model1_vd.y_at(model1_vd.v0)[0]) <= 1e-14
    h = model1_vd.grid.h[0]
    assert model1_vd.residual_norm <= 10 * h**2


def test_model2_cross_method():
    m = single_stock_factor_model()
    g = SpatialGrid.for_model(m)
    line = ConvexSet.slab([-np.inf, 0.0], [np.inf, 0.0])
    d = power_driver(m.theta, 0.5, line, ConvexSet.ordered_box(0.2), variant="model2")
    vd = solve_ergodic_vanishing_discount(d, g, model=m)
    ft = solve_ergodic_false_transient(d, g, model=m)
    assert abs(vd.lam - ft.lam) <= 1e-3


def test_shift_equivariance(model1, model1_vd):
    m, d, g = model1
    sh = solve_ergodic_vanishing_discount(ShiftedGenerator(d, 0.3), g, model=m)
    assert abs(sh.lam - model1_vd.lam - 0.3) <= 1e-4
    assert np.max(np.abs(sh.y - model1_vd.y)) <= 1e-6


def test_grid_refinement_is_consistent(model1):
    m, d, _ = model1
    lams = [solve_ergodic_vanishing_discount(d, SpatialGrid.for_model(m, n=n), model=m).lam for n in (101, 201, 401)]
    assert abs(lams[2] - lams[1]) <= 4 * abs(lams[1] - lams[0]) + 1e-12


def test_schedule_validation(model1):
    m, d, g = model1
    with pytest.raises(ValueError):
        solve_ergodic_vanishing_discount(d, g, (0.1, 0.2, 0.01), model=m)
    with pytest.raises(ValueError):
        solve_ergodic_vanishing_discount(d, g, (0.2, 0.05), model=m)


def test_false_transient_rejects_large_step(model1):
    m, d, g = model1
    with pytest.raises(CFLError):
        solve_ergodic_false_transient(d, g, dt=1.0, model=m)


def _zero_field(g):
    return MarkovianSolutionField(g, np.zeros(g.size), np.zeros((g.size, 1)), 0.0, np.zeros(1), "test", 0.0, 0.0)


def test_forward_process_value_examples(ou, model1_vd):
    _, g = ou
    zero = _zero_field(g)
    assert forward_process_value(UtilityClass.power(0.5), 1.0, 0.0, [0.3], zero) == pytest.approx(2.0)
    f = model1_vd
    assert forward_process_value(UtilityClass.log(), 1.0, 0.0, [0.7], f) == pytest.approx(f.y_at([0.7])[0])


def test_forward_process_warns_off_grid(ou):
    _, g = ou
    with pytest.warns(ExtrapolationWarning):
        forward_process_value(UtilityClass.power(0.5), 1.0, 0.0, [g.upper[0] + 1.0], _zero_field(g))
