import warnings

import numpy as np
import pytest

from conftest import const_theta
from robust_forward import (ConvexSet, DriverSpec, UtilityClass, alpha_star, beta_star, driver_G, pi_star,
                            power_driver, section7_driver, u_star)
from robust_forward.drivers import (BranchWarning, RealizationSpec, driver_G_exp, driver_G_generic, driver_G_log,
                                    hamiltonian_F, realization_value)
from robust_forward.verification import brute_force_G

R1 = ConvexSet.unconstrained(1)


def test_hamiltonian_examples():
    d = power_driver(const_theta(0.2), 0.5, R1, ConvexSet.box([-1], [1]))
    assert hamiltonian_F(d, [0.0], [0.1], [0.0], [0.0]) == pytest.approx(0.005, abs=1e-15)
    s7 = section7_driver(const_theta(-0.5))
    assert hamiltonian_F(s7, [0.0], [0.3], [0.2], [1.0]) == pytest.approx(-0.12, abs=1e-15)


def test_hamiltonian_at_best_response_completes_square():
    rng = np.random.default_rng(0)
    d = power_driver(lambda v: 0.5 * np.tanh(np.atleast_2d(v)), 0.5, R1, ConvexSet.box([-1], [1]))
    for _ in range(20):
        v, z, u = rng.uniform(-2, 2, 1), rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 1)
        th = 0.5 * np.tanh(v)
        p = alpha_star(d, v, z, u)
        want = 0.5 * (th + z + u) ** 2 / (2 * (1 - 0.5)) + z * u + 0.5 * z * z
        assert hamiltonian_F(d, v, z, p, u) == pytest.approx(float(want[0]), abs=1e-14)


def test_alpha_star_examples():
    d = power_driver(const_theta(0.2), 0.5, R1, ConvexSet.box([-1], [1]))
    assert alpha_star(d, [0.0], [0.1], [0.1])[0] == pytest.approx(0.8)
    d = power_driver(const_theta(0.6), 0.5, ConvexSet.box([0], [1]), ConvexSet.box([-1], [1]))
    assert alpha_star(d, [0.0], [0.3], [0.3])[0] == 1.0


def test_u_star_interior_and_large_set():
    d = power_driver(const_theta(0.3), 0.5, R1, ConvexSet.box([-1], [1]), variant="model1")
    assert u_star(d, [0.0], [0.2])[0] == pytest.approx(-0.7, abs=1e-15)
    big = power_driver(lambda v: 0.5 * np.tanh(np.atleast_2d(v)), 0.5, R1, ConvexSet.ball([0.0], 10.0),
                       variant="model1")
    v, z = np.array([[0.7], [-1.3]]), np.array([[0.2], [-0.4]])
    np.testing.assert_allclose(u_star(big, v, z), -0.5 * np.tanh(v) - z / 0.5, atol=1e-15)
    np.testing.assert_allclose(pi_star(big, v, np.zeros_like(z)), 0.0, atol=1e-15)


def test_beta_star_of_pi_star_is_u_star():
    d = power_driver(lambda v: 0.5 * np.tanh(np.atleast_2d(v)), 0.5, R1, ConvexSet.box([-0.2], [0.2]),
                     variant="model1")
    v = np.linspace(-2, 2, 9)[:, None]
    z = np.linspace(-0.5, 0.5, 9)[:, None]
    np.testing.assert_allclose(beta_star(d, v, z, pi_star(d, v, z)), u_star(d, v, z), atol=1e-14)


def test_driver_G_model1_matches_oracle():
    # dist(U, -theta - z/delta) = 0 here, so only the quadratic cross terms remain
    d = power_driver(const_theta(0.3), 0.5, R1, ConvexSet.box([-1], [1]), variant="model1")
    g = float(driver_G(d, [0.0], [0.2]))
    assert g == pytest.approx(-0.10, abs=1e-14)
    assert g == pytest.approx(float(driver_G_generic(d, [0.0], [0.2])), abs=1e-12)
    assert g == pytest.approx(brute_force_G(d, [0.0], [0.2]), abs=1e-3)


def test_driver_G_without_uncertainty():
    d = power_driver(const_theta(0.4), 0.5, R1, ConvexSet.origin(1), variant="model1")
    assert float(driver_G(d, [0.0], [0.2])) == pytest.approx(0.20, abs=1e-14)
    assert brute_force_G(d, [0.0], [0.2]) == pytest.approx(0.20, abs=1e-6)


def test_section7_example_point():
    s7 = section7_driver(const_theta(-0.5))
    assert float(driver_G(s7, [0.0], [0.3])) == pytest.approx(-0.12, abs=1e-15)
    assert pi_star(s7, [0.0], [0.3])[0] == pytest.approx(0.2, abs=1e-15)
    assert beta_star(s7, [0.0], [0.3], [0.2])[0] == 1.0
    assert brute_force_G(s7, [0.0], [0.3]) == pytest.approx(-0.12, abs=2e-3)


def test_section7_tie_breaks_to_upper_scenario():
    s7 = section7_driver(const_theta(-0.5))
    assert beta_star(s7, [0.0], [0.25], [0.25])[0] == 1.0


def test_section7_out_of_range_branch_warns_and_projects():
    s7 = section7_driver(const_theta(-0.9))
    with pytest.warns(BranchWarning):
        p = pi_star(s7, [0.0], [0.9])
    assert 0.0 <= p[0] <= 1.0


def test_log_and_exponential_drivers():
    d = power_driver(const_theta(0.4), 0.5, R1, ConvexSet.origin(1))
    assert float(driver_G_log(d, [0.0], [0.7])) == pytest.approx(0.08, abs=1e-14)
    ex = DriverSpec(UtilityClass.exponential(2.0), R1, ConvexSet.origin(1), const_theta(0.4))
    assert float(driver_G_exp(d, [0.0], [0.2], gamma=2.0)) == pytest.approx(brute_force_G(ex, [0.0], [0.2]), abs=1e-3)
    sym = DriverSpec(UtilityClass.log(), R1, ConvexSet.box([-0.3], [0.3]), const_theta(0.4))
    assert float(driver_G_log(sym, [0.0], [0.0])) == pytest.approx(brute_force_G(sym, [0.0], [0.0]), abs=1e-3)


def test_oracle_linear_scenario_minimisation():
    d = power_driver(const_theta(0.4), 0.5, ConvexSet.origin(1), ConvexSet.box([-1], [1]))
    assert brute_force_G(d, [0.0], [0.2]) == pytest.approx(-0.18, abs=1e-12)


def test_evaluate_gradient_matches_differences():
    d = power_driver(lambda v: 0.5 * np.tanh(np.atleast_2d(v)), 0.5, R1, ConvexSet.box([-0.2], [0.2]),
                     variant="model1")
    v = np.linspace(-2, 2, 41)[:, None]
    z = np.linspace(-1, 1, 41)[:, None]
    _, dg = d.evaluate(v, z)
    eps = 1e-6
    fd = (d.evaluate(v, z + eps)[0] - d.evaluate(v, z - eps)[0]) / (2 * eps)
    np.testing.assert_allclose(dg[:, 0], fd, atol=1e-6)


def test_realization_value():
    t = np.linspace(0, 2, 201)
    spec = RealizationSpec()
    assert realization_value(spec, np.zeros_like(t), t, 0.0, 2.0) == 0.0
    assert realization_value(spec, np.ones_like(t), t, 0.0, 2.0) == pytest.approx(1.0, abs=1e-14)
