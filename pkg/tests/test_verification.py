import numpy as np
import pytest

from conftest import const_theta
from robust_forward import (ConvexSet, MonteCarloReport, SpatialGrid, comparison_check, constant_theta_model,
                            power_driver, risk_sensitive_rate, saddle_gap, section7_driver)
from robust_forward.drivers import running_payoff
from robust_forward.experiments import frozen_scenario_generator
from robust_forward.verification import (DominanceError, check_dominance, dominated_generator, log_mean_exp_rate,
                                         z_probes)


def test_judge_rules():
    ok = MonteCarloReport.judge("x", 1.01, 0.005, 100, 0, "equals", 1.0)
    assert ok.passed
    assert not MonteCarloReport.judge("x", 1.02, 0.005, 100, 0, "equals", 1.0).passed
    assert MonteCarloReport.judge("x", 1.02, 0.005, 100, 0, "equals", 1.0, abs_tol=0.05).passed
    assert MonteCarloReport.judge("x", 0.5, 0.0, 100, 0, "at_most", 1.0).passed
    deg = MonteCarloReport.judge("x", 0.3, 0.0, 100, 0, "equals", 0.3)
    assert deg.passed and deg.degenerate
    with pytest.raises(ValueError):
        MonteCarloReport.judge("x", 0.3, 0.1, 100, 0, "roughly", 0.3)


def test_log_mean_exp_of_constant():
    rate, se, ess = log_mean_exp_rate(np.full(50, 2.0), 4.0)
    assert rate == pytest.approx(0.5, abs=1e-15) and se == 0.0 and ess == pytest.approx(50)


def test_constant_strategies_have_deterministic_rate():
    m = constant_theta_model(theta=0.4)
    g = SpatialGrid.for_model(m)
    p, c = 0.6, -0.1
    want = float(running_payoff(0.5, 0.4, p, c))
    rep = risk_sensitive_rate(m, 0.5, p, c, grid=g, T=2.0, paths=200, dt=0.04, bound_kind="equals",
                              bound_value=want)
    assert rep.passed and abs(rep.estimate - want) <= 1e-12


def test_dominance_violation_names_witness(model1):
    m, d, g = model1
    with pytest.raises(DominanceError) as exc:
        check_dominance(dominated_generator(d), d, g, 1)
    assert exc.value.witness is not None


def test_dominated_pair_is_not_a_shift(model1):
    m, d, g = model1
    low = dominated_generator(d)
    V = g.points
    gaps = [d.evaluate(V, np.full((g.size, 1), z))[0] - low.evaluate(V, np.full((g.size, 1), z))[0]
            for z in z_probes(1)[:, 0]]
    gaps = np.concatenate(gaps)
    assert gaps.min() >= 0 and gaps.max() - gaps.min() > 1e-2


def test_frozen_scenario_dominates(model1, model1_vd):
    m, d, g = model1
    res = comparison_check(frozen_scenario_generator(d, model1_vd), d, g, model=m)
    assert res.passed and res.lam1 >= res.lam2 - 1e-4


def test_saddle_gap_examples():
    s7 = section7_driver(const_theta(-0.5))
    gap = saddle_gap(s7, [0.0], [0.3], 1e-3)
    assert gap.maxmin == pytest.approx(-0.12, abs=2e-3)
    assert gap.gap > 2e-3
    tanh = lambda v: 0.5 * np.tanh(np.atleast_2d(v))
    d = power_driver(tanh, 0.5, ConvexSet.box([-2.0], [2.0]), ConvexSet.box([-0.5], [0.5]))
    rng = np.random.default_rng(5)
    for _ in range(10):
        r = saddle_gap(d, rng.uniform(-2, 2, 1), rng.uniform(-1, 1, 1), 1e-2)
        assert -2e-2 <= r.gap <= 2e-2
