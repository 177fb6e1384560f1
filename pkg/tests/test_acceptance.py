"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Tolerances and runtime budgets are the contract values; nothing here is loosened.
"""

import json
import time

import numpy as np
import pytest

from robust_forward import (ConvexSet, ShiftedGenerator, SpatialGrid, comparison_check, constant_theta_model,
                            driver_G, ergodic_limit, forward_process_value, lower_value, martingale_check,
                            ou_tanh_model, pi_star, power_driver, risk_sensitive_rate, saddle_gap,
                            solve_ergodic_false_transient,
                            solve_ergodic_vanishing_discount, solve_finite_horizon, u_star)
from robust_forward import cli
from robust_forward.config import EXPERIMENTS, load_config
from robust_forward.drivers import _F, beta_star
from robust_forward.experiments import FIXTURES, build_fixture, _section7_theta
from robust_forward.verification import (brute_force_G, concavity_check, dominated_generator, optimal_feedback,
                                         portfolio_response, scenario_response)
from robust_forward import section7_driver

R1 = ConvexSet.unconstrained(1)
DELTA = 0.5
PATHS = 100_000


@pytest.fixture
def report(capsys):
    start = time.perf_counter()

    def emit(n, passed, detail, budget, elapsed=None):
        elapsed = time.perf_counter() - start if elapsed is None else elapsed
        ok = bool(passed) and elapsed < budget
        with capsys.disabled():
            print(f"\ncriterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f} s / budget {budget:g} s]")
        assert passed, detail
        assert elapsed < budget, f"runtime {elapsed:.1f} s exceeds {budget:g} s"

    return emit


def _model1():
    m = ou_tanh_model(a=2.0, theta_max=0.5)
    d = power_driver(m.theta, DELTA, R1, ConvexSet.box([-0.2], [0.2]), variant="model1")
    return m, d, SpatialGrid.for_model(m)


def test_criterion_01_analytic_rate(report):
    m = constant_theta_model(theta=0.4)
    g = SpatialGrid.for_model(m)
    d = power_driver(m.theta, DELTA, R1, ConvexSet.origin(1), variant="model1")
    exact = DELTA * 0.4**2 / (2 * (1 - DELTA))
    errs = []
    for f in (solve_ergodic_vanishing_discount(d, g, model=m), solve_ergodic_false_transient(d, g, model=m)):
        errs.append((abs(f.lam - exact), np.max(np.abs(f.y)), np.max(np.abs(f.z))))
    ok = all(e[0] <= 1e-4 and e[1] <= 1e-6 and e[2] <= 1e-6 for e in errs)
    detail = "; ".join(f"|dlam|={a:.1e} |y|={b:.1e} |z|={c:.1e}" for a, b, c in errs)
    report(1, ok, f"lambda=0.08 analytic ({detail})", 10)


def test_criterion_02_large_uncertainty(report):
    m = ou_tanh_model()
    g = SpatialGrid.for_model(m)
    radius = m.theta_bound + 1.0  # >= K_theta + K_z/delta for the zero solution
    d = power_driver(m.theta, DELTA, R1, ConvexSet.ball([0.0], radius), variant="model1")
    ok, parts = True, []
    for f in (solve_ergodic_vanishing_discount(d, g, model=m), solve_ergodic_false_transient(d, g, model=m)):
        V = g.points
        pim = np.max(np.abs(pi_star(d, V, f.z)))
        uerr = np.max(np.abs(u_star(d, V, f.z) + m.theta(V)))
        zm = np.max(np.abs(f.z))
        ok &= abs(f.lam) <= 1e-6 and zm <= 1e-6 and pim == 0.0 and uerr <= 1e-6
        parts.append(f"{f.method}: lam={f.lam:.1e} |z|={zm:.1e} |pi*|={pim:.1e} |u*+theta|={uerr:.1e}")
    report(2, ok, "; ".join(parts), 10)


def test_criterion_03_vanishing_discount_trajectory(report):
    m, d, g = _model1()
    f = solve_ergodic_vanishing_discount(d, g, (0.2, 0.1, 0.05, 0.02, 0.01), model=m)
    e_first = abs(f.rho_trace[0][1] - f.lam)
    e_last = abs(f.rho_trace[-1][1] - f.lam)
    report(3, e_last <= 1e-3 and e_last < e_first,
           f"|rho y(v0) - lam| at rho=0.01: {e_last:.2e}, at rho=0.2: {e_first:.2e}", 60)


def test_criterion_04_driver_oracle(report):
    rng = np.random.default_rng(2024)
    cfg = load_config()
    worst = {}
    fixtures = {
        "model1": build_fixture(cfg, "model1").driver,
        "model2": build_fixture(cfg, "model2").driver,
        "section7": section7_driver(_section7_theta(1.0)),
    }
    for name, d in fixtures.items():
        zdim = 2 if name == "model2" else 1
        err = 0.0
        for _ in range(100):
            v = rng.uniform(-3, 3, 1)
            z = rng.uniform(-1, 1, zdim)
            err = max(err, abs(brute_force_G(d, v, z, 1e-3) - float(driver_G(d, v, z))))
        worst[name] = err
    s7 = section7_driver(lambda v: np.full((np.atleast_2d(v).shape[0], 1), -0.5))
    maxmin = brute_force_G(s7, [0.0], [0.3], 1e-3)
    # oracle best response: exhaustive grids over both players
    grid = np.linspace(0, 1, 1001)[:, None]
    P, U = np.meshgrid(grid[:, 0], grid[:, 0], indexing="ij")
    M = _F(s7, np.zeros((P.size, 1)), np.full((P.size, 1), 0.3), P.reshape(-1, 1), U.reshape(-1, 1)).reshape(P.shape)
    i = int(np.argmax(M.min(axis=1)))
    pi_o = grid[i, 0]
    # pi + z = 1/2 here, so u = 0 and u = 1 tie; the branch rule selects u = 1
    minimizers = grid[np.abs(M[i] - M[i].min()) <= 1e-12, 0]
    beta_cf = float(beta_star(s7, [0.0], [0.3], [0.2])[0])
    ok = (all(e <= 2e-3 for e in worst.values()) and abs(maxmin + 0.12) <= 2e-3 and abs(pi_o - 0.2) <= 2e-3
          and np.any(np.abs(minimizers - 1.0) <= 2e-3) and beta_cf == 1.0)
    detail = ", ".join(f"{k} max err {v:.1e}" for k, v in worst.items())
    report(4, ok, f"{detail}; section7 maxmin={maxmin:.4f} pi={pi_o:.3f} "
                  f"oracle beta minimizers {minimizers.tolist()} -> beta*={beta_cf:g}", 60)


def test_criterion_05_martingale_suite(report):
    m, d, g = _model1()
    f = solve_ergodic_vanishing_discount(d, g, model=m)
    ps, us = optimal_feedback(d, f)
    reps = [martingale_check(f, d, m, ps, us, "equals", paths=PATHS, seed=1)]
    opt = reps[0]
    for i, p in enumerate((-1.0, -0.5, 0.0, 0.5, 1.0)):
        reps.append(martingale_check(f, d, m, p, scenario_response(d, f, p), "at_most", paths=PATHS, seed=10 + i))
    for i, c in enumerate((-0.2, -0.1, 0.0, 0.1, 0.2)):
        reps.append(martingale_check(f, d, m, portfolio_response(d, f, c), c, "at_least", paths=PATHS, seed=20 + i))
    ok = all(r.passed for r in reps) and abs(opt.estimate - 1.0) <= 1e-2
    bad = [f"{r.bound_kind}:{r.estimate:.4f}" for r in reps if not r.passed]
    report(5, ok, f"ratio(pi*,u*)={opt.estimate:.5f}+-{opt.std_error:.1e}; "
                  f"deviations {sum(r.passed for r in reps[1:])}/10; failures {bad}", 180)


def test_criterion_06_risk_sensitive_game(report):
    m, d, g = _model1()
    f = solve_ergodic_vanishing_discount(d, g, model=m)
    ps, us = optimal_feedback(d, f)
    kw = dict(grid=g, T=20.0, paths=PATHS, dt=0.04, bound_value=f.lam)
    opt = risk_sensitive_rate(m, DELTA, ps, us, seed=1, bound_kind="equals", abs_tol=5e-2, **kw)
    reps = [opt]
    for i, c in enumerate((-0.2, -0.1, 0.0, 0.1, 0.2)):
        reps.append(risk_sensitive_rate(m, DELTA, ps, c, seed=10 + i, bound_kind="at_least", **kw))
    for i, p in enumerate((0.0, 0.25, 0.5, 1.0, 2.0)):
        reps.append(risk_sensitive_rate(m, DELTA, p, us, seed=20 + i, bound_kind="at_most", **kw))
    ok = all(r.passed for r in reps)
    report(6, ok, f"rate(pi*,u*)={opt.estimate:.5f} (SE {opt.std_error:.1e}) vs lambda={f.lam:.5f}; "
                  f"sandwich {sum(r.passed for r in reps[1:])}/10", 180)


def test_criterion_07_comparison(report):
    m, d, g = _model1()
    base = solve_ergodic_vanishing_discount(d, g, model=m)
    shifted = solve_ergodic_vanishing_discount(ShiftedGenerator(d, 0.3), g, model=m)
    shift_err = abs(shifted.lam - base.lam - 0.3)
    cmp = comparison_check(d, dominated_generator(d), g, model=m)
    report(7, shift_err <= 1e-4 and cmp.passed,
           f"shift error {shift_err:.1e}; dominated pair lambda1={cmp.lam1:.5f} >= lambda2={cmp.lam2:.5f}", 60)


def test_criterion_08_horizon_convergence(report):
    m, d, g = _model1()
    f = solve_ergodic_vanishing_discount(d, g, model=m)
    rep = ergodic_limit(d, g, f, (2, 4, 6, 8, 10), model=m)
    cauchy = abs(rep.l_hat_v0[-1] - rep.l_hat_v0[-2])
    spread = rep.spread[-1]
    fh = solve_finite_horizon(d, g, 10.0, model=m)
    states = np.vstack([f.v0[None, :], rep.states])
    ratio = (lower_value(DELTA, 1.0, states, fh) * np.exp(-f.lam * 10 - rep.limit)
             / forward_process_value(d.utility, 1.0, 0.0, states, f))
    ok = cauchy <= 1e-3 and spread <= 1e-3 and ratio.min() >= 0.999 and ratio.max() <= 1.001
    report(8, ok, f"|L(10)-L(8)|={cauchy:.1e}, spread={spread:.1e}, ratio in [{ratio.min():.6f}, {ratio.max():.6f}]",
           120)


def test_criterion_09_saddle_structure(report):
    rng = np.random.default_rng(9)
    m = ou_tanh_model()
    d = power_driver(m.theta, DELTA, ConvexSet.box([-2.0], [2.0]), ConvexSet.box([-0.2], [0.2]))
    res = 1e-2
    gaps = [saddle_gap(d, rng.uniform(-3, 3, 1), rng.uniform(-1, 1, 1), res).gap for _ in range(100)]
    n = 500
    th = rng.uniform(-1, 0, (n, 1))
    s7 = section7_driver(lambda v: th[: np.atleast_2d(v).shape[0]])
    d2p, d2u = concavity_check(s7, np.zeros((n, 1)), rng.uniform(-1, 1, (n, 1)), rng.uniform(0.01, 0.99, (n, 1)),
                               rng.uniform(0.01, 0.99, (n, 1)))
    worst = float(max(d2p.max(), d2u.max()))
    ok = max(gaps) <= 2 * res and min(gaps) >= -2 * res and worst <= 0.0
    report(9, ok, f"power gap in [{min(gaps):.1e}, {max(gaps):.1e}]; section7 max second difference {worst:.1e}", 60)


def _tree(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_criterion_10_determinism_and_cross_method(report, tmp_path):
    codes, identical, lam_gaps = {}, {}, {}
    t0 = time.perf_counter()
    for exp in EXPERIMENTS:
        a = tmp_path / f"{exp}_a"
        codes[exp] = cli.main(["run", exp, "--out", str(a), "--seed", "0"])
        if exp in FIXTURES:
            s = json.loads((a / "summary.json").read_text())
            lam_gaps[exp] = abs(s["lambda"] - s["lambda_false_transient"])
    suite = time.perf_counter() - t0
    for exp in EXPERIMENTS:
        b = tmp_path / f"{exp}_b"
        cli.main(["run", exp, "--out", str(b), "--seed", "0"])
        identical[exp] = _tree(tmp_path / f"{exp}_a") == _tree(b)
    ok = all(c == 0 for c in codes.values()) and all(identical.values()) and all(v <= 1e-3 for v in lam_gaps.values())
    detail = (f"exit codes {sorted(set(codes.values()))}; byte-identical {sum(identical.values())}/{len(identical)}; "
              f"max cross-method |dlam| {max(lam_gaps.values()):.1e}")
    # the budget applies to one pass over the whole suite; the second pass only checks bytes
    report(10, ok, detail, 600, elapsed=suite)
