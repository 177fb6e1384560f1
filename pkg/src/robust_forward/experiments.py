"""Named experiments: fixtures, solves and embedded checks.

Each runner returns an :class:`ExperimentResult`; writing files is left to
:func:`write_result` so that results can also be inspected in-process.
"""

import csv
import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .drivers import (BranchWarning, _alpha, _dF_dz, _F, _pi7, beta_star, driver_G, pi_star, power_driver,
                      section7_driver, u_star)
from .ergodic import (FunctionGenerator, ShiftedGenerator, forward_process_value, solve_ergodic_false_transient,
                      solve_ergodic_vanishing_discount, write_field_csv)
from .finite import discounted_forward_diagnostics, ergodic_limit, lower_value, solve_finite_horizon
from .grid import SpatialGrid
from .market import (MeasureShift, constant_theta_model, ou_tanh_model, scalar_theta_model, simulate_factor,
                     single_stock_factor_model)
from .sets import ConvexSet, parse_set
from .svg import line_plot
from .verification import (brute_force_G, comparison_check, concavity_check, dominated_generator, martingale_check,
                           optimal_feedback, portfolio_response, risk_sensitive_rate, saddle_gap,
                           scenario_response)

FIXTURES = ("model1", "model2", "nonrobust", "large_uncertainty", "section7")
PI_DEVIATIONS = (-1.0, -0.5, 0.0, 0.5, 1.0)
GAME_PI_DEVIATIONS = (0.0, 0.25, 0.5, 1.0, 2.0)


@dataclass
class ExperimentResult:
    name: str
    summary: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    fields: tuple = None
    plots: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)

    def check(self, name, value, bound, passed, **extra):
        self.checks.append({"check": name, "value": _num(value), "bound": _num(bound), "passed": bool(passed),
                            **extra})

    def report(self, rep):
        self.checks.append(rep.as_dict())

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks)

    @property
    def failed(self):
        return [c["check"] for c in self.checks if not c["passed"]]


def _num(x):
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


# ------------------------------------------------------------ fixtures


@dataclass(frozen=True)
class Fixture:
    name: str
    model: object
    driver: object


def _section7_theta(theta_max):
    def theta(v):
        return -0.5 * theta_max * (1.0 + np.tanh(np.atleast_2d(v)[:, :1]))

    return theta


def build_fixture(cfg, name):
    """Factor model and driver for one of the built-in fixtures, honouring config overrides."""
    if name == "model1" or name == "large_uncertainty":
        model = ou_tanh_model(a=cfg.a, theta_max=cfg.theta_max)
        if cfg.u_set:
            U = parse_set(cfg.u_set, 1)
        elif name == "model1":
            U = ConvexSet.box([-cfg.K_u], [cfg.K_u])
        else:
            U = ConvexSet.ball([0.0], cfg.K_u)
        Pi = parse_set(cfg.pi_set, 1) if cfg.pi_set else ConvexSet.unconstrained(1)
        variant = "model1" if Pi.kind == "unconstrained" else "generic"
        return Fixture(name, model, power_driver(model.theta, cfg.delta, Pi, U, variant=variant))
    if name == "nonrobust":
        model = constant_theta_model(theta=cfg.theta, a=cfg.a)
        return Fixture(name, model, power_driver(model.theta, cfg.delta, ConvexSet.unconstrained(1),
                                                 ConvexSet.origin(1), variant="model1"))
    if name == "model2":
        model = single_stock_factor_model(a=cfg.a, theta_max=cfg.theta_max, rho_bar=cfg.rho_bar)
        line = ConvexSet.slab([-np.inf, 0.0], [np.inf, 0.0])
        return Fixture(name, model, power_driver(model.theta, cfg.delta, line, ConvexSet.ordered_box(cfg.R),
                                                 variant="model2"))
    if name == "section7":
        theta = _section7_theta(cfg.theta_max)
        model = scalar_theta_model(theta, cfg.theta_max, 0.5 * cfg.theta_max, a=cfg.a, name="section7")
        return Fixture(name, model, section7_driver(theta))
    raise ValueError(f"unknown fixture {name!r}")


def build_grid(cfg, model):
    return SpatialGrid.for_model(model, n=cfg.grid_n, width_sd=cfg.width_sd)


# ------------------------------------------------------------ shared pieces


def solve_both(cfg, fx, grid):
    vd = solve_ergodic_vanishing_discount(fx.driver, grid, cfg.rho_schedule, model=fx.model)
    ft = solve_ergodic_false_transient(fx.driver, grid, cfg.dt or None, model=fx.model)
    return vd, ft


def _record_solution(res, grid, vd, ft):
    h2 = float(np.max(grid.h)) ** 2
    res.summary.update({
        "lambda": vd.lam, "lambda_false_transient": ft.lam, "v0": vd.v0.tolist(),
        "residual_norm": vd.residual_norm, "residual_norm_false_transient": ft.residual_norm,
        "z_bound": vd.z_bound, "rho_trace": [list(p) for p in vd.rho_trace], "notes": list(vd.notes),
        "grid": {"lower": list(grid.lower), "upper": list(grid.upper), "n": list(grid.n)},
    })
    res.check("cross_method_lambda", abs(vd.lam - ft.lam), 1e-3, abs(vd.lam - ft.lam) <= 1e-3)
    dy = float(np.max(np.abs(vd.y - ft.y)))
    res.check("cross_method_y", dy, 1e-2, dy <= 1e-2)
    res.check("stationary_residual", vd.residual_norm, 10 * h2, vd.residual_norm <= 10 * h2)
    res.fields = (grid, vd.y, vd.z)
    res.plots.append(("y.svg", [("vanishing discount", grid.axes[0], vd.y[: grid.n[0]]),
                                ("false transient", grid.axes[0], ft.y[: grid.n[0]])],
                      "ergodic potential y(v)", "v", "y", False))
    zs = [(f"z_{j + 1}", grid.axes[0], vd.z[: grid.n[0], j]) for j in range(vd.z.shape[1])]
    res.plots.append(("z.svg", zs, "z(v) = kappa^T grad y", "v", "z", False))
    rhos = [p[0] for p in vd.rho_trace]
    res.plots.append(("rho_trace.svg", [("rho y_rho(v0)", rhos, [p[1] for p in vd.rho_trace]),
                                        ("lambda", rhos, [vd.lam] * len(rhos))],
                      "vanishing-discount trajectory", "rho", "rho y_rho(v0)", True))


def martingale_suite(cfg, fx, field_, res):
    d = fx.driver
    ps, us = optimal_feedback(d, field_)
    kw = dict(T=cfg.T, paths=cfg.paths, dt=cfg.dt_mc, jobs=cfg.jobs)
    rep = martingale_check(field_, d, fx.model, ps, us, "equals", seed=cfg.seed, check="martingale_optimal", **kw)
    res.report(rep)
    res.check("martingale_optimal_within_1pct", abs(rep.estimate - 1.0), 1e-2, abs(rep.estimate - 1.0) <= 1e-2)
    for i, p in enumerate(PI_DEVIATIONS):
        rep = martingale_check(field_, d, fx.model, p, scenario_response(d, field_, p), "at_most",
                               seed=cfg.seed + 1 + i, check=f"supermartingale_pi={p:g}", **kw)
        res.report(rep)
    lo, hi = d.u_set.bounds()
    for i, c in enumerate(np.linspace(lo[0], hi[0], 5)):
        u = np.full(d.dim, c)
        rep = martingale_check(field_, d, fx.model, portfolio_response(d, field_, u), u, "at_least",
                               seed=cfg.seed + 11 + i, check=f"submartingale_u={c:g}", **kw)
        res.report(rep)


def comparison_suite(cfg, fx, grid, field_, res):
    shifted = ShiftedGenerator(fx.driver, 0.3)
    sh = solve_ergodic_vanishing_discount(shifted, grid, cfg.rho_schedule, model=fx.model)
    diff = sh.lam - field_.lam
    res.check("shift_lambda", abs(diff - 0.3), 1e-4, abs(diff - 0.3) <= 1e-4)
    dy = float(np.max(np.abs(sh.y - field_.y)))
    res.check("shift_y_unchanged", dy, 1e-6, dy <= 1e-6)
    cmp = comparison_check(fx.driver, dominated_generator(fx.driver), grid, model=fx.model,
                           rho_schedule=cfg.rho_schedule)
    res.check("comparison_dominated_pair", cmp.lam2 - cmp.lam1, 1e-4, cmp.passed, lambda1=cmp.lam1,
              lambda2=cmp.lam2)
    frozen = frozen_scenario_generator(fx.driver, field_)
    cmp = comparison_check(frozen, fx.driver, grid, model=fx.model, rho_schedule=cfg.rho_schedule)
    res.check("comparison_frozen_scenario", cmp.lam2 - cmp.lam1, 1e-4, cmp.passed, lambda1=cmp.lam1,
              lambda2=cmp.lam2)


def frozen_scenario_generator(driver, field_):
    """sup_pi F(v, z, pi, u*(v)) with u* frozen at the solved worst case; dominates G pointwise."""
    grid = field_.grid
    u_nodes = u_star(driver, grid.points, field_.z)

    def frozen_u(v):
        return grid.interpolate(u_nodes, v, clamp=True).reshape(v.shape[0], driver.dim)

    def fn(v, z):
        u = frozen_u(v)
        return _F(driver, v, z, _alpha(driver, v, z, u), u)

    def grad(v, z):
        u = frozen_u(v)
        return _dF_dz(driver, z, _alpha(driver, v, z, u), u)

    return FunctionGenerator(fn, grad)


# ------------------------------------------------------------ experiments


def run_model1(cfg):
    res = ExperimentResult("model1")
    fx = build_fixture(cfg, "model1")
    grid = build_grid(cfg, fx.model)
    vd, ft = solve_both(cfg, fx, grid)
    _record_solution(res, grid, vd, ft)
    first, last = vd.rho_trace[0], vd.rho_trace[-1]
    e_last, e_first = abs(last[1] - vd.lam), abs(first[1] - vd.lam)
    res.check("vanishing_discount_last_rho", e_last, 1e-3, e_last <= 1e-3 and e_last < e_first, first_rho_error=e_first)
    comparison_suite(cfg, fx, grid, vd, res)
    martingale_suite(cfg, fx, vd, res)
    return res


def run_model2(cfg):
    res = ExperimentResult("model2")
    fx = build_fixture(cfg, "model2")
    grid = build_grid(cfg, fx.model)
    vd, ft = solve_both(cfg, fx, grid)
    _record_solution(res, grid, vd, ft)
    nz = np.abs(vd.z[:, 0]) > 1e-12
    target = np.sqrt(1 - cfg.rho_bar**2) / cfg.rho_bar
    err = float(np.max(np.abs(vd.z[nz, 1] / vd.z[nz, 0] - target))) if np.any(nz) else 0.0
    res.check("z_component_ratio", err, 1e-9, err <= 1e-9)
    return res


def run_nonrobust(cfg):
    res = ExperimentResult("nonrobust")
    fx = build_fixture(cfg, "nonrobust")
    grid = build_grid(cfg, fx.model)
    vd, ft = solve_both(cfg, fx, grid)
    _record_solution(res, grid, vd, ft)
    exact = cfg.delta * cfg.theta**2 / (2 * (1 - cfg.delta))
    res.summary["lambda_exact"] = exact
    for tag, f in (("vanishing_discount", vd), ("false_transient", ft)):
        res.check(f"analytic_lambda_{tag}", abs(f.lam - exact), 1e-4, abs(f.lam - exact) <= 1e-4)
        ym, zm = float(np.max(np.abs(f.y))), float(np.max(np.abs(f.z)))
        res.check(f"zero_y_{tag}", ym, 1e-6, ym <= 1e-6)
        res.check(f"zero_z_{tag}", zm, 1e-6, zm <= 1e-6)
    return res


def run_large_uncertainty(cfg):
    res = ExperimentResult("large_uncertainty")
    fx = build_fixture(cfg, "large_uncertainty")
    grid = build_grid(cfg, fx.model)
    vd, ft = solve_both(cfg, fx, grid)
    _record_solution(res, grid, vd, ft)
    V = grid.points
    for tag, f in (("vanishing_discount", vd), ("false_transient", ft)):
        res.check(f"zero_lambda_{tag}", abs(f.lam), 1e-6, abs(f.lam) <= 1e-6)
        zm = float(np.max(np.abs(f.z)))
        res.check(f"zero_z_{tag}", zm, 1e-6, zm <= 1e-6)
    pim = float(np.max(np.abs(pi_star(fx.driver, V, vd.z))))
    res.check("zero_portfolio", pim, 1e-12, pim <= 1e-12)
    uerr = float(np.max(np.abs(u_star(fx.driver, V, vd.z) + fx.model.theta(V))))
    res.check("scenario_cancels_theta", uerr, 1e-6, uerr <= 1e-6)
    d = cfg.delta
    err = max(abs(forward_process_value(fx.driver.utility, x, t, [0.5], vd) - x**d / d)
              for x in (0.5, 1.0, 2.0) for t in (0.0, 1.0, 10.0))
    res.check("forward_process_is_static_power", err, 1e-9, err <= 1e-9)
    res.summary["pi_star_max"] = pim
    return res


def run_section7(cfg):
    res = ExperimentResult("section7")
    fx = build_fixture(cfg, "section7")
    grid = build_grid(cfg, fx.model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BranchWarning)
        vd, ft = solve_both(cfg, fx, grid)
        _record_solution(res, grid, vd, ft)
    _, flagged, _ = _pi7(fx.driver, grid.points, vd.z)
    res.summary["projected_branch_nodes"] = int(np.count_nonzero(flagged))
    _section7_point_checks(cfg, res)
    return res


def _section7_point_checks(cfg, res):
    d7 = section7_driver(lambda v: np.full((np.atleast_2d(v).shape[0], 1), -0.5))
    v, z = np.zeros(1), np.array([0.3])
    oracle = brute_force_G(d7, v, z, cfg.oracle_resolution)
    res.check("section7_maxmin_oracle", abs(oracle + 0.12), 2 * cfg.oracle_resolution,
              abs(oracle + 0.12) <= 2 * cfg.oracle_resolution, estimate=oracle)
    closed = float(driver_G(d7, v, z))
    p = pi_star(d7, v, z)
    b = beta_star(d7, v, z, p)
    res.check("section7_maxmin_closed_form", abs(closed + 0.12), 1e-12, abs(closed + 0.12) <= 1e-12)
    res.check("section7_pi_star", abs(p[0] - 0.2), 1e-12, abs(p[0] - 0.2) <= 1e-12)
    res.check("section7_beta_star", abs(b[0] - 1.0), 0.0, b[0] == 1.0)
    gap = saddle_gap(d7, v, z, cfg.oracle_resolution)
    res.check("section7_no_saddle", -gap.gap, -2 * cfg.oracle_resolution, gap.gap > 2 * cfg.oracle_resolution,
              maxmin=gap.maxmin, minmax=gap.minmax)
    rng = np.random.default_rng(cfg.seed)
    n = 200
    th = rng.uniform(-1, 0, (n, 1))
    dd = section7_driver(lambda vv: th[: np.atleast_2d(vv).shape[0]])
    d2p, d2u = concavity_check(dd, np.zeros((n, 1)), rng.uniform(-1, 1, (n, 1)), rng.uniform(0.01, 0.99, (n, 1)),
                               rng.uniform(0.01, 0.99, (n, 1)))
    worst = float(max(d2p.max(), d2u.max()))
    res.check("section7_concave_concave", worst, 0.0, worst <= 1e-12)


def run_risk_sensitive(cfg):
    res = ExperimentResult("risk_sensitive")
    fx = build_fixture(cfg, "model1")
    grid = build_grid(cfg, fx.model)
    vd = solve_ergodic_vanishing_discount(fx.driver, grid, cfg.rho_schedule, model=fx.model)
    res.summary["lambda"] = vd.lam
    ps, us = optimal_feedback(fx.driver, vd)
    kw = dict(grid=grid, T=cfg.T_game, paths=cfg.paths, dt=cfg.dt_game, jobs=cfg.jobs)
    d = cfg.delta
    rep = risk_sensitive_rate(fx.model, d, ps, us, seed=cfg.seed, bound_kind="equals", bound_value=vd.lam,
                              check="game_value", abs_tol=5e-2, **kw)
    res.report(rep)
    traj = rep.extra["trajectory"]
    res.plots.append(("rate_vs_T.svg", [("rate(pi*, u*)", [t for t, _ in traj], [r for _, r in traj]),
                                        ("lambda", [t for t, _ in traj], [vd.lam] * len(traj))],
                      "risk-sensitive rate against horizon", "T", "rate", False))
    lo, hi = fx.driver.u_set.bounds()
    for i, c in enumerate(np.linspace(lo[0], hi[0], 5)):
        res.report(risk_sensitive_rate(fx.model, d, ps, c, seed=cfg.seed + 1 + i, bound_kind="at_least",
                                       bound_value=vd.lam, check=f"rate_pi*_u={c:g}", **kw))
    for i, p in enumerate(GAME_PI_DEVIATIONS):
        res.report(risk_sensitive_rate(fx.model, d, p, us, seed=cfg.seed + 11 + i, bound_kind="at_most",
                                       bound_value=vd.lam, check=f"rate_pi={p:g}_u*", **kw))
    res.report(risk_sensitive_rate(fx.model, d, 0.0, us, seed=cfg.seed + 21, bound_kind="equals", bound_value=0.0,
                                   check="rate_zero_portfolio", **{**kw, "paths": min(cfg.paths, 1000)}))
    return res


def run_horizon_convergence(cfg):
    res = ExperimentResult("horizon_convergence")
    fx = build_fixture(cfg, "model1")
    grid = build_grid(cfg, fx.model)
    vd = solve_ergodic_vanishing_discount(fx.driver, grid, cfg.rho_schedule, model=fx.model)
    rep = ergodic_limit(fx.driver, grid, vd, cfg.horizons, model=fx.model)
    res.summary.update({"lambda": vd.lam, **rep.as_dict()})
    hs = list(rep.horizons)
    diff = abs(rep.l_hat_v0[-1] - rep.l_hat_v0[-2])
    res.check(f"L_hat_cauchy_T={hs[-2]:g}_{hs[-1]:g}", diff, 1e-3, diff <= 1e-3)
    res.check("L_hat_state_independence", rep.spread[-1], 1e-3, rep.spread[-1] <= 1e-3)
    T = hs[-1]
    fh = solve_finite_horizon(fx.driver, grid, T, model=fx.model)
    states = rep.states
    w = lower_value(cfg.delta, 1.0, states, fh)
    u0 = forward_process_value(fx.driver.utility, 1.0, 0.0, states, vd)
    L = float(np.mean(rep.l_hat[-1]))
    ratio = w * np.exp(-vd.lam * T - L) / u0
    dev = float(np.max(np.abs(ratio - 1.0)))
    res.check("lower_value_ratio", dev, 1e-3, dev <= 1e-3, ratio_min=float(ratio.min()), ratio_max=float(ratio.max()))
    res.tables["horizon.csv"] = (["T", "L_hat", "spread"], [list(r) for r in zip(hs, rep.l_hat_v0, rep.spread)])
    res.plots.append(("L_hat_vs_T.svg", [("L_hat(T) at v0", hs, list(rep.l_hat_v0))],
                      "finite-horizon constant", "T", "L_hat", False))
    res.fields = (grid, vd.y, vd.z)
    return res


def run_discounted_family(cfg):
    res = ExperimentResult("discounted_family")
    fx = build_fixture(cfg, "model1")
    grid = build_grid(cfg, fx.model)
    vd = solve_ergodic_vanishing_discount(fx.driver, grid, cfg.rho_schedule, model=fx.model)
    paths = min(cfg.paths, 2000)
    ens = simulate_factor(fx.model, MeasureShift.base(), cfg.T, cfg.dt_mc, paths, cfg.seed)
    rows = discounted_forward_diagnostics(fx.driver, grid, cfg.rho_schedule, ens, vd, model=fx.model)
    res.summary.update({"lambda": vd.lam, "diagnostics": rows, "paths": paths})
    a, b = rows[0], rows[-1]
    res.check("ratio_error_decreases", b["max_ratio_error"], a["max_ratio_error"],
              b["max_ratio_error"] < a["max_ratio_error"])
    res.check("strategy_gap_decreases", b["strategy_gap"], a["strategy_gap"], b["strategy_gap"] < a["strategy_gap"])
    rhos = [r["rho"] for r in rows]
    res.plots.append(("discounted_family.svg",
                      [("max |ratio - 1|", rhos, [r["max_ratio_error"] for r in rows]),
                       ("strategy gap", rhos, [r["strategy_gap"] for r in rows])],
                      "discounted forward processes", "rho", "error", True))
    res.tables["discounted_family.csv"] = (["rho", "max_ratio_error", "strategy_gap"],
                                           [[r["rho"], r["max_ratio_error"], r["strategy_gap"]] for r in rows])
    return res


def run_driver_oracle(cfg):
    res = ExperimentResult("driver_oracle")
    rng = np.random.default_rng(cfg.seed)
    n, r = cfg.oracle_points, cfg.oracle_resolution
    for name, zdim in (("model1", 1), ("model2", 2)):
        fx = build_fixture(cfg, name)
        errs = []
        for _ in range(n):
            v = rng.uniform(-3, 3, fx.model.dim_factor)
            z = rng.uniform(-1, 1, zdim)
            errs.append(abs(brute_force_G(fx.driver, v, z, r) - float(driver_G(fx.driver, v, z))))
        res.check(f"oracle_{name}", max(errs), 2e-3, max(errs) <= 2e-3)
    errs = []
    for _ in range(n):
        th = rng.uniform(-1, 0)
        d7 = section7_driver(lambda v, th=th: np.full((np.atleast_2d(v).shape[0], 1), th))
        z = rng.uniform(-1, 1, 1)
        errs.append(abs(brute_force_G(d7, [0.0], z, r) - float(driver_G(d7, [0.0], z))))
    res.check("oracle_section7", max(errs), 2e-3, max(errs) <= 2e-3)
    _section7_point_checks(cfg, res)
    # compact portfolio set so that the grid covers it exactly
    m = ou_tanh_model(a=cfg.a, theta_max=cfg.theta_max)
    dc = power_driver(m.theta, cfg.delta, ConvexSet.box([-2.0], [2.0]), ConvexSet.box([-cfg.K_u], [cfg.K_u]))
    sr = cfg.saddle_resolution
    gaps = [saddle_gap(dc, rng.uniform(-3, 3, 1), rng.uniform(-1, 1, 1), sr).gap for _ in range(n)]
    res.check("saddle_gap_power", max(gaps), 2 * sr, max(gaps) <= 2 * sr)
    res.check("weak_duality", -min(gaps), 2 * sr, min(gaps) >= -2 * sr)
    return res


RUNNERS = {
    "model1": run_model1, "model2": run_model2, "nonrobust": run_nonrobust,
    "large_uncertainty": run_large_uncertainty, "section7": run_section7, "risk_sensitive": run_risk_sensitive,
    "horizon_convergence": run_horizon_convergence, "discounted_family": run_discounted_family,
    "driver_oracle": run_driver_oracle,
}


def run_experiment(cfg: ExperimentConfig):
    return RUNNERS[cfg.experiment](cfg)


# ------------------------------------------------------------ output


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def write_result(res, out_dir, cfg=None):
    """Write summary.json, checks.json, fields.csv, tables and plots; returns the file list."""
    os.makedirs(out_dir, exist_ok=True)
    files = ["summary.json", "checks.json"]
    if res.fields is not None:
        grid, y, z = res.fields
        write_field_csv(os.path.join(out_dir, "fields.csv"), grid, y, z)
        files.append("fields.csv")
    for name, (header, rows) in sorted(res.tables.items()):
        with open(os.path.join(out_dir, name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(c)) for c in row])
        files.append(name)
    for name, series, title, xl, yl, logx in res.plots:
        line_plot(os.path.join(out_dir, name), series, title, xl, yl, logx=logx, markers=True)
        files.append(name)
    with open(os.path.join(out_dir, "checks.json"), "w") as fh:
        json.dump(_jsonable(res.checks), fh, indent=2, sort_keys=True)
    summary = {
        "experiment": res.name, **res.summary,
        "checks": {c["check"]: c["passed"] for c in res.checks}, "passed": res.passed, "files": files,
    }
    if cfg is not None:
        # the output location is not a result; keeps re-runs into other directories byte-identical
        summary["config"] = {k: v for k, v in cfg.as_dict().items() if k != "out"}
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
    return files
