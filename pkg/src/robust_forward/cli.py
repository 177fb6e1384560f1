"""Command-line entry point: ``robust-forward <command> ...``.

Exit status is 0 when every embedded check passes, 1 when any check fails
(the failing names go to stderr) and 2 for configuration errors.
"""

import argparse
import json
import sys

import numpy as np

from .config import EXPERIMENTS, ConfigError, load_config
from .drivers import beta_star, driver_G, pi_star, u_star
from .experiments import (FIXTURES, ExperimentResult, _record_solution, build_fixture, build_grid,
                          martingale_suite, run_experiment, solve_both, write_result)
from .ergodic import solve_ergodic_false_transient, solve_ergodic_vanishing_discount


def _common(p):
    p.add_argument("--config", help="TOML file with [model] and [numerics] tables")
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--grid-n", type=int, dest="grid_n")
    p.add_argument("--rho-schedule", dest="rho_schedule", help="comma-separated, decreasing")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--delta", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="robust-forward",
                                     description="Robust forward performance processes in factor markets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a named experiment with its checks")
    p.add_argument("experiment", choices=EXPERIMENTS)
    _common(p)

    p = sub.add_parser("solve", help="solve the ergodic problem for a fixture")
    p.add_argument("--fixture", choices=FIXTURES, default="model1")
    p.add_argument("--method", choices=("vanishing-discount", "false-transient", "both"), default="both")
    _common(p)

    p = sub.add_parser("verify", help="Monte Carlo martingale checks for a power-utility fixture")
    p.add_argument("--fixture", choices=("model1", "model2", "nonrobust", "large_uncertainty"), default="model1")
    _common(p)

    p = sub.add_parser("game", help="risk-sensitive game value by simulation")
    _common(p)

    p = sub.add_parser("horizon", help="finite-horizon convergence to the ergodic limit")
    _common(p)

    p = sub.add_parser("driver", help="driver utilities")
    dsub = p.add_subparsers(dest="driver_command", required=True)
    e = dsub.add_parser("eval", help="evaluate G and the saddle point at one (v, z)")
    e.add_argument("--fixture", choices=FIXTURES, default="model1")
    e.add_argument("--v", required=True, help="comma-separated factor value")
    e.add_argument("--z", required=True, help="comma-separated z")
    _common(e)
    return parser


def _config(args, experiment):
    keys = ("seed", "paths", "grid_n", "rho_schedule", "out", "jobs", "theta", "delta")
    return load_config(args.config, experiment=experiment, **{k: getattr(args, k) for k in keys})


def _vec(text):
    return np.array([float(x) for x in text.split(",")])


def _solve(args):
    cfg = _config(args, args.fixture)
    fx = build_fixture(cfg, args.fixture)
    grid = build_grid(cfg, fx.model)
    res = ExperimentResult(f"solve_{args.fixture}")
    if args.method == "both":
        _record_solution(res, grid, *solve_both(cfg, fx, grid))
    else:
        if args.method == "vanishing-discount":
            f = solve_ergodic_vanishing_discount(fx.driver, grid, cfg.rho_schedule, model=fx.model)
        else:
            f = solve_ergodic_false_transient(fx.driver, grid, cfg.dt or None, model=fx.model)
        res.summary.update(f.summary())
        res.fields = (grid, f.y, f.z)
    return cfg, res


def _verify(args):
    cfg = _config(args, args.fixture)
    fx = build_fixture(cfg, args.fixture)
    grid = build_grid(cfg, fx.model)
    field = solve_ergodic_vanishing_discount(fx.driver, grid, cfg.rho_schedule, model=fx.model)
    res = ExperimentResult(f"verify_{args.fixture}", summary={"lambda": field.lam})
    martingale_suite(cfg, fx, field, res)
    return cfg, res


def _driver_eval(args):
    cfg = _config(args, args.fixture)
    fx = build_fixture(cfg, args.fixture)
    v, z = _vec(args.v), _vec(args.z)
    d = fx.driver
    p = pi_star(d, v, z)
    out = {"fixture": args.fixture, "v": v, "z": z, "G": float(driver_G(d, v, z)), "pi_star": p,
           "u_star": u_star(d, v, z), "beta_star": beta_star(d, v, z, p), "order": d.order}
    print(json.dumps({k: np.asarray(x).tolist() if isinstance(x, np.ndarray) else x for k, x in out.items()},
                     sort_keys=True))
    return 0


def _finish(cfg, res):
    files = write_result(res, cfg.out, cfg)
    status = "PASS" if res.passed else "FAIL"
    print(f"{res.name}: {status} ({len(res.checks)} checks) -> {cfg.out}/ [{', '.join(files)}]")
    if not res.passed:
        for name in res.failed:
            print(f"check failed: {name}", file=sys.stderr)
        return 1
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "driver":
            return _driver_eval(args)
        if args.command == "run":
            cfg = _config(args, args.experiment)
            res = run_experiment(cfg)
        elif args.command == "game":
            cfg = _config(args, "risk_sensitive")
            res = run_experiment(cfg)
        elif args.command == "horizon":
            cfg = _config(args, "horizon_convergence")
            res = run_experiment(cfg)
        elif args.command == "solve":
            cfg, res = _solve(args)
        else:
            cfg, res = _verify(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return _finish(cfg, res)


if __name__ == "__main__":
    sys.exit(main())
