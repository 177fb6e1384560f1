"""Compiled vs pure-numpy path kernels.

    python benchmarks/bench_kernels.py [--paths 20000] [--steps 100] [--repeat 3]

Prints ns per path-step for both backends and the max difference in
log-wealth, which should be at the level of a few ulps.
"""

import argparse
import time

import numpy as np

from robust_forward import (ConvexSet, FeedbackTables, SpatialGrid, ou_tanh_model, power_driver, simulate_paths,
                            single_stock_factor_model, solve_ergodic_vanishing_discount)
from robust_forward.rng import normals_numba, normals_numpy
from robust_forward.verification import optimal_feedback


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_paths(label, model, driver, grid, paths, steps, repeat):
    field = solve_ergodic_vanishing_discount(driver, grid, model=model)
    pi, u = optimal_feedback(driver, field)
    tables = FeedbackTables.from_maps(grid, model, pi, u, field.y)
    dt = 0.01
    T = steps * dt
    kw = dict(mode="game", delta=driver.utility.delta)
    simulate_paths(tables, model.kappa, T, dt, 16, 0, backend="numba", **kw)  # compile
    rows = {}
    for backend in ("numba", "numpy"):
        t, res = best_of(lambda: simulate_paths(tables, model.kappa, T, dt, paths, 0, backend=backend, **kw), repeat)
        rows[backend] = (t, res)
    diff = np.max(np.abs(rows["numba"][1].log_wealth - rows["numpy"][1].log_wealth))
    for backend, (t, _) in rows.items():
        print(f"{label:<10} {backend:<6} {1e9 * t / (paths * steps):10.1f} ns/path-step")
    print(f"{label:<10} speedup {rows['numpy'][0] / rows['numba'][0]:6.1f}x   max |dlogX| = {diff:.2e}")


def bench_rng(paths, repeat):
    ids = np.arange(paths)
    normals_numba(0, ids[:8], 0, 3)
    t_nb, a = best_of(lambda: normals_numba(7, ids, 3, 3), repeat)
    t_np, b = best_of(lambda: normals_numpy(7, ids, 3, 3), repeat)
    print(f"{'normals':<10} numba  {1e9 * t_nb / paths:10.1f} ns/draw-row")
    print(f"{'normals':<10} numpy  {1e9 * t_np / paths:10.1f} ns/draw-row")
    print(f"{'normals':<10} max |diff| = {np.max(np.abs(a - b)):.2e}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    bench_rng(args.paths * 10, args.repeat)
    m1 = ou_tanh_model()
    d1 = power_driver(m1.theta, 0.5, ConvexSet.unconstrained(1), ConvexSet.box([-0.2], [0.2]), variant="model1")
    bench_paths("1-factor", m1, d1, SpatialGrid.for_model(m1), args.paths, args.steps, args.repeat)
    m2 = single_stock_factor_model()
    line = ConvexSet.slab([-np.inf, 0.0], [np.inf, 0.0])
    d2 = power_driver(m2.theta, 0.5, line, ConvexSet.ordered_box(0.2), variant="model2")
    bench_paths("2-noise", m2, d2, SpatialGrid.for_model(m2), args.paths, args.steps, args.repeat)


if __name__ == "__main__":
    main()
