"""Finite-horizon lower value and its long-horizon convergence to the ergodic solution."""

import csv
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .drivers import alpha_star, u_star
from .ergodic import _Problem, solve_discounted


class StepInstabilityError(FloatingPointError):
    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True, eq=False)
class FiniteHorizonField:
    """f(., t) on a grid for t in ``times``; ``f[j]`` is the slice at ``times[j]``."""

    T: float
    dt: float
    grid: object
    times: np.ndarray
    f: np.ndarray
    z0: np.ndarray

    def __post_init__(self):
        for a in (self.times, self.f, self.z0):
            a.setflags(write=False)

    @property
    def f0(self):
        return self.f[0]

    def value_at(self, v, t=0.0):
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"no stored slice at t={t:g}")
        return self.grid.interpolate(self.f[j], v)


def _march(prob, T, dt, terminal, record):
    """Backward IMEX march; returns slices at the times-to-go listed in ``record``."""
    nsteps = int(round(T / dt))
    if nsteps < 1 or abs(nsteps * dt - T) > 1e-9 * T:
        raise ValueError("T must be a positive integer multiple of dt")
    n = prob.grid.size
    lhs = (sp.identity(n, format="csr") - dt * prob.L)
    lhs = prob.I_int @ lhs + prob.B
    solve = spla.splu(lhs.tocsc()).solve
    h = prob.grid.h
    diff = np.diag(prob.kappa @ prob.kappa.T)
    f = prob.ops.extrapolate_boundary(np.asarray(terminal, dtype=float))
    want = {int(round(r / dt)): r for r in record}
    out = {}
    if 0 in want:
        out[want[0]] = f.copy()
    mask = prob.interior
    for s in range(1, nsteps + 1):
        g, dg = prob.driver_terms(f)
        mu = np.abs(dg @ prob.kappa.T)
        courant = float(np.max(dt * mu / h))
        peclet_dt = float(np.max(dt * mu**2 / diff))
        if courant > 1.0 or peclet_dt > 2.0 or not np.all(np.isfinite(f)):
            raise StepInstabilityError(
                f"explicit driver step unstable at step {s} (Courant {courant:.3g}, dt*mu^2/D {peclet_dt:.3g})",
                {"step": s, "courant": courant, "dt_mu2_over_D": peclet_dt, "dt": dt},
            )
        rhs = np.where(mask, f + dt * g, 0.0)
        f = solve(rhs)
        if s in want:
            out[want[s]] = f.copy()
    return out


def solve_finite_horizon(driver, grid, T, dt=None, *, model, terminal=None, save_every=None):
    """Solve f_t + L f + G(v, kappa^T grad f) = 0 backwards from f(., T) = terminal (default 0)."""
    if not T > 0:
        raise ValueError("T must be positive")
    dt = T / 2000.0 if dt is None else float(dt)
    prob = driver if isinstance(driver, _Problem) else _Problem(driver, model, grid)
    nsteps = int(round(T / dt))
    stride = nsteps if save_every is None else max(1, int(save_every))
    togo = sorted({nsteps} | set(range(0, nsteps + 1, stride)))
    term = np.zeros(grid.size) if terminal is None else terminal
    slices = _march(prob, T, dt, term, [k * dt for k in togo])
    times = np.array([T - k * dt for k in reversed(togo)])
    f = np.stack([slices[k * dt] for k in reversed(togo)])
    f[-1] = 0.0 if terminal is None else f[-1]
    return FiniteHorizonField(float(T), dt, grid, times, f, prob.z_of(f[0]))


def lower_value(delta, x, v, field):
    """w_T(x, v) = (x^delta / delta) exp(f(v, 0))."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("wealth must be positive")
    f0 = field.grid.interpolate(field.f0, v)
    out = x**delta / delta * np.exp(f0)
    return out[0] if out.size == 1 else out


@dataclass(frozen=True)
class ErgodicLimitReport:
    horizons: tuple
    l_hat_v0: tuple
    spread: tuple
    cauchy: tuple
    limit: float
    states: np.ndarray
    l_hat: np.ndarray

    def as_dict(self):
        return {
            "horizons": list(self.horizons), "L_hat_v0": list(self.l_hat_v0), "spread_over_states": list(self.spread),
            "cauchy_max_diff": list(self.cauchy), "L_limit": self.limit,
        }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["T", "L_hat", "spread"])
            for row in zip(self.horizons, self.l_hat_v0, self.spread):
                w.writerow([repr(float(c)) for c in row])

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)


def ergodic_limit(driver, grid, ergodic_field, horizons, *, model, dt=None, width_sd=3.0):
    """L_hat(T, v) = f_T(v, 0) - lambda T - y(v) over states within ``width_sd`` of the fixed point.

    The equation is autonomous, so every horizon is read off one march to
    max(horizons) at the matching time-to-go.
    """
    horizons = sorted(float(h) for h in horizons)
    Tmax = horizons[-1]
    dt = Tmax / 2000.0 if dt is None else float(dt)
    prob = _Problem(driver, model, grid)
    slices = _march(prob, Tmax, dt, np.zeros(grid.size), horizons)
    sd = model.stationary_sd()
    keep = np.all(np.abs(grid.points - model.fixed_point) <= width_sd * sd + 1e-12, axis=1)
    states = grid.points[keep]
    y = ergodic_field.y[keep]
    lam = ergodic_field.lam
    v0 = ergodic_field.v0
    l_hat = np.stack([slices[T][keep] - lam * T - y for T in horizons])
    at_v0 = tuple(float(grid.interpolate(slices[T], v0)[0] - lam * T - ergodic_field.y_at(v0)[0]) for T in horizons)
    spread = tuple(float(r.max() - r.min()) for r in l_hat)
    cauchy = tuple(float(np.max(np.abs(l_hat[i + 1] - l_hat[i]))) for i in range(len(horizons) - 1))
    return ErgodicLimitReport(tuple(horizons), at_v0, spread, cauchy, at_v0[-1], states, l_hat)


def _trapz_cumulative(vals, dt):
    out = np.zeros_like(vals)
    out[:, 1:] = np.cumsum(0.5 * (vals[:, 1:] + vals[:, :-1]) * dt, axis=1)
    return out


def discounted_forward_diagnostics(driver, grid, rho_schedule, ensemble, ergodic_field, *, model):
    """Discounted forward processes and portfolios against their ergodic counterparts along sampled paths.

    Per rho: the largest |U^rho e^{-y^rho(v0)} / U - 1| over paths and times, and
    the mean over paths of int_0^t |alpha^rho - alpha|^2 ds at the horizon,
    with the scenario fixed at the ergodic worst case u*(V_s).
    """
    V = ensemble.factor
    P, S1, m = V.shape
    flat = V.reshape(-1, m)
    times = ensemble.times
    y = ergodic_field.y_at(flat).reshape(P, S1)
    z = ergodic_field.z_at(flat)
    u = u_star(driver, flat, z)
    a = alpha_star(driver, flat, z, u)
    v0 = ergodic_field.v0
    prob = _Problem(driver, model, grid)
    rows = []
    y_prev = None
    for rho in rho_schedule:
        f = solve_discounted(prob, grid, rho, model=model, y0=y_prev)
        y_prev = f.y_rho
        yr = grid.interpolate(f.y_rho, flat).reshape(P, S1)
        disc = _trapz_cumulative(rho * yr, ensemble.dt)
        log_ratio = yr - disc - grid.interpolate(f.y_rho, v0)[0] - y + ergodic_field.lam * times
        ratio_err = float(np.max(np.abs(np.expm1(log_ratio))))
        zr = grid.interpolate(f.z_rho, np.clip(flat, grid.lower, grid.upper))
        ar = alpha_star(driver, flat, zr, u)
        gap2 = np.sum((ar - a) ** 2, axis=1).reshape(P, S1)
        gap = float(np.mean(_trapz_cumulative(gap2, ensemble.dt)[:, -1]))
        rows.append({"rho": float(rho), "max_ratio_error": ratio_err, "strategy_gap": gap})
    return rows
