"""Markovian solutions of the ergodic equation on a grid.

Two independent methods: a vanishing-discount continuation of Newton solves of
the discounted stationary equation, and an explicit false-transient march.
Both use the same spatial discretisation from :mod:`robust_forward.grid`.
"""

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import GridOperators, SpatialGrid

DEFAULT_RHO_SCHEDULE = (0.2, 0.1, 0.05, 0.02, 0.01)


class ConvergenceError(ArithmeticError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class CFLError(ValueError):
    pass


class ExtrapolationWarning(UserWarning):
    pass


class TrajectoryWarning(UserWarning):
    pass


# ------------------------------------------------------------ generators


class ShiftedGenerator:
    """G + c, used for the shift-equivariance and comparison checks."""

    def __init__(self, base, shift):
        self.base = base
        self.shift = float(shift)

    def evaluate(self, v, z):
        g, dg = self.base.evaluate(v, z)
        return g + self.shift, dg


class FunctionGenerator:
    """Wrap ``fn(v, z) -> (N,)`` as a generator; the z-gradient is by central differences if not given."""

    def __init__(self, fn, grad=None, eps=1e-6):
        self.fn = fn
        self.grad = grad
        self.eps = eps

    def evaluate(self, v, z):
        v = np.atleast_2d(v)
        z = np.atleast_2d(z)
        g = np.asarray(self.fn(v, z), dtype=float)
        if self.grad is not None:
            return g, np.asarray(self.grad(v, z), dtype=float)
        dg = np.empty_like(z)
        for j in range(z.shape[1]):
            e = np.zeros(z.shape[1])
            e[j] = self.eps
            dg[:, j] = (self.fn(v, z + e) - self.fn(v, z - e)) / (2 * self.eps)
        return g, dg


def constant_generator(c, k):
    return FunctionGenerator(lambda v, z: np.full(v.shape[0], float(c)), lambda v, z: np.zeros((v.shape[0], k)))


# ------------------------------------------------------------ fields


@dataclass(frozen=True, eq=False)
class DiscountedSolutionField:
    rho: float
    grid: SpatialGrid
    y_rho: np.ndarray
    z_rho: np.ndarray
    residual_norm: float
    iterations: int

    def __post_init__(self):
        self.y_rho.setflags(write=False)
        self.z_rho.setflags(write=False)


@dataclass(frozen=True, eq=False)
class MarkovianSolutionField:
    grid: SpatialGrid
    y: np.ndarray
    z: np.ndarray
    lam: float
    v0: np.ndarray
    method: str
    residual_norm: float
    z_bound: float
    rho_trace: tuple = ()
    notes: tuple = field(default=())

    def __post_init__(self):
        for a in (self.y, self.z, self.v0):
            a.setflags(write=False)

    def y_at(self, v):
        return self.grid.interpolate(self.y, v)

    def z_at(self, v, clamp=True):
        return self.grid.interpolate(self.z, v, clamp=clamp)

    def summary(self):
        return {
            "lambda": self.lam,
            "v0": self.v0.tolist(),
            "residual_norm": self.residual_norm,
            "method": self.method,
            "rho_trace": [list(p) for p in self.rho_trace],
            "z_bound": self.z_bound,
            "notes": list(self.notes),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)

    def to_csv(self, path):
        write_field_csv(path, self.grid, self.y, self.z)


def write_field_csv(path, grid, y, z):
    m = grid.dim
    header = [f"v_{i + 1}" for i in range(m)] + ["y"] + [f"z_{j + 1}" for j in range(z.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for p, yy, zz in zip(grid.points, y, z):
            w.writerow([repr(float(x)) for x in (*p, yy, *zz)])


# ------------------------------------------------------------ discretisation


class _Problem:
    """Grid operators and coefficients shared by both methods."""

    def __init__(self, driver, model, grid):
        if model.dim_factor != grid.dim:
            raise ValueError("grid dimension does not match the factor dimension")
        self.driver = driver
        self.model = model
        self.grid = grid
        self.ops = GridOperators(grid)
        self.kappa = model.kappa
        self.V = grid.points
        drift = np.asarray(model.eta(self.V), dtype=float).reshape(grid.size, grid.dim)
        self.drift = drift
        self.L = self.ops.generator(self.kappa, drift)
        self.B = self.ops.boundary_rows
        self.interior = grid.interior
        self.I_int = self.ops.interior_mask

    def z_of(self, y):
        return self.ops.gradient(y) @ self.kappa

    def driver_terms(self, y):
        z = self.z_of(y)
        g, dg = self.driver.evaluate(self.V, z)
        return np.asarray(g, dtype=float), np.asarray(dg, dtype=float).reshape(z.shape)

    def grad_jacobian(self, dg):
        """d G(kappa^T D y) / dy restricted to interior rows."""
        coeff = dg @ self.kappa.T
        J = sp.csr_matrix((self.grid.size, self.grid.size))
        for i in range(self.grid.dim):
            J = J + sp.diags(coeff[:, i]) @ self.ops.d1[i]
        return self.I_int @ J

    def stationary_residual(self, y, lam):
        g, _ = self.driver_terms(y)
        r = self.L @ y + g - lam
        return float(np.max(np.abs(r[self.interior])))


def extract_z(y, grid, kappa):
    """z = kappa^T grad y (central inside, one-sided second order at the edges) and its sup-norm."""
    ops = GridOperators(grid)
    z = ops.gradient(np.asarray(y, dtype=float)) @ np.atleast_2d(kappa)
    return z, float(np.max(np.linalg.norm(z, axis=1)))


def _newton_discounted(prob, rho, y0, tol, max_iter):
    n = prob.grid.size
    eye_int = rho * prob.I_int

    def residual(y):
        g, dg = prob.driver_terms(y)
        r = rho * y - prob.L @ y - g
        r[~prob.interior] = (prob.B @ y)[~prob.interior]
        return r, dg

    y = y0.copy()
    r, dg = residual(y)
    hist = [float(np.max(np.abs(r)))]
    for it in range(1, max_iter + 1):
        if hist[-1] <= tol:
            return y, hist[-1], it - 1, hist
        J = (eye_int - prob.L - prob.grad_jacobian(dg) + prob.B).tocsc()
        step = spla.spsolve(J, -r)
        t, base = 1.0, hist[-1]
        while True:
            y_new = y + t * step
            r_new, dg_new = residual(y_new)
            norm = float(np.max(np.abs(r_new)))
            if norm <= (1 - 1e-4 * t) * base or t < 1.0 / 64:
                break
            t *= 0.5
        y, r, dg = y_new, r_new, dg_new
        hist.append(norm)
        if not np.all(np.isfinite(y)):
            break
    if hist[-1] <= tol:
        return y, hist[-1], max_iter, hist
    raise ConvergenceError(f"discounted Newton solve did not reach {tol:g} (last residual {hist[-1]:.3e})", hist)


def solve_discounted(driver, grid, rho, *, model, y0=None, tol=1e-8, max_iter=60):
    """Solve rho y = L y + G(v, kappa^T grad y) with linear-extrapolation boundary rows."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    prob = driver if isinstance(driver, _Problem) else _Problem(driver, model, grid)
    if y0 is None:
        g, _ = prob.driver_terms(np.zeros(grid.size))
        y0 = prob.ops.extrapolate_boundary(g / rho)
    y, res, its, _ = _newton_discounted(prob, rho, np.asarray(y0, dtype=float), tol, max_iter)
    z = prob.z_of(y)
    return DiscountedSolutionField(float(rho), grid, y, z, res, its)


def _default_v0(model, v0):
    return np.asarray(model.fixed_point if v0 is None else np.atleast_1d(v0), dtype=float)


def solve_ergodic_vanishing_discount(driver, grid, rho_schedule=DEFAULT_RHO_SCHEDULE, v0=None, *, model,
                                     tol=1e-8, monotone_tol=1e-6):
    """lambda and y from a decreasing discount schedule, Richardson-extrapolated over its last two entries."""
    sched = np.asarray(rho_schedule, dtype=float)
    if sched.size < 2 or np.any(sched <= 0) or np.any(np.diff(sched) >= 0):
        raise ValueError("rho schedule must be a decreasing positive sequence of length >= 2")
    if sched[-1] > 1e-2:
        raise ValueError("last rho must be <= 0.01")
    v0 = _default_v0(model, v0)
    prob = _Problem(driver, model, grid)
    y = None
    trace, fields = [], []
    for rho in sched:
        f = solve_discounted(prob, grid, rho, model=model, y0=y, tol=tol)
        y = f.y_rho
        fields.append(f)
        trace.append((float(rho), float(rho * grid.interpolate(f.y_rho, v0)[0])))
    notes = []
    gaps = np.diff([t[1] for t in trace])
    if np.any(gaps > monotone_tol) and np.any(gaps < -monotone_tol):
        msg = "rho*y_rho(v0) trajectory is not monotone in rho"
        warnings.warn(msg, TrajectoryWarning, stacklevel=2)
        notes.append(msg)
    (ra, ya), (rb, yb) = trace[-2], trace[-1]
    lam = (ra * yb - rb * ya) / (ra - rb)
    fa, fb = fields[-2], fields[-1]
    ha = fa.y_rho - grid.interpolate(fa.y_rho, v0)[0]
    hb = fb.y_rho - grid.interpolate(fb.y_rho, v0)[0]
    ynorm = (ra * hb - rb * ha) / (ra - rb)
    ynorm = ynorm - grid.interpolate(ynorm, v0)[0]
    z, zb = extract_z(ynorm, grid, model.kappa)
    res = prob.stationary_residual(ynorm, lam)
    return MarkovianSolutionField(grid, ynorm, z, float(lam), v0, "vanishing_discount", res, zb,
                                  tuple(trace), tuple(notes))


def cfl_limit(prob, dg):
    A = prob.kappa @ prob.kappa.T
    h = prob.grid.h
    mu = prob.drift + dg @ prob.kappa.T
    rate = np.sum(np.diag(A) / h**2)
    if prob.grid.dim == 2:
        rate += abs(A[0, 1]) / (h[0] * h[1])
    rate = rate + np.max(np.sum(np.abs(mu) / h, axis=1))
    return 1.0 / rate


def solve_ergodic_false_transient(driver, grid, dt=None, tol=1e-10, *, model, v0=None, max_time=200.0):
    """March f_t = L f + G until the increment is spatially constant; lambda is that constant rate."""
    v0 = _default_v0(model, v0)
    prob = _Problem(driver, model, grid)
    i0 = grid.nearest_index(v0)
    f = np.zeros(grid.size)
    g, dg = prob.driver_terms(f)
    limit = cfl_limit(prob, dg)
    if dt is None:
        dt = 0.9 * limit
    elif dt > limit:
        raise CFLError(f"dt={dt:g} exceeds the explicit stability limit {limit:.4g}")
    inside = prob.interior
    steps = int(np.ceil(max_time / dt))
    osc = np.inf
    for n in range(steps):
        inc = dt * (prob.L @ f + g)
        f_new = prob.ops.extrapolate_boundary(f + inc)
        rate = inc[inside] / dt
        osc = float(rate.max() - rate.min())
        f = f_new - f_new[i0]
        g, dg = prob.driver_terms(f)
        if n % 50 == 0 and dt > 1.0001 * cfl_limit(prob, dg):
            raise CFLError(f"dt={dt:g} exceeds the explicit stability limit during the march")
        if osc <= tol:
            break
    else:
        raise ConvergenceError(f"false transient not stationary after t={max_time:g} (oscillation {osc:.3e})")
    lam = float(np.mean(rate))
    y = f - grid.interpolate(f, v0)[0]
    z, zb = extract_z(y, grid, model.kappa)
    res = prob.stationary_residual(y, lam)
    return MarkovianSolutionField(grid, y, z, lam, v0, "false_transient", res, zb)


# ------------------------------------------------------------ forward process


def forward_process_value(utility, x, t, v, field):
    """Forward performance field U(x, t) at factor state v."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if np.any(field.grid.outside(v)):
        warnings.warn("factor state outside the solution grid; extrapolating y linearly", ExtrapolationWarning,
                      stacklevel=2)
    yv = field.grid.interpolate(field.y, v)
    x = np.asarray(x, dtype=float)
    expo = yv - field.lam * t
    if utility.kind in ("power", "log") and np.any(x <= 0):
        raise ValueError("wealth must be positive")
    if utility.kind == "power":
        d = utility.delta
        out = x**d / d * np.exp(expo)
    elif utility.kind == "log":
        out = np.log(x) + expo
    else:
        out = -np.exp(-utility.gamma * x + expo)
    return out[0] if out.size == 1 else out
