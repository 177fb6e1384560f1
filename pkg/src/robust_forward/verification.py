"""Monte Carlo and brute-force checks of the solved game.

Every stochastic verdict uses the 3-standard-error rule; every deterministic
oracle is an exhaustive grid search that never touches the closed forms.
"""

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from .drivers import _F, _theta, alpha_star, beta_star, pi_star, u_star
from .ergodic import FunctionGenerator, solve_ergodic_vanishing_discount
from .montecarlo import FeedbackTables, simulate_paths
from .sets import ConvexSet

N_SE = 3.0
BOUND_KINDS = ("equals", "at_most", "at_least")


class DominanceError(ValueError):
    def __init__(self, message, witness):
        super().__init__(message)
        self.witness = witness


class VarianceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MonteCarloReport:
    check: str
    estimate: float
    std_error: float
    paths: int
    seed: int
    bound_kind: str
    bound_value: float
    passed: bool
    degenerate: bool = False
    abs_tol: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)

    @classmethod
    def judge(cls, check, estimate, std_error, paths, seed, bound_kind, bound_value, extra=None, abs_tol=0.0):
        """Apply the 3-SE rule; a positive ``abs_tol`` widens the band to max(3 SE, abs_tol)."""
        if bound_kind not in BOUND_KINDS:
            raise ValueError(f"unknown bound kind {bound_kind!r}")
        # all-identical paths give a zero standard error; fall back to round-off
        degenerate = not std_error > 0
        se = float(std_error) if not degenerate else float(np.finfo(float).eps * (1.0 + abs(estimate)) * 16)
        tol = max(N_SE * se, abs_tol)
        if bound_kind == "equals":
            ok = abs(estimate - bound_value) <= tol
        elif bound_kind == "at_most":
            ok = estimate <= bound_value + tol
        else:
            ok = estimate >= bound_value - tol
        return cls(check, float(estimate), se, int(paths), int(seed), bound_kind, float(bound_value), bool(ok),
                   degenerate, float(abs_tol), dict(extra or {}))

    def as_dict(self):
        d = asdict(self)
        d.update(d.pop("extra"))
        return d

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)


@dataclass(frozen=True)
class RunningPayoff:
    """L(v, pi, u) = -delta(1-delta)|pi|^2/2 + delta pi.(theta(v) + u)."""

    delta: float
    theta: object

    def __call__(self, v, pi, u):
        v = np.atleast_2d(v)
        pi = np.atleast_2d(pi)
        th = np.asarray(self.theta(v), dtype=float).reshape(pi.shape)
        d = self.delta
        return -0.5 * d * (1 - d) * np.sum(pi * pi, axis=1) + d * np.sum(pi * (th + np.atleast_2d(u)), axis=1)


# ------------------------------------------------------------ feedback maps


def optimal_feedback(driver, field):
    """(pi*, u*) at the grid nodes of an ergodic solution."""
    V, z = field.grid.points, field.z
    return pi_star(driver, V, z), u_star(driver, V, z)


def scenario_response(driver, field, pi):
    """beta*(pi) at the grid nodes for a portfolio given as node values or a callable."""
    V = field.grid.points
    p = _nodes(pi, V, driver.dim)
    return beta_star(driver, V, field.z, p)


def portfolio_response(driver, field, u):
    V = field.grid.points
    return alpha_star(driver, V, field.z, _nodes(u, V, driver.dim))


def _nodes(f, V, k):
    arr = f(V) if callable(f) else f
    return np.ascontiguousarray(np.broadcast_to(np.asarray(arr, dtype=float), (V.shape[0], k)))


# ------------------------------------------------------------ Monte Carlo


def martingale_check(field, driver, model, pi, u, expect="equals", *, x0=1.0, T=1.0, paths=100_000, seed=0,
                     dt=0.01, jobs=1, check="martingale"):
    """E^u[(X_T/x0)^delta exp(y(V_T) - y(v0) - lambda T)] against 1.

    ``expect`` is ``equals`` for the optimal pair, ``at_most`` when the
    scenario is the best response to ``pi``, ``at_least`` when the portfolio is
    the best response to ``u``.
    """
    if driver.utility.kind != "power":
        raise ValueError("the wealth ratio check is stated for power utility")
    if x0 <= 0:
        raise ValueError("initial wealth must be positive")
    d = driver.utility.delta
    grid = field.grid
    tab = FeedbackTables.from_maps(grid, model, _nodes(pi, grid.points, driver.dim),
                                   _nodes(u, grid.points, driver.dim), field.y)
    if not (np.all(np.isfinite(tab.pi)) and np.all(np.isfinite(tab.u))):
        raise ValueError("feedback maps must be bounded on the grid")
    sim = simulate_paths(tab, model.kappa, T, dt, paths, seed, "scenario", d, v0=field.v0, jobs=jobs)
    y0 = float(field.y_at(field.v0)[0])
    w = np.exp(d * sim.log_wealth + sim.y_T - y0 - field.lam * T)
    est = float(np.mean(w))
    se = float(np.std(w, ddof=1) / np.sqrt(paths)) if paths > 1 else 0.0
    return MonteCarloReport.judge(check, est, se, paths, seed, expect, 1.0, {"T": T, "dt": dt})


def log_mean_exp_rate(integrals, T):
    """(1/T) log mean exp(I) with its delta-method standard error and effective sample size."""
    I = np.asarray(integrals, dtype=float)
    P = I.size
    rate = (logsumexp(I) - np.log(P)) / T
    w = np.exp(I - I.max())
    mean = w.mean()
    se = w.std(ddof=1) / np.sqrt(P) / (mean * T) if P > 1 else 0.0
    ess = w.sum() ** 2 / np.sum(w * w)
    return float(rate), float(se), float(ess)


def risk_sensitive_rate(model, delta, pi, u, *, grid, T=20.0, paths=100_000, seed=0, dt=0.04, v0=None,
                        bound_kind="equals", bound_value=0.0, trajectory=(5.0, 10.0, 15.0, 20.0), jobs=1,
                        check="risk_sensitive_rate", abs_tol=0.0):
    """(1/T) log E^{pi,u} exp(int_0^T L dt), simulating under the game drift delta*pi + u."""
    k = model.dim_noise
    tab = FeedbackTables.from_maps(grid, model, _nodes(pi, grid.points, k), _nodes(u, grid.points, k))
    ckpt = tuple(t for t in trajectory if 0 < t <= T)
    v0 = model.fixed_point if v0 is None else v0
    sim = simulate_paths(tab, model.kappa, T, dt, paths, seed, "game", delta, v0=v0, checkpoints=ckpt, jobs=jobs)
    rate, se, ess = log_mean_exp_rate(sim.int_payoff, T)
    if ess < 100:
        warnings.warn(f"effective sample size {ess:.1f} < 100; exponential weights have collapsed",
                      VarianceWarning, stacklevel=2)
    traj = [[float(t), log_mean_exp_rate(sim.int_payoff_at[:, i], t)[0]] for i, t in enumerate(sim.checkpoints)]
    return MonteCarloReport.judge(check, rate, se, paths, seed, bound_kind, bound_value,
                                  {"T": T, "dt": dt, "ess": ess, "trajectory": traj}, abs_tol)


# ------------------------------------------------------------ comparison


def z_probes(k, seed=0, count=24, scale=2.0):
    """Gradient probe set: the origin, signed axis points at three scales, and random points."""
    pts = [np.zeros(k)]
    for s in (0.05, 0.5, scale):
        for j in range(k):
            e = np.zeros(k)
            e[j] = s
            pts += [e, -e]
    r = np.random.default_rng(seed).uniform(-scale, scale, size=(count, k))
    return np.vstack([np.array(pts), r])


def check_dominance(g1, g2, grid, k, probes=None, tol=1e-12):
    """Raise :class:`DominanceError` with a witness unless G1 >= G2 on grid x probes."""
    probes = z_probes(k) if probes is None else probes
    V = grid.points
    for z in probes:
        Z = np.broadcast_to(z, (V.shape[0], k))
        a, _ = g1.evaluate(V, Z)
        b, _ = g2.evaluate(V, Z)
        bad = np.flatnonzero(a < b - tol)
        if bad.size:
            i = bad[0]
            witness = {"v": V[i].tolist(), "z": z.tolist(), "G1": float(a[i]), "G2": float(b[i])}
            raise DominanceError(f"G1 < G2 at v={V[i].tolist()}, z={z.tolist()}", witness)


@dataclass(frozen=True)
class ComparisonResult:
    lam1: float
    lam2: float
    passed: bool

    def as_dict(self):
        return {"lambda1": self.lam1, "lambda2": self.lam2, "passed": self.passed}


def comparison_check(g1, g2, grid, *, model, rho_schedule=None, probes=None, tol=1e-4):
    """Solve both ergodic problems after verifying G1 >= G2; passes iff lambda1 >= lambda2 - tol."""
    check_dominance(g1, g2, grid, model.dim_noise, probes)
    kw = {} if rho_schedule is None else {"rho_schedule": rho_schedule}
    f1 = solve_ergodic_vanishing_discount(g1, grid, model=model, **kw)
    f2 = solve_ergodic_vanishing_discount(g2, grid, model=model, **kw)
    return ComparisonResult(f1.lam, f2.lam, bool(f1.lam >= f2.lam - tol))


def dominated_generator(base, weight=0.1):
    """G - weight * min(1, |z|^2 + (1 + tanh v_1)/2): pointwise below G and not a constant shift."""

    def inner(v, z):
        return np.sum(z * z, axis=1) + 0.5 * (1.0 + np.tanh(v[:, 0]))

    def fn(v, z):
        g, _ = base.evaluate(v, z)
        return g - weight * np.minimum(1.0, inner(v, z))

    def grad(v, z):
        _, dg = base.evaluate(v, z)
        active = (inner(v, z) < 1.0)[:, None]
        return dg - weight * np.where(active, 2.0 * z, 0.0)

    return FunctionGenerator(fn, grad)


# ------------------------------------------------------------ grid oracles


def _pi_cap(spec, v, z):
    """Half-width of a box certain to contain every best-response portfolio."""
    th = np.linalg.norm(_theta(spec, v[None, :])[0])
    ku = spec.u_set.max_norm()
    ut = spec.utility
    scale = 1.0 / (1.0 - ut.delta) if ut.kind == "power" else (1.0 / ut.gamma if ut.kind == "exponential" else 1.0)
    return scale * (th + np.linalg.norm(z) + ku) + 0.25


def _grid_in(cset, lo, hi, res):
    """Grid of ``cset`` restricted to the box [lo, hi]."""
    slo, shi = cset.bounds()
    lo = np.maximum(lo, slo)
    hi = np.minimum(hi, shi)
    axes = [np.arange(a, b + 0.5 * res, res) if b > a else np.array([a]) for a, b in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, cset.dim)
    if cset.kind in ("ball", "ordered_box"):
        mesh = mesh[cset.contains(mesh, tol=1e-9)]
    return mesh


def _payoff_matrix(spec, v, z, P, U, chunk=2_000_000):
    """F(pi_i, u_j) as an array of shape (len(P), len(U))."""
    k = spec.dim
    out = np.empty((P.shape[0], U.shape[0]))
    rows = max(1, chunk // max(U.shape[0], 1))
    for s in range(0, P.shape[0], rows):
        p = P[s:s + rows]
        pp = np.repeat(p, U.shape[0], axis=0)
        uu = np.tile(U, (p.shape[0], 1))
        n = pp.shape[0]
        out[s:s + rows] = _F(spec, np.broadcast_to(v, (n, v.shape[0])), np.broadcast_to(z, (n, k)), pp, uu
                             ).reshape(p.shape[0], U.shape[0])
    return out


def _value_on(spec, v, z, P, U):
    M = _payoff_matrix(spec, v, z, P, U)
    if spec.order == "max_min":
        inner = M.min(axis=1)
        i = int(np.argmax(inner))
        return float(inner[i]), P[i], U[int(np.argmin(M[i]))]
    if spec.order == "sup_inf":
        inner = M.min(axis=0)
        j = int(np.argmax(inner))
    else:
        inner = M.max(axis=0)
        j = int(np.argmin(inner))
    i = int(np.argmin(M[:, j])) if spec.order == "sup_inf" else int(np.argmax(M[:, j]))
    return float(inner[j]), P[i], U[j]


def _oracle_sets(spec, v, z, pi_cap=None):
    cap = _pi_cap(spec, v, z) if pi_cap is None else pi_cap
    k = spec.dim
    return ConvexSet.box([-cap] * k, [cap] * k), cap


def brute_force_G(spec, v, z, resolution=1e-3, pi_cap=None, max_pairs=500_000):
    """Exhaustive-grid value of the Hamiltonian in the variant's order (inf-sup, sup-inf or max-min).

    When the full product grid is too large, a coarse pass locates the
    optimum and a second pass at ``resolution`` searches a window around it.
    """
    if spec.dim > 2:
        raise ValueError("grid oracle supports sets of dimension <= 2")
    v = np.atleast_1d(np.asarray(v, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    box, cap = _oracle_sets(spec, v, z, pi_cap)
    k = spec.dim
    full_lo, full_hi = -cap * np.ones(k), cap * np.ones(k)
    ulo, uhi = spec.u_set.bounds()
    n_pi = np.prod([max(1, (min(b, cap) - max(a, -cap)) / resolution + 1)
                    for a, b in zip(*spec.pi_set.bounds())])
    n_u = np.prod([max(1, (b - a) / resolution + 1) for a, b in zip(ulo, uhi)])
    if n_pi * n_u <= max_pairs:
        return _value_on(spec, v, z, _grid_in(spec.pi_set, full_lo, full_hi, resolution),
                         _grid_in(spec.u_set, ulo, uhi, resolution))[0]
    coarse = resolution
    while True:
        coarse *= 2.0
        P = _grid_in(spec.pi_set, full_lo, full_hi, coarse)
        U = _grid_in(spec.u_set, ulo, uhi, coarse)
        if P.shape[0] * U.shape[0] <= max_pairs:
            break
    _, p_best, u_best = _value_on(spec, v, z, P, U)
    # halve the spacing level by level; only the outer player is windowed,
    # since the inner best response may jump across the whole set
    value = None
    while coarse > resolution * (1 + 1e-9):
        w = 3.0 * coarse
        coarse = max(coarse / 2.0, resolution)
        if spec.order == "max_min":
            P = _grid_in(spec.pi_set, np.maximum(p_best - w, full_lo), np.minimum(p_best + w, full_hi), coarse)
            U = _grid_in(spec.u_set, ulo, uhi, coarse)
        else:
            P = _grid_in(spec.pi_set, full_lo, full_hi, coarse)
            U = _grid_in(spec.u_set, u_best - w, u_best + w, coarse)
        value, p_best, u_best = _value_on(spec, v, z, P, U)
    return value


@dataclass(frozen=True)
class SaddleGap:
    maxmin: float
    minmax: float
    gap: float


def saddle_gap(spec, v, z, resolution=1e-2, pi_cap=None):
    """max_pi min_u and min_u max_pi of F on the same grids; weak duality makes the gap >= 0 exactly."""
    if spec.dim > 2:
        raise ValueError("grid oracle supports sets of dimension <= 2")
    v = np.atleast_1d(np.asarray(v, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    _, cap = _oracle_sets(spec, v, z, pi_cap)
    k = spec.dim
    P = _grid_in(spec.pi_set, -cap * np.ones(k), cap * np.ones(k), resolution)
    ulo, uhi = spec.u_set.bounds()
    U = _grid_in(spec.u_set, ulo, uhi, resolution)
    M = _payoff_matrix(spec, v, z, P, U)
    maxmin = float(M.min(axis=1).max())
    minmax = float(M.max(axis=0).min())
    return SaddleGap(maxmin, minmax, minmax - maxmin)


def concavity_check(spec, v, z, pi, u, h=1e-2):
    """Second differences of F in pi and in u at the given points (both <= 0 means concave-concave)."""
    v = np.atleast_2d(v)
    z = np.atleast_2d(z)
    pi = np.atleast_2d(pi)
    u = np.atleast_2d(u)
    k = spec.dim
    d2pi = np.empty((pi.shape[0], k))
    d2u = np.empty((pi.shape[0], k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = h
        f0 = _F(spec, v, z, pi, u)
        d2pi[:, j] = _F(spec, v, z, pi + e, u) - 2 * f0 + _F(spec, v, z, pi - e, u)
        d2u[:, j] = _F(spec, v, z, pi, u + e) - 2 * f0 + _F(spec, v, z, pi, u - e)
    return d2pi, d2u
