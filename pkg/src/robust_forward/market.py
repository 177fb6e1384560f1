"""Stochastic factor market with model uncertainty.

The factor ``V`` lives in R^m and is driven by a k-dimensional Brownian motion
``W`` through a constant loading ``kappa`` of shape ``(m, k)``; portfolios,
scenarios and the market price of risk are k-vectors.  In the fully specified
market m == k; the single-stock example with a frozen second factor is the
m=1, k=2 case.

All state functions take a batch ``(N, m)`` and return ``(N, ...)``.
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng
from .sets import ConvexSet

log = logging.getLogger(__name__)


class RankDeficiencyError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class FactorModelSpec:
    dim_factor: int
    dim_noise: int
    dim_stocks: int
    eta: Callable
    kappa: np.ndarray
    b: Callable
    sigma: Callable
    theta_bound: float
    theta_lipschitz: float
    dissipativity: float
    theta_fn: Optional[Callable] = None
    fixed_point: Optional[np.ndarray] = None
    name: str = "custom"

    def __post_init__(self):
        kappa = np.atleast_2d(np.asarray(self.kappa, dtype=float))
        if kappa.shape != (self.dim_factor, self.dim_noise):
            raise ValueError(f"kappa must have shape ({self.dim_factor}, {self.dim_noise}), got {kappa.shape}")
        if not 1 <= self.dim_stocks <= self.dim_noise:
            raise ValueError("need 1 <= n <= d")
        if np.linalg.eigvalsh(kappa @ kappa.T).min() <= 0:
            raise ValueError("kappa kappa^T must be positive definite")
        object.__setattr__(self, "kappa", kappa)
        fp = np.zeros(self.dim_factor) if self.fixed_point is None else np.asarray(self.fixed_point, float)
        object.__setattr__(self, "fixed_point", fp)

    @property
    def kappa_norm(self):
        return float(np.sqrt(np.trace(self.kappa @ self.kappa.T)))

    def theta(self, v):
        """Market price of risk for a batch of states."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if self.theta_fn is not None:
            return np.asarray(self.theta_fn(v), dtype=float).reshape(v.shape[0], self.dim_noise)
        return _theta_batch(self.sigma(v), self.b(v))

    def stationary_sd(self):
        """Per-axis standard deviation of the linearised stationary law."""
        return np.sqrt(np.diag(self.kappa @ self.kappa.T) / (2.0 * self.dissipativity))


def _theta_batch(sig, bb):
    sig = np.asarray(sig, dtype=float)
    bb = np.asarray(bb, dtype=float)
    gram = np.einsum("nij,nkj->nik", sig, sig)
    w = np.linalg.solve(gram, bb[..., None])[..., 0]
    return np.einsum("nij,ni->nj", sig, w)


def market_price_of_risk(spec, v):
    """theta(v) = sigma^T (sigma sigma^T)^{-1} b at a single state ``v``."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    sig = np.asarray(spec.sigma(v[None, :]), dtype=float)[0]
    bb = np.asarray(spec.b(v[None, :]), dtype=float)[0]
    if np.linalg.matrix_rank(sig) < sig.shape[0]:
        raise RankDeficiencyError(f"sigma(v) is rank deficient at v={v.tolist()}")
    gram = sig @ sig.T
    theta = sig.T @ np.linalg.solve(gram, bb)
    resid = np.linalg.norm(sig @ theta - bb)
    if resid > 1e-12 * max(1.0, np.linalg.norm(bb)):
        raise RankDeficiencyError(f"ill-conditioned sigma sigma^T at v={v.tolist()} (residual {resid:.2e})")
    return theta


# ------------------------------------------------------------------ fixtures


def _const_sigma(n, k, level):
    s = np.zeros((n, k))
    s[np.arange(n), np.arange(n)] = level

    def sigma(v):
        return np.broadcast_to(s, (np.atleast_2d(v).shape[0], n, k))

    return sigma


def ou_tanh_model(a=2.0, theta_max=0.5, dim=1, stock_vol=0.2):
    """Fully hedgeable fixture: eta(v) = -a v, theta(v) = theta_max tanh(v) per axis.

    kappa = I / sqrt(dim) so that the normalisation ||kappa|| = 1 holds.
    """
    kappa = np.eye(dim) / np.sqrt(dim)

    def eta(v):
        return -a * np.asarray(v, dtype=float)

    def b(v):
        return stock_vol * theta_max * np.tanh(np.atleast_2d(v))

    def theta_fn(v):
        return theta_max * np.tanh(v)

    return FactorModelSpec(
        dim_factor=dim, dim_noise=dim, dim_stocks=dim, eta=eta, kappa=kappa, b=b,
        sigma=_const_sigma(dim, dim, stock_vol), theta_bound=theta_max, theta_lipschitz=theta_max,
        dissipativity=a, theta_fn=theta_fn, name="ou_tanh",
    )


def constant_theta_model(theta=0.4, a=2.0, dim=1, stock_vol=0.2):
    """Factor-independent market price of risk (the analytic baseline)."""
    kappa = np.eye(dim) / np.sqrt(dim)
    th = np.broadcast_to(np.atleast_1d(np.asarray(theta, dtype=float)), (dim,)).copy()

    def eta(v):
        return -a * np.asarray(v, dtype=float)

    def b(v):
        return np.broadcast_to(stock_vol * th, (np.atleast_2d(v).shape[0], dim))

    def theta_fn(v):
        return np.broadcast_to(th, (v.shape[0], dim)).copy()

    return FactorModelSpec(
        dim_factor=dim, dim_noise=dim, dim_stocks=dim, eta=eta, kappa=kappa, b=b,
        sigma=_const_sigma(dim, dim, stock_vol), theta_bound=float(np.linalg.norm(th)),
        theta_lipschitz=0.0, dissipativity=a, theta_fn=theta_fn, name="constant_theta",
    )


def scalar_theta_model(theta_fn, theta_bound, theta_lipschitz, a=2.0, stock_vol=0.2, name="scalar_theta"):
    """One stock, one OU factor, market price of risk ``theta_fn`` (batch (N,1) -> (N,1))."""

    def eta(v):
        return -a * np.asarray(v, dtype=float)

    def b(v):
        return stock_vol * np.asarray(theta_fn(np.atleast_2d(v)), dtype=float)

    return FactorModelSpec(
        dim_factor=1, dim_noise=1, dim_stocks=1, eta=eta, kappa=np.eye(1), b=b,
        sigma=_const_sigma(1, 1, stock_vol), theta_bound=theta_bound, theta_lipschitz=theta_lipschitz,
        dissipativity=a, theta_fn=theta_fn, name=name,
    )


def single_stock_factor_model(a=2.0, theta_max=0.5, rho_bar=0.6, stock_vol=0.2):
    """One stock, one traded-correlated factor, one untraded noise (m=1, k=2)."""
    kappa = np.array([[rho_bar, np.sqrt(1.0 - rho_bar**2)]])

    def eta(v):
        return -a * np.asarray(v, dtype=float)

    def b(v):
        return stock_vol * theta_max * np.tanh(np.atleast_2d(v)[:, :1])

    def theta_fn(v):
        out = np.zeros((v.shape[0], 2))
        out[:, 0] = theta_max * np.tanh(v[:, 0])
        return out

    return FactorModelSpec(
        dim_factor=1, dim_noise=2, dim_stocks=1, eta=eta, kappa=kappa, b=b,
        sigma=_const_sigma(1, 2, stock_vol), theta_bound=theta_max, theta_lipschitz=theta_max,
        dissipativity=a, theta_fn=theta_fn, name="single_stock",
    )


# ------------------------------------------------------------ admissibility


@dataclass
class AdmissibilityReport:
    passed: bool
    c_eta: float
    c_eta_empirical: float
    k_theta: float
    c_theta: float
    k_u: float
    threshold: float
    dissipative_on_samples: bool
    kappa_norm: float
    sigma_full_rank: bool
    notes: list = field(default_factory=list)

    def as_dict(self):
        return dict(self.__dict__)


def well_posedness_threshold(delta, c_theta, k_theta, k_u):
    """Smallest dissipativity constant accepted for the ergodic equation."""
    return 3.0 * delta * c_theta / (1.0 - delta) * max(k_theta + k_u, 1.0)


def validate_assumptions(spec, delta, scenario_set, sample_count=4000, seed=0):
    """Probe the standing assumptions on random state pairs.

    Failures are reported, never raised.
    """
    if sample_count < 1000:
        raise ValueError("sample_count must be >= 1000")
    gen = np.random.default_rng(seed)
    m = spec.dim_factor
    half = 6.0 * float(spec.kappa_norm) / np.sqrt(2.0 * spec.dissipativity)
    v = gen.uniform(-half, half, size=(sample_count, m)) + spec.fixed_point
    vb = gen.uniform(-half, half, size=(sample_count, m)) + spec.fixed_point
    dv = v - vb
    sq = np.sum(dv * dv, axis=1)
    ok = sq > 1e-24
    inner = np.sum((spec.eta(v) - spec.eta(vb)) * dv, axis=1)
    c_eta_emp = float(np.min(-inner[ok] / sq[ok]))
    dissipative = bool(np.all(inner[ok] <= -spec.dissipativity * sq[ok] * (1.0 - 1e-9) + 1e-12))

    th, thb = spec.theta(v), spec.theta(vb)
    k_theta_emp = float(np.max(np.linalg.norm(np.vstack([th, thb]), axis=1)))
    c_theta_emp = float(np.max(np.linalg.norm(th - thb, axis=1)[ok] / np.sqrt(sq[ok])))
    k_theta = max(spec.theta_bound, k_theta_emp)
    c_theta = max(spec.theta_lipschitz, c_theta_emp)
    k_u = scenario_set.max_norm()
    thr = well_posedness_threshold(delta, c_theta, k_theta, k_u)

    notes = []
    if k_theta_emp > spec.theta_bound * (1 + 1e-9) + 1e-12:
        notes.append(f"|theta| reached {k_theta_emp:.4g} above the declared bound {spec.theta_bound:.4g}")
    if c_theta_emp > spec.theta_lipschitz * (1 + 1e-9) + 1e-12:
        notes.append(f"theta Lipschitz ratio {c_theta_emp:.4g} above the declared {spec.theta_lipschitz:.4g}")
    full_rank = True
    for p in v[:: max(1, sample_count // 50)]:
        sig = np.asarray(spec.sigma(p[None, :]))[0]
        if np.linalg.matrix_rank(sig) < spec.dim_stocks:
            full_rank = False
            notes.append(f"sigma rank deficient at {p.tolist()}")
            break
    if abs(spec.kappa_norm - 1.0) > 1e-9:
        notes.append(f"||kappa|| = {spec.kappa_norm:.6g}, expected 1")
    if not dissipative:
        notes.append("dissipativity inequality violated on a sampled pair")
    passed = bool(dissipative and spec.dissipativity >= thr and full_rank)
    if spec.dissipativity < thr:
        notes.append(f"C_eta={spec.dissipativity:.4g} below the threshold {thr:.4g}")
    for n in notes:
        log.warning(n)
    return AdmissibilityReport(
        passed=passed, c_eta=spec.dissipativity, c_eta_empirical=c_eta_emp, k_theta=k_theta,
        c_theta=c_theta, k_u=k_u, threshold=thr, dissipative_on_samples=dissipative,
        kappa_norm=spec.kappa_norm, sigma_full_rank=full_rank, notes=notes,
    )


def project(cset: ConvexSet, x):
    return cset.project(x)


# --------------------------------------------------------------- simulation


def constant_map(value):
    value = np.atleast_1d(np.asarray(value, dtype=float))

    def fmap(v):
        return np.broadcast_to(value, (np.atleast_2d(v).shape[0], value.shape[0])).copy()

    return fmap


def zero_map(k):
    return constant_map(np.zeros(k))


@dataclass(frozen=True, eq=False)
class MeasureShift:
    """Which probability measure the Brownian increments are sampled under.

    ``base``: W itself.  ``scenario``: W has drift u(V).  ``game``: W has drift
    delta*pi(V) + u(V).  Changes of measure are realised as drift shifts, not
    as likelihood weights.
    """

    mode: str = "base"
    u: Optional[Callable] = None
    pi: Optional[Callable] = None
    delta: float = 0.0

    def __post_init__(self):
        if self.mode not in ("base", "scenario", "game"):
            raise ValueError(f"unknown measure mode {self.mode!r}")
        if self.mode in ("scenario", "game") and self.u is None:
            raise ValueError("scenario/game modes need a feedback map u")
        if self.mode == "game" and self.pi is None:
            raise ValueError("game mode needs a feedback map pi")

    @classmethod
    def base(cls):
        return cls("base")

    @classmethod
    def scenario(cls, u):
        return cls("scenario", u=u)

    @classmethod
    def game(cls, pi, u, delta):
        return cls("game", u=u, pi=pi, delta=float(delta))

    def drift(self, v, k):
        """Drift added to dW (shape ``(N, k)``)."""
        if self.mode == "base":
            return np.zeros((v.shape[0], k))
        if self.mode == "scenario":
            return np.asarray(self.u(v), dtype=float)
        return self.delta * np.asarray(self.pi(v), dtype=float) + np.asarray(self.u(v), dtype=float)

    def scenario_drift(self, v, k):
        """The scenario part u(V) of the drift (zero in base mode)."""
        if self.mode == "base":
            return np.zeros((v.shape[0], k))
        return np.asarray(self.u(v), dtype=float)


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    times: np.ndarray
    factor: np.ndarray
    seed: int
    dt: float
    shift: MeasureShift
    v0: np.ndarray
    wealth: Optional[np.ndarray] = None
    pi_cap_hits: int = 0

    @property
    def paths(self):
        return self.factor.shape[0]

    def to_csv(self, path):
        """Write rows ``path,t,v_1..v_m,x`` (x empty when no wealth is attached)."""
        m = self.factor.shape[2]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "t"] + [f"v_{i + 1}" for i in range(m)] + ["x"])
            for p in range(self.factor.shape[0]):
                for j, t in enumerate(self.times):
                    x = "" if self.wealth is None else repr(float(self.wealth[p, j]))
                    w.writerow([p, repr(float(t))] + [repr(float(c)) for c in self.factor[p, j]] + [x])


def _check_grid(T, dt, paths):
    if paths < 1:
        raise ValueError("paths must be >= 1")
    if not (dt > 0 and dt <= T / 10.0 * (1 + 1e-12)):
        raise ValueError("need 0 < dt <= T/10")
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * T:
        raise ValueError("T must be an integer multiple of dt")
    return nsteps


def simulate_factor(spec, shift, T, dt, paths, seed, v0=None):
    """Euler-Maruyama paths of dV = (eta(V) + kappa s(V)) dt + kappa dW~.

    ``s`` is the measure-shift drift and W~ a Brownian motion under the shifted
    measure.  Noise for (path, step) comes from the counter-based stream, so an
    ensemble's first p paths do not depend on the ensemble size.
    """
    nsteps = _check_grid(T, dt, paths)
    m, k = spec.dim_factor, spec.dim_noise
    v0 = spec.fixed_point if v0 is None else np.atleast_1d(np.asarray(v0, dtype=float))
    ids = np.arange(paths, dtype=np.int64)
    out = np.empty((paths, nsteps + 1, m))
    V = np.broadcast_to(v0, (paths, m)).astype(float)
    out[:, 0] = V
    sq = np.sqrt(dt)
    kT = spec.kappa.T
    for j in range(nsteps):
        xi = rng.normals(seed, ids, j, k)
        s = shift.drift(V, k)
        V = V + (spec.eta(V) + s @ kT) * dt + (xi * sq) @ kT
        if not np.all(np.isfinite(V)):
            raise DivergenceError(f"factor diverged at step {j + 1}")
        out[:, j + 1] = V
    times = np.arange(nsteps + 1) * dt
    return PathEnsemble(times=times, factor=out, seed=int(seed), dt=float(dt), shift=shift, v0=v0)


def simulate_wealth(ensemble, spec, pi, shift, x0, pi_cap=None):
    """Log-Euler wealth along an existing factor ensemble.

    X_{j+1} = X_j exp(pi^T theta dt - |pi|^2 dt / 2 + pi^T dW), with dW rebuilt
    from the ensemble's counter-based noise plus the measure drift; under the
    scenario measure this is pi^T((theta + u) dt + dW^u).
    """
    if x0 <= 0:
        raise ValueError("initial wealth must be positive")
    if shift is not ensemble.shift:
        raise ValueError("ensemble was simulated under a different measure shift")
    k = spec.dim_noise
    P, S1, _ = ensemble.factor.shape
    dt = ensemble.dt
    sq = np.sqrt(dt)
    ids = np.arange(P, dtype=np.int64)
    logx = np.full(P, np.log(x0))
    wealth = np.empty((P, S1))
    wealth[:, 0] = x0
    hits = 0
    for j in range(S1 - 1):
        V = ensemble.factor[:, j]
        p = np.asarray(pi(V), dtype=float)
        if pi_cap is not None:
            nrm = np.linalg.norm(p, axis=1, keepdims=True)
            over = nrm[:, 0] > pi_cap
            hits += int(over.sum())
            p = np.where(nrm > pi_cap, p * (pi_cap / np.where(nrm > 0, nrm, 1.0)), p)
        xi = rng.normals(ensemble.seed, ids, j, k)
        dW = xi * sq + shift.drift(V, k) * dt
        th = spec.theta(V)
        logx = logx + np.sum(p * th, axis=1) * dt - 0.5 * np.sum(p * p, axis=1) * dt + np.sum(p * dW, axis=1)
        wealth[:, j + 1] = np.exp(logx)
    if hits:
        log.info("portfolio cap bound on %d path-steps", hits)
    return PathEnsemble(
        times=ensemble.times, factor=ensemble.factor, seed=ensemble.seed, dt=dt, shift=shift,
        v0=ensemble.v0, wealth=wealth, pi_cap_hits=hits,
    )
