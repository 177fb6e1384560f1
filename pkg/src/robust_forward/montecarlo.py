"""Fused path simulation of factor, log-wealth and running payoff.

Feedback maps are tabulated once on the factor grid and interpolated
(multilinearly) inside the kernel, so the hot loop never calls back into
Python.  Portfolio, scenario and market-price-of-risk columns are clamped at
the grid edges; drift and the ergodic potential y are extrapolated linearly.

Measure modes: 0 samples W itself, 1 gives W the drift u(V), 2 gives it
delta*pi(V) + u(V).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from ._accel import NUMBA_ENABLED, maybe_njit
from .market import DivergenceError

MODES = {"base": 0, "scenario": 1, "game": 2}


@dataclass(frozen=True, eq=False)
class FeedbackTables:
    grid: object
    eta: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    pi: np.ndarray
    u: np.ndarray

    @classmethod
    def from_maps(cls, grid, model, pi, u, y=None):
        """Tabulate ``pi(V)``, ``u(V)`` (callables or arrays of node values) on ``grid``."""
        V = grid.points
        k = model.dim_noise

        def tab(f):
            arr = f(V) if callable(f) else f
            return np.ascontiguousarray(np.broadcast_to(np.asarray(arr, dtype=float), (grid.size, k)))

        eta = np.asarray(model.eta(V), dtype=float).reshape(grid.size, grid.dim)
        yy = np.zeros(grid.size) if y is None else np.asarray(y, dtype=float)
        return cls(grid, eta, yy, tab(model.theta), tab(pi), tab(u))

    def packed(self):
        ext = np.ascontiguousarray(np.column_stack([self.eta, self.y]))
        clamp = np.ascontiguousarray(np.column_stack([self.theta, self.pi, self.u]))
        return ext, clamp


@dataclass(frozen=True)
class SimulationResult:
    log_wealth: np.ndarray
    int_payoff: np.ndarray
    v_T: np.ndarray
    y_T: np.ndarray
    checkpoints: np.ndarray
    int_payoff_at: np.ndarray
    T: float
    dt: float
    seed: int
    backend: str


# ---------------------------------------------------------------- numba path


# Helpers called from the hot loop take and return scalars only: passing arrays
# between compiled functions costs a reference-count round trip per call.


@maybe_njit
def _cell(x, lo, h, n, clamp):
    t = (x - lo) / h
    i = int(np.floor(t))
    if i < 0:
        i = 0
    if i > n - 2:
        i = n - 2
    w = t - i
    if clamp:
        w = min(max(w, 0.0), 1.0)
    return i, w


@maybe_njit
def _corners(m, x0, x1, lo0, lo1, h0, h1, n0, n1, clamp):
    """Flat indices and weights of the (up to four) interpolation corners."""
    i0, w0 = _cell(x0, lo0, h0, n0, clamp)
    if m == 1:
        return i0, i0 + 1, i0, i0, 1.0 - w0, w0, 0.0, 0.0
    i1, w1 = _cell(x1, lo1, h1, n1, clamp)
    a = i0 * n1 + i1
    return a, a + 1, a + n1, a + n1 + 1, (1 - w0) * (1 - w1), (1 - w0) * w1, w0 * (1 - w1), w0 * w1


@maybe_njit
def _normal_pair(w0, w1):
    r = np.sqrt(-2.0 * np.log((np.float64(w0) + 0.5) * rng.INV_2_32))
    a = rng.TWO_PI * ((np.float64(w1) + 0.5) * rng.INV_2_32)
    return r * np.cos(a), r * np.sin(a)


@maybe_njit
def _path_kernel(seed_lo, seed_hi, path_ids, nsteps, dt, v0, kappa, lo, h, n, ext, clamp, mode, delta,
                 ckpt, out_logx, out_L, out_v, out_y, out_Lc):
    m = kappa.shape[0]
    k = kappa.shape[1]
    sq = np.sqrt(dt)
    nblocks = (k + 3) // 4
    xi = np.empty(4 * nblocks)
    e = np.empty(ext.shape[1])
    c = np.empty(clamp.shape[1])
    s = np.empty(k)
    v = np.empty(m)
    lo0, h0, n0 = lo[0], h[0], n[0]
    lo1, h1, n1 = (lo[1], h[1], n[1]) if m == 2 else (0.0, 1.0, 2)
    klo = np.uint64(seed_lo)
    khi = np.uint64(seed_hi)
    for p in range(path_ids.shape[0]):
        pid = np.uint64(path_ids[p])
        plo = pid & np.uint64(0xFFFFFFFF)
        phi = pid >> np.uint64(32)
        for i in range(m):
            v[i] = v0[i]
        logx = 0.0
        acc = 0.0
        ci = 0
        for j in range(nsteps):
            if ci < ckpt.shape[0] and ckpt[ci] == j:
                out_Lc[p, ci] = acc
                ci += 1
            for b in range(nblocks):
                w0, w1, w2, w3 = rng._philox_scalar(np.uint64(j), np.uint64(b), plo, phi, klo, khi)
                xi[4 * b], xi[4 * b + 1] = _normal_pair(w0, w1)
                if 4 * b + 2 < k:
                    xi[4 * b + 2], xi[4 * b + 3] = _normal_pair(w2, w3)
            a0, a1, a2, a3, q0, q1, q2, q3 = _corners(m, v[0], v[m - 1], lo0, lo1, h0, h1, n0, n1, False)
            for col in range(e.shape[0]):
                e[col] = q0 * ext[a0, col] + q1 * ext[a1, col] + q2 * ext[a2, col] + q3 * ext[a3, col]
            a0, a1, a2, a3, q0, q1, q2, q3 = _corners(m, v[0], v[m - 1], lo0, lo1, h0, h1, n0, n1, True)
            for col in range(c.shape[0]):
                c[col] = q0 * clamp[a0, col] + q1 * clamp[a1, col] + q2 * clamp[a2, col] + q3 * clamp[a3, col]
            pth = 0.0
            pp = 0.0
            pu = 0.0
            pdw = 0.0
            for q in range(k):
                th = c[q]
                pq = c[k + q]
                uq = c[2 * k + q]
                if mode == 0:
                    s[q] = 0.0
                elif mode == 1:
                    s[q] = uq
                else:
                    s[q] = delta * pq + uq
                pth += pq * th
                pp += pq * pq
                pu += pq * uq
                pdw += pq * (xi[q] * sq + s[q] * dt)
            acc += (-0.5 * delta * (1.0 - delta) * pp + delta * (pth + pu)) * dt
            logx += pth * dt - 0.5 * pp * dt + pdw
            for i in range(m):
                inc = e[i] * dt
                for q in range(k):
                    inc += kappa[i, q] * (s[q] * dt + xi[q] * sq)
                v[i] += inc
        if ci < ckpt.shape[0] and ckpt[ci] == nsteps:
            out_Lc[p, ci] = acc
        out_logx[p] = logx
        out_L[p] = acc
        for i in range(m):
            out_v[p, i] = v[i]
        a0, a1, a2, a3, q0, q1, q2, q3 = _corners(m, v[0], v[m - 1], lo0, lo1, h0, h1, n0, n1, False)
        out_y[p] = q0 * ext[a0, m] + q1 * ext[a1, m] + q2 * ext[a2, m] + q3 * ext[a3, m]


def _run_numba(args, path_ids, ckpt):
    (seed, nsteps, dt, v0, kappa, lo, h, n, ext, clamp, mode, delta) = args
    P = path_ids.shape[0]
    m = kappa.shape[0]
    out = (np.empty(P), np.empty(P), np.empty((P, m)), np.empty(P), np.zeros((P, ckpt.shape[0])))
    slo, shi = rng.split_seed(seed)
    _path_kernel(slo, shi, path_ids, nsteps, dt, v0, kappa, lo, h, n, ext, clamp, mode, delta, ckpt, *out)
    return out


# ---------------------------------------------------------------- numpy path


def _interp_rows(tab, lo, h, n, V, clamp):
    if V.shape[1] == 1:
        x = (V[:, 0] - lo[0]) / h[0]
        i = np.clip(np.floor(x).astype(np.int64), 0, n[0] - 2)
        w = x - i
        if clamp:
            w = np.clip(w, 0.0, 1.0)
        return (1.0 - w)[:, None] * tab[i] + w[:, None] * tab[i + 1]
    x0 = (V[:, 0] - lo[0]) / h[0]
    x1 = (V[:, 1] - lo[1]) / h[1]
    i0 = np.clip(np.floor(x0).astype(np.int64), 0, n[0] - 2)
    i1 = np.clip(np.floor(x1).astype(np.int64), 0, n[1] - 2)
    w0 = x0 - i0
    w1 = x1 - i1
    if clamp:
        w0 = np.clip(w0, 0.0, 1.0)
        w1 = np.clip(w1, 0.0, 1.0)
    a = i0 * n[1] + i1
    w0, w1 = w0[:, None], w1[:, None]
    return ((1 - w0) * (1 - w1) * tab[a] + (1 - w0) * w1 * tab[a + 1]
            + w0 * (1 - w1) * tab[a + n[1]] + w0 * w1 * tab[a + n[1] + 1])


def _run_numpy(args, path_ids, ckpt):
    (seed, nsteps, dt, v0, kappa, lo, h, n, ext, clamp, mode, delta) = args
    P = path_ids.shape[0]
    m, k = kappa.shape
    sq = np.sqrt(dt)
    V = np.broadcast_to(v0, (P, m)).copy()
    logx = np.zeros(P)
    acc = np.zeros(P)
    Lc = np.zeros((P, ckpt.shape[0]))
    where = {int(s): i for i, s in enumerate(ckpt)}
    for j in range(nsteps):
        if j in where:
            Lc[:, where[j]] = acc
        xi = rng.normals_numpy(seed, path_ids, j, k)
        e = _interp_rows(ext, lo, h, n, V, False)
        c = _interp_rows(clamp, lo, h, n, V, True)
        th, p, u = c[:, :k], c[:, k:2 * k], c[:, 2 * k:]
        s = np.zeros_like(u) if mode == 0 else (u if mode == 1 else delta * p + u)
        dW = xi * sq + s * dt
        pth = np.sum(p * th, axis=1)
        pp = np.sum(p * p, axis=1)
        pu = np.sum(p * u, axis=1)
        acc = acc + (-0.5 * delta * (1.0 - delta) * pp + delta * (pth + pu)) * dt
        logx = logx + pth * dt - 0.5 * pp * dt + np.sum(p * dW, axis=1)
        V = V + e[:, :m] * dt + (s * dt + xi * sq) @ kappa.T
    if nsteps in where:
        Lc[:, where[nsteps]] = acc
    yT = _interp_rows(ext, lo, h, n, V, False)[:, m]
    return logx, acc, V, yT, Lc


# ---------------------------------------------------------------- driver


def simulate_paths(tables, kappa, T, dt, paths, seed, mode="base", delta=0.0, v0=None, checkpoints=(),
                   backend=None, jobs=1):
    """Simulate ``paths`` independent paths; returns per-path terminal quantities.

    ``log_wealth`` is log(X_T / x0).  ``int_payoff`` is int_0^T L dt (left
    point rule).  ``checkpoints`` are times at which the running integral is
    also recorded.  Results do not depend on ``jobs``.
    """
    nsteps = int(round(T / dt))
    if nsteps < 1 or abs(nsteps * dt - T) > 1e-9 * T:
        raise ValueError("T must be a positive integer multiple of dt")
    if paths < 1:
        raise ValueError("paths must be >= 1")
    grid = tables.grid
    kappa = np.ascontiguousarray(np.atleast_2d(kappa), dtype=float)
    v0 = np.zeros(grid.dim) if v0 is None else np.asarray(np.atleast_1d(v0), dtype=float)
    ext, clamp = tables.packed()
    ckpt = np.array(sorted(int(round(t / dt)) for t in checkpoints), dtype=np.int64)
    args = (int(seed), nsteps, float(dt), v0, kappa, np.array(grid.lower), grid.h, np.array(grid.n, dtype=np.int64),
            ext, clamp, MODES[mode] if isinstance(mode, str) else int(mode), float(delta))
    use_numba = NUMBA_ENABLED if backend is None else backend == "numba"
    run = _run_numba if use_numba else _run_numpy
    ids = np.arange(paths, dtype=np.int64)
    if jobs > 1:
        chunks = np.array_split(ids, jobs)
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(lambda c: run(args, c, ckpt), chunks))
        out = [np.concatenate([p[i] for p in parts]) for i in range(5)]
    else:
        out = run(args, ids, ckpt)
    logx, acc, vT, yT, Lc = out
    if not (np.all(np.isfinite(logx)) and np.all(np.isfinite(vT))):
        raise DivergenceError("non-finite state in path simulation")
    return SimulationResult(logx, acc, vT, yT, ckpt * dt, Lc, float(T), float(dt), int(seed),
                            "numba" if use_numba else "numpy")
