"""Uniform tensor grids (d <= 2) and their finite-difference operators."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

MIN_NODES = 101


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    lower: tuple
    upper: tuple
    n: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lower))
        hi = tuple(float(x) for x in np.atleast_1d(self.upper))
        n = tuple(int(x) for x in np.atleast_1d(self.n))
        if not (len(lo) == len(hi) == len(n)) or len(n) not in (1, 2):
            raise ValueError("grids are one- or two-dimensional")
        if min(n) < MIN_NODES:
            raise ValueError(f"need at least {MIN_NODES} nodes per axis")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("empty grid bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "n", n)

    @classmethod
    def for_model(cls, spec, n=201, width_sd=6.0):
        """Grid centred on the factor's fixed point covering ``width_sd`` stationary deviations."""
        sd = spec.stationary_sd()
        c = spec.fixed_point
        m = spec.dim_factor
        if m > 2:
            raise ValueError("grid solves support factor dimension <= 2")
        return cls(tuple(c - width_sd * sd), tuple(c + width_sd * sd), (n,) * m)

    @property
    def dim(self):
        return len(self.n)

    @property
    def size(self):
        return int(np.prod(self.n))

    @property
    def h(self):
        return np.array([(b - a) / (k - 1) for a, b, k in zip(self.lower, self.upper, self.n)])

    @cached_property
    def axes(self):
        return [np.linspace(a, b, k) for a, b, k in zip(self.lower, self.upper, self.n)]

    @cached_property
    def points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    @cached_property
    def multi_index(self):
        return np.stack(np.unravel_index(np.arange(self.size), self.n), axis=1)

    @cached_property
    def boundary_axis(self):
        """Lowest axis on whose edge a node sits, -1 for interior nodes."""
        mi = self.multi_index
        out = np.full(self.size, -1)
        for ax in reversed(range(self.dim)):
            edge = (mi[:, ax] == 0) | (mi[:, ax] == self.n[ax] - 1)
            out[edge] = ax
        return out

    @property
    def interior(self):
        return self.boundary_axis < 0

    def covers(self, spec, width_sd=6.0):
        sd = spec.stationary_sd()
        lo = np.array(self.lower)
        hi = np.array(self.upper)
        return bool(np.all(lo <= spec.fixed_point - width_sd * sd + 1e-12)
                    and np.all(hi >= spec.fixed_point + width_sd * sd - 1e-12))

    def nearest_index(self, v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        idx = [int(np.clip(round((v[i] - self.lower[i]) / self.h[i]), 0, self.n[i] - 1)) for i in range(self.dim)]
        return int(np.ravel_multi_index(idx, self.n))

    def interpolate(self, values, v, clamp=False):
        """Multilinear interpolation of node values (``(size,)`` or ``(size, k)``) at points ``(P, m)``."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if clamp:
            v = np.clip(v, self.lower, self.upper)
        vals = np.asarray(values, dtype=float)
        shape = self.n + vals.shape[1:]
        if self.dim == 1 and vals.ndim == 1:
            x = v[:, 0]
            out = np.interp(x, self.axes[0], vals)
            if not clamp:
                ax = self.axes[0]
                lo = x < ax[0]
                hi = x > ax[-1]
                out = np.where(lo, vals[0] + (x - ax[0]) * (vals[1] - vals[0]) / (ax[1] - ax[0]), out)
                out = np.where(hi, vals[-1] + (x - ax[-1]) * (vals[-1] - vals[-2]) / (ax[-1] - ax[-2]), out)
            return out
        f = RegularGridInterpolator(self.axes, vals.reshape(shape), bounds_error=False, fill_value=None)
        return f(v)

    def outside(self, v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        return np.any((v < np.array(self.lower) - 1e-12) | (v > np.array(self.upper) + 1e-12), axis=1)


def _axis_stencil(n, h):
    """1-D first-derivative (central, one-sided second order at the ends) and second-derivative matrices."""
    main = np.zeros(n)
    d1 = sp.diags([-np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1], format="lil") / (2 * h)
    d1[0, 0:3] = np.array([-3.0, 4.0, -1.0]) / (2 * h)
    d1[n - 1, n - 3:n] = np.array([1.0, -4.0, 3.0]) / (2 * h)
    d2 = sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="lil") / h**2
    d2[0, :] = 0
    d2[n - 1, :] = 0
    fwd = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], format="lil") / h
    fwd[n - 1, :] = 0
    bwd = sp.diags([np.ones(n), -np.ones(n - 1)], [0, -1], format="lil") / h
    bwd[0, :] = 0
    return d1.tocsr(), d2.tocsr(), fwd.tocsr(), bwd.tocsr()


def _lift(mat, axis, n):
    """Embed a 1-D operator along ``axis`` of a tensor grid."""
    ops = [sp.identity(k, format="csr") for k in n]
    ops[axis] = mat
    out = ops[0]
    for o in ops[1:]:
        out = sp.kron(out, o, format="csr")
    return out


class GridOperators:
    """Sparse derivative matrices on a grid (flattened in C order)."""

    def __init__(self, grid):
        self.grid = grid
        h = grid.h
        self.d1, self.d2, self.fwd, self.bwd = [], [], [], []
        for ax in range(grid.dim):
            a, b, f, w = _axis_stencil(grid.n[ax], h[ax])
            self.d1.append(_lift(a, ax, grid.n))
            self.d2.append(_lift(b, ax, grid.n))
            self.fwd.append(_lift(f, ax, grid.n))
            self.bwd.append(_lift(w, ax, grid.n))
        self.mixed = None
        if grid.dim == 2:
            self.mixed = self.d1[0] @ self.d1[1]
        interior = grid.interior.astype(float)
        self.interior_mask = sp.diags(interior, format="csr")
        self.boundary_rows = self._boundary_matrix()

    def _boundary_matrix(self):
        g = self.grid
        rows, cols, vals = [], [], []
        mi = g.multi_index
        for node in np.flatnonzero(~g.interior):
            ax = g.boundary_axis[node]
            step = 1 if mi[node, ax] == 0 else -1
            idx = mi[node].copy()
            nbrs = []
            for s in (1, 2):
                j = idx.copy()
                j[ax] += step * s
                nbrs.append(int(np.ravel_multi_index(tuple(j), g.n)))
            rows += [node, node, node]
            cols += [node, nbrs[0], nbrs[1]]
            vals += [1.0, -2.0, 1.0]
        return sp.csr_matrix((vals, (rows, cols)), shape=(g.size, g.size))

    def gradient(self, y):
        return np.stack([d @ y for d in self.d1], axis=1)

    def generator(self, kappa, drift):
        """0.5 Tr(kappa kappa^T D^2) + drift . D, zero on boundary rows.

        The first-order term is centred where the cell Peclet number allows it
        and upwinded otherwise.
        """
        A = kappa @ kappa.T
        h = self.grid.h
        L = sp.csr_matrix((self.grid.size, self.grid.size))
        for i in range(self.grid.dim):
            L = L + 0.5 * A[i, i] * self.d2[i]
            mu = drift[:, i]
            central = np.abs(mu) * h[i] <= A[i, i]
            up = np.where(mu > 0, mu, 0.0) * ~central
            dn = np.where(mu < 0, mu, 0.0) * ~central
            L = L + sp.diags(mu * central) @ self.d1[i] + sp.diags(up) @ self.fwd[i] + sp.diags(dn) @ self.bwd[i]
        if self.grid.dim == 2:
            L = L + A[0, 1] * self.mixed
        return (self.interior_mask @ L).tocsr()

    def extrapolate_boundary(self, f):
        """Overwrite boundary nodes so that the normal second difference vanishes."""
        g = self.grid
        mi = g.multi_index
        f = f.copy()
        for ax in reversed(range(g.dim)):
            nodes = np.flatnonzero(g.boundary_axis == ax)
            step = np.where(mi[nodes, ax] == 0, 1, -1)
            j1 = mi[nodes].copy()
            j1[:, ax] += step
            j2 = mi[nodes].copy()
            j2[:, ax] += 2 * step
            i1 = np.ravel_multi_index(tuple(j1.T), g.n)
            i2 = np.ravel_multi_index(tuple(j2.T), g.n)
            f[nodes] = 2.0 * f[i1] - f[i2]
        return f
