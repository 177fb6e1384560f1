"""Pointwise Hamiltonians, drivers and the four feedback maps.

Every function accepts either single points (``v`` of shape ``(m,)``, ``z``
of shape ``(k,)``) or batches (``(N, m)`` and ``(N, k)``) and returns results
of matching rank.  The solver works with batches through :meth:`DriverSpec.evaluate`.

Player order per utility:

* power, log: ``G = inf_u sup_pi F``; the portfolio is the inner player.
* exponential: ``G = sup_u inf_pi F`` (the sign of the utility flips).
* section7 (log utility with quadratic realisation, tau = -1):
  ``G = max_pi min_u F``; the scenario is the inner player and no saddle exists.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .sets import ConvexSet

log = logging.getLogger(__name__)

VARIANTS = ("generic", "model1", "model2", "section7")
PI_TIE_TOL = 1e-9


class MembershipError(ValueError):
    pass


class InnerSolverError(ArithmeticError):
    pass


class BranchWarning(UserWarning):
    """Closed-form strategy left the portfolio set and was projected back."""


@dataclass(frozen=True)
class UtilityClass:
    kind: str
    delta: float = 0.5
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("power", "log", "exponential"):
            raise ValueError(f"unknown utility {self.kind!r}")
        if self.kind == "power" and not 0.0 < self.delta < 1.0:
            raise ValueError("power utility needs delta in (0, 1)")
        if self.kind == "exponential" and not self.gamma > 0.0:
            raise ValueError("exponential utility needs gamma > 0")

    @classmethod
    def power(cls, delta):
        return cls("power", delta=float(delta))

    @classmethod
    def log(cls):
        return cls("log")

    @classmethod
    def exponential(cls, gamma):
        return cls("exponential", gamma=float(gamma))


@dataclass(frozen=True, eq=False)
class DriverSpec:
    utility: UtilityClass
    pi_set: ConvexSet
    u_set: ConvexSet
    theta: Callable
    variant: str = "generic"
    realization_tau: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown driver variant {self.variant!r}")
        if self.pi_set.dim != self.u_set.dim:
            raise ValueError("portfolio and scenario sets must share a dimension")
        if not self.u_set.bounded:
            raise ValueError("the scenario set must be compact")
        if not bool(self.pi_set.contains(np.zeros(self.pi_set.dim))):
            raise ValueError("the portfolio set must contain the origin")
        if self.variant == "model1":
            if self.utility.kind != "power" or self.pi_set.kind != "unconstrained":
                raise ValueError("model1 needs power utility and an unconstrained portfolio set")
        if self.variant == "model2":
            line = self.pi_set.kind == "slab" and self.pi_set.dim == 2 and self.pi_set.lower[1] == 0.0 \
                and self.pi_set.upper[1] == 0.0 and np.isinf(self.pi_set.lower[0]) and np.isinf(self.pi_set.upper[0])
            if self.utility.kind != "power" or not line or self.u_set.kind != "ordered_box":
                raise ValueError("model2 needs power utility, Pi = R x {0} and an ordered-box U")
        if self.variant == "section7":
            unit = ConvexSet.box([0.0], [1.0])
            if self.utility.kind != "log" or self.pi_set != unit or self.u_set != unit:
                raise ValueError("section7 needs log utility and Pi = U = [0, 1]")
            if self.realization_tau != -1.0:
                raise ValueError("section7 uses the quadratic realisation with tau = -1")
        elif self.realization_tau != 0.0:
            raise ValueError("nonzero tau is only supported by the section7 variant")

    @property
    def dim(self):
        return self.pi_set.dim

    @property
    def order(self):
        if self.variant == "section7":
            return "max_min"
        if self.utility.kind == "exponential":
            return "sup_inf"
        return "inf_sup"

    def evaluate(self, v, z):
        """Driver value and its z-gradient on a batch, for the PDE solvers."""
        v, z, _ = _batch(v, z)
        pi, u = _saddle(self, v, z)
        g = _F(self, v, z, pi, u)
        return g, _dF_dz(self, z, pi, u)


# ---------------------------------------------------------------- helpers


def _batch(v, *xs):
    """Promote points to batches; a 2-D ``v`` is a batch, anything else a single point."""
    v = np.asarray(v, dtype=float)
    single = v.ndim < 2
    v2 = v.reshape(1, -1) if single else v
    out = [v2]
    for x in xs:
        x = np.asarray(x, dtype=float)
        x2 = x.reshape(1, -1) if x.ndim < 2 else x
        if x2.shape[0] != v2.shape[0]:
            x2 = np.broadcast_to(x2, (v2.shape[0], x2.shape[1]))
        out.append(x2)
    out.append(single)
    return out


def _unbatch(x, single):
    return x[0] if single else x


def _theta(spec, v):
    return np.asarray(spec.theta(v), dtype=float).reshape(v.shape[0], spec.dim)


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _check_member(cset, x, what):
    ok = cset.contains(x, tol=1e-9)
    if not np.all(ok):
        bad = np.asarray(x)[~ok][0]
        raise MembershipError(f"{what}={bad.tolist()} is outside {cset.describe()}")


# ----------------------------------------------------------- Hamiltonians


def _F(spec, v, z, pi, u):
    th = _theta(spec, v)
    ut = spec.utility
    if spec.variant == "section7":
        return -0.5 * _dot(pi, pi) + _dot(pi, th) + _dot(pi + z, u) + 0.5 * spec.realization_tau * _dot(u, u)
    if ut.kind == "power":
        d = ut.delta
        return -0.5 * d * (1 - d) * _dot(pi, pi) + d * _dot(pi, th + z + u) + _dot(z, u) + 0.5 * _dot(z, z)
    if ut.kind == "log":
        return -0.5 * _dot(pi, pi) + _dot(pi, th) + _dot(pi + z, u)
    g = ut.gamma
    w = g * pi - z
    return 0.5 * _dot(w, w) - g * _dot(pi, th + u) + _dot(z, u)


def _dF_dz(spec, z, pi, u):
    ut = spec.utility
    if spec.variant == "section7" or ut.kind == "log":
        return u.copy()
    if ut.kind == "power":
        return ut.delta * pi + u + z
    return z - ut.gamma * pi + u


def _dF_du(spec, z, pi, u):
    ut = spec.utility
    if spec.variant == "section7":
        return pi + z + spec.realization_tau * u
    if ut.kind == "power":
        return ut.delta * pi + z
    if ut.kind == "log":
        return pi + z
    return -ut.gamma * pi + z


def hamiltonian_F(spec, v, z, pi, u):
    """Pointwise Hamiltonian; ``pi`` and ``u`` must lie in their sets."""
    v, z, pi, u, single = _batch(v, z, pi, u)
    _check_member(spec.pi_set, pi, "pi")
    _check_member(spec.u_set, u, "u")
    return _unbatch(_F(spec, v, z, pi, u), single)


# ------------------------------------------------------- best responses


def _alpha(spec, v, z, u):
    th = _theta(spec, v)
    ut = spec.utility
    if spec.variant == "section7" or ut.kind == "log":
        target = th + u
    elif ut.kind == "power":
        target = (th + z + u) / (1.0 - ut.delta)
    else:
        target = (th + u + z) / ut.gamma
    return spec.pi_set.project(target)


def alpha_star(spec, v, z, u):
    """Best portfolio response to a scenario."""
    v, z, u, single = _batch(v, z, u)
    _check_member(spec.u_set, u, "u")
    return _unbatch(_alpha(spec, v, z, u), single)


def linear_argmin(cset, c):
    """Minimiser of ``c^T u`` over a compact set, batched.

    Ties resolve to the lexicographically smallest minimiser.
    """
    c = np.atleast_2d(np.asarray(c, dtype=float))
    kind = cset.kind
    if kind in ("box", "slab"):
        lo, hi = np.array(cset.lower), np.array(cset.upper)
        return np.where(c < 0, hi, lo) * np.ones_like(c)
    if kind == "singleton":
        return np.broadcast_to(np.array(cset.point), c.shape).copy()
    if kind == "ball":
        n = np.linalg.norm(c, axis=1, keepdims=True)
        e1 = np.zeros(cset.dim)
        e1[0] = 1.0
        direction = np.where(n > 0, c / np.where(n > 0, n, 1.0), e1)
        return np.array(cset.center) - cset.radius * direction
    if kind == "ordered_box":
        R = cset.radius
        verts = np.array([[-R, -R], [-R, R], [R, R]])
        vals = c @ verts.T
        best = np.argmin(vals + 1e-15 * np.arange(3), axis=1)
        return verts[best]
    raise ValueError("linear minimisation needs a compact set")


# --------------------------------------------------- outer optimisation


def _outer_value(spec, v, z, u):
    return _F(spec, v, z, _alpha(spec, v, z, u), u)


def _outer_grad(spec, v, z, u):
    return _dF_du(spec, z, _alpha(spec, v, z, u), u)


def _pgd(spec, v, z, x0, maximise=False, max_iter=500, tol=1e-9):
    """Projected gradient with Armijo backtracking over U, batched over points."""
    sign = -1.0 if maximise else 1.0
    U = spec.u_set
    x = U.project(x0)
    f = sign * _outer_value(spec, v, z, x)
    step = np.ones(x.shape[0])
    ut = spec.utility
    if ut.kind == "power":
        step *= 2.0 * (1 - ut.delta) / ut.delta
    elif ut.kind == "exponential":
        step *= 2.0 * ut.gamma ** 2 / max(ut.gamma ** 2, 1.0)
    active = np.ones(x.shape[0], dtype=bool)
    it = 0
    for it in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        vi, zi, xi, fi, ti = v[idx], z[idx], x[idx], f[idx], step[idx]
        g = sign * _outer_grad(spec, vi, zi, xi)
        for _ in range(60):
            xn = U.project(xi - ti[:, None] * g)
            fn = sign * _outer_value(spec, vi, zi, xn)
            d = xn - xi
            ok = fn <= fi + _dot(g, d) + _dot(d, d) / (2.0 * ti) + 1e-15 * (1 + np.abs(fi))
            if np.all(ok):
                break
            ti = np.where(ok, ti, 0.5 * ti)
        move = np.linalg.norm(xn - xi, axis=1)
        x[idx], f[idx] = xn, fn
        step[idx] = np.minimum(ti * 2.0, 1e3)
        active[idx] = move > tol
    return x, ~active, it + 1


def _u_closed_form(spec, v, z):
    """Closed-form worst-case scenario when one exists, else None."""
    ut = spec.utility
    th = _theta(spec, v)
    if spec.variant == "model2":
        return _model2_u(spec, v, z)
    if spec.pi_set.kind != "unconstrained":
        return None
    if ut.kind == "power":
        return spec.u_set.project(-th - z / ut.delta)
    if ut.kind == "log":
        return spec.u_set.project(-th - z)
    return spec.u_set.project(-th)


def _u_star(spec, v, z, allow_grid=True):
    if spec.variant == "section7":
        return _beta7(z, _pi7(spec, v, z)[0])
    u = _u_closed_form(spec, v, z)
    if u is not None:
        return u
    ut = spec.utility
    th = _theta(spec, v)
    if ut.kind == "power":
        x0 = -th - z / ut.delta
    elif ut.kind == "log":
        x0 = -th - z
    else:
        x0 = -th
    u, conv, iters = _pgd(spec, v, z, x0, maximise=(spec.order == "sup_inf"))
    if not np.all(conv):
        bad = np.flatnonzero(~conv)
        if allow_grid and spec.u_set.dim <= 2:
            log.debug("projected gradient stalled at %d points; grid fallback", bad.size)
            u[bad] = _grid_outer(spec, v[bad], z[bad])
        else:
            raise InnerSolverError(
                f"worst-case scenario search did not converge at {bad.size} points after {iters} "
                f"iterations (first v={v[bad[0]].tolist()}, z={z[bad[0]].tolist()})"
            )
    return u


def _grid_outer(spec, v, z, resolution=1e-3):
    out = np.empty((v.shape[0], spec.dim))
    pts = spec.u_set.grid(max(resolution, _span(spec.u_set) / 400.0))
    maximise = spec.order == "sup_inf"
    for i in range(v.shape[0]):
        vals = _outer_value(spec, np.broadcast_to(v[i], (len(pts), v.shape[1])),
                            np.broadcast_to(z[i], (len(pts), z.shape[1])), pts)
        j = np.argmax(vals) if maximise else np.argmin(vals)
        out[i] = pts[j]
    return out


def _span(cset):
    lo, hi = cset.bounds()
    return float(np.max(hi - lo)) if np.all(np.isfinite(hi - lo)) else 1.0


def u_star(spec, v, z):
    """Worst-case scenario in feedback form."""
    v, z, single = _batch(v, z)
    return _unbatch(_u_star(spec, v, z), single)


# ------------------------------------------------------------ model II


def _model2_arg(spec, v, z):
    d = spec.utility.delta
    th = _theta(spec, v)[:, 0]
    z1, z2 = z[:, 0], z[:, 1]
    pos = z2 >= 0
    w = -th - z1 / d - (1 - d) / d * z2 * pos
    return th, z1, z2, pos, w


def _model2_u(spec, v, z):
    R = spec.u_set.radius
    _, _, _, pos, w = _model2_arg(spec, v, z)
    u1 = np.clip(w, -R, R)
    # z2 >= 0 makes the ordering constraint active, so u2 = u1 there
    u2 = np.where(pos, u1, R)
    return np.stack([u1, u2], axis=1)


def _model2_G(spec, v, z):
    R = spec.u_set.radius
    d = spec.utility.delta
    th, z1, z2, pos, w = _model2_arg(spec, v, z)
    dist = w - np.clip(w, -R, R)
    g = d / (2 * (1 - d)) * dist ** 2 - z1 ** 2 / (2 * d) - th * z1
    g = g + np.where(pos, ((2 * d - 1) / (2 * d) * z2 - z1 / d - th) * z2, 0.0)
    g = g + np.where(pos, 0.0, (0.5 * z2 + R) * z2)
    return g


def _model2_beta_off(spec, z, pi):
    R = spec.u_set.radius
    d = spec.utility.delta
    z1, z2 = z[:, 0], z[:, 1]
    pos = z2 >= 0
    a = d * pi[:, 0] + z1 + z2 * pos
    b1 = -R * np.sign(a)
    b2 = np.where(pos, -R * np.sign(a), R)
    return np.stack([b1, b2], axis=1)


# ------------------------------------------------------------ section 7


def _pi7(spec, v, z):
    th = _theta(spec, v)[:, 0]
    zz = z[:, 0]
    s = 0.5 - zz
    raw = np.where(s >= th + 1, th + 1, np.where(s >= th, s, th))
    flagged = (raw < 0.0) | (raw > 1.0)
    return np.clip(raw, 0.0, 1.0)[:, None], flagged, raw


def _beta7(z, pi):
    return np.where(pi[:, :1] + z[:, :1] <= 0.5, 1.0, 0.0)


# ----------------------------------------------------------- public maps


def _saddle(spec, v, z):
    if spec.variant == "section7":
        pi = _pi7(spec, v, z)[0]
        return pi, _beta7(z, pi)
    u = _u_star(spec, v, z)
    return _alpha(spec, v, z, u), u


def pi_star(spec, v, z):
    """Optimal portfolio in feedback form."""
    v, z, single = _batch(v, z)
    if spec.variant == "section7":
        pi, flagged, raw = _pi7(spec, v, z)
        if np.any(flagged):
            warnings.warn(
                f"closed-form portfolio {raw[flagged][0]:.6g} lies outside [0, 1]; returning its projection",
                BranchWarning, stacklevel=2,
            )
        return _unbatch(pi, single)
    return _unbatch(_alpha(spec, v, z, _u_star(spec, v, z)), single)


def beta_star(spec, v, z, pi):
    """Worst-case scenario response to a given portfolio."""
    v, z, pi, single = _batch(v, z, pi)
    if spec.variant == "section7":
        return _unbatch(_beta7(z, pi), single)
    ps, us = _saddle(spec, v, z)
    on = np.linalg.norm(pi - ps, axis=1) <= PI_TIE_TOL
    c = _dF_du(spec, z, pi, np.zeros_like(pi))
    if spec.variant == "model2":
        off = _model2_beta_off(spec, z, pi)
    elif spec.order == "sup_inf":
        off = linear_argmin(spec.u_set, -c)
    else:
        off = linear_argmin(spec.u_set, c)
    return _unbatch(np.where(on[:, None], us, off), single)


def driver_G(spec, v, z):
    """Driver of the ergodic equation, closed forms where the variant has one."""
    v, z, single = _batch(v, z)
    if spec.variant == "model1":
        d = spec.utility.delta
        th = _theta(spec, v)
        w = -th - z / d
        dist2 = spec.u_set.distance(w) ** 2
        g = 0.5 * d / (1 - d) * dist2 - _dot(z, z) / (2 * d) - _dot(z, th)
        return _unbatch(g, single)
    if spec.variant == "model2":
        return _unbatch(_model2_G(spec, v, z), single)
    pi, u = _saddle(spec, v, z)
    return _unbatch(_F(spec, v, z, pi, u), single)


def driver_G_generic(spec, v, z):
    """Driver composed from the best responses, ignoring any variant closed form."""
    if spec.variant == "section7":
        return driver_G(spec, v, z)
    v, z, single = _batch(v, z)
    ut = spec.utility
    th = _theta(spec, v)
    x0 = -th - z / ut.delta if ut.kind == "power" else -th - z
    u, conv, _ = _pgd(spec, v, z, x0, maximise=(spec.order == "sup_inf"))
    if not np.all(conv) and spec.u_set.dim <= 2:
        bad = np.flatnonzero(~conv)
        u[bad] = _grid_outer(spec, v[bad], z[bad])
    return _unbatch(_outer_value(spec, v, z, u), single)


def driver_G_log(spec, v, z):
    """Logarithmic driver inf_u sup_pi {-|pi|^2/2 + pi.theta + (pi + z).u}."""
    if spec.utility.kind != "log" or spec.variant != "generic":
        spec = DriverSpec(UtilityClass.log(), spec.pi_set, spec.u_set, spec.theta)
    return driver_G(spec, v, z)


def driver_G_exp(spec, v, z, gamma=None):
    """Exponential driver sup_u inf_pi {|gamma pi - z|^2/2 - gamma pi.(theta + u) + z.u}."""
    if spec.utility.kind != "exponential" or gamma is not None or spec.variant != "generic":
        g = spec.utility.gamma if gamma is None else gamma
        spec = DriverSpec(UtilityClass.exponential(g), spec.pi_set, spec.u_set, spec.theta)
    return driver_G(spec, v, z)


def running_payoff(delta, theta, pi, u):
    """L(v, pi, u) = -delta(1-delta)|pi|^2/2 + delta pi.(theta + u)."""
    pi = np.asarray(pi, dtype=float)
    return -0.5 * delta * (1 - delta) * _dot(pi, pi) + delta * _dot(pi, np.asarray(theta) + np.asarray(u))


# -------------------------------------------------------- realisation


@dataclass(frozen=True)
class RealizationSpec:
    """Quadratic realisation gamma_{t,s}(u) = int_t^s |u_r|^2 / 2 dr."""

    form: str = "quadratic"
    tau: float = -1.0


def realization_value(spec, u_path, times, t, s):
    """Trapezoidal quadratic realisation of a sampled scenario path on [t, s]."""
    if s < t:
        raise ValueError("need s >= t")
    times = np.asarray(times, dtype=float)
    u_path = np.asarray(u_path, dtype=float).reshape(times.shape[0], -1)
    integrand = 0.5 * np.sum(u_path * u_path, axis=1)
    mask = (times >= t - 1e-12) & (times <= s + 1e-12)
    tt, ff = times[mask], integrand[mask]
    if tt.size < 2:
        return 0.0
    return float(np.sum(0.5 * (ff[1:] + ff[:-1]) * np.diff(tt)))


# ------------------------------------------------------ factories


def power_driver(theta, delta, pi_set, u_set, variant="generic"):
    return DriverSpec(UtilityClass.power(delta), pi_set, u_set, theta, variant=variant)


def section7_driver(theta):
    unit = ConvexSet.box([0.0], [1.0])
    return DriverSpec(UtilityClass.log(), unit, unit, theta, variant="section7", realization_tau=-1.0)
