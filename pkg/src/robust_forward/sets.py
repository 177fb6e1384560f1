"""Closed convex constraint sets with exact Euclidean projections.

All projections are vectorised over a leading batch axis: ``project`` accepts
``(dim,)`` or ``(N, dim)`` input and returns the same shape.
"""

from dataclasses import dataclass, field

import numpy as np

KINDS = ("unconstrained", "box", "ball", "ordered_box", "singleton", "slab")


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class ConvexSet:
    """A portfolio set or scenario set.

    ``box`` and ``slab`` share a representation (per-coordinate bounds, with
    ``slab`` allowing infinite and degenerate intervals such as R x {0}).
    ``ordered_box`` is the triangle ``-R <= u_1 <= u_2 <= R`` in two dimensions.
    """

    kind: str
    dim: int
    lower: tuple = ()
    upper: tuple = ()
    center: tuple = ()
    radius: float = 0.0
    point: tuple = ()
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown set kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.kind in ("box", "slab"):
            lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
            if lo.shape != (self.dim,) or hi.shape != (self.dim,):
                raise DimensionError("bounds must have length dim")
            if np.any(lo > hi):
                raise ValueError("empty box: lower > upper")
            if self.kind == "box" and not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise ValueError("box bounds must be finite; use kind='slab'")
        if self.kind == "ball":
            if len(self.center) != self.dim or self.radius < 0:
                raise ValueError("ball needs a center of length dim and radius >= 0")
        if self.kind == "ordered_box" and (self.dim != 2 or self.radius <= 0):
            raise ValueError("ordered_box is two-dimensional with radius R > 0")
        if self.kind == "singleton" and len(self.point) != self.dim:
            raise DimensionError("singleton point must have length dim")

    # constructors -------------------------------------------------------
    @classmethod
    def unconstrained(cls, dim):
        return cls("unconstrained", dim)

    @classmethod
    def box(cls, lower, upper):
        lower = tuple(float(x) for x in np.atleast_1d(lower))
        upper = tuple(float(x) for x in np.atleast_1d(upper))
        return cls("box", len(lower), lower=lower, upper=upper)

    @classmethod
    def cube(cls, dim, half_width):
        return cls.box([-half_width] * dim, [half_width] * dim)

    @classmethod
    def ball(cls, center, radius):
        center = tuple(float(x) for x in np.atleast_1d(center))
        return cls("ball", len(center), center=center, radius=float(radius))

    @classmethod
    def ordered_box(cls, radius):
        return cls("ordered_box", 2, radius=float(radius))

    @classmethod
    def singleton(cls, point):
        point = tuple(float(x) for x in np.atleast_1d(point))
        return cls("singleton", len(point), point=point)

    @classmethod
    def slab(cls, lower, upper):
        lower = tuple(float(x) for x in np.atleast_1d(lower))
        upper = tuple(float(x) for x in np.atleast_1d(upper))
        return cls("slab", len(lower), lower=lower, upper=upper)

    @classmethod
    def origin(cls, dim):
        return cls.singleton([0.0] * dim)

    # queries -------------------------------------------------------------
    @property
    def bounded(self):
        if self.kind in ("ball", "ordered_box", "singleton", "box"):
            return True
        if self.kind == "slab":
            return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))
        return False

    def max_norm(self):
        """``max_{u in set} |u|`` (the bound K_u); ``inf`` for unbounded sets."""
        if not self.bounded:
            return np.inf
        if self.kind in ("box", "slab"):
            lo, hi = np.abs(self.lower), np.abs(self.upper)
            return float(np.sqrt(np.sum(np.maximum(lo, hi) ** 2)))
        if self.kind == "ball":
            return float(np.linalg.norm(self.center) + self.radius)
        if self.kind == "ordered_box":
            return float(np.sqrt(2.0) * self.radius)
        return float(np.linalg.norm(self.point))

    def bounds(self):
        """Axis-aligned bounding box as two arrays (may be infinite)."""
        d = self.dim
        if self.kind in ("box", "slab"):
            return np.array(self.lower), np.array(self.upper)
        if self.kind == "ball":
            c = np.array(self.center)
            return c - self.radius, c + self.radius
        if self.kind == "ordered_box":
            return np.full(2, -self.radius), np.full(2, self.radius)
        if self.kind == "singleton":
            p = np.array(self.point)
            return p, p.copy()
        return np.full(d, -np.inf), np.full(d, np.inf)

    def project(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionError(f"point of dimension {x.shape[-1]} for a set of dimension {self.dim}")
        kind = self.kind
        if kind == "unconstrained":
            return x.copy()
        if kind in ("box", "slab"):
            return np.clip(x, np.array(self.lower), np.array(self.upper))
        if kind == "ball":
            c = np.array(self.center)
            d = x - c
            n = np.linalg.norm(d, axis=-1, keepdims=True)
            scale = np.where(n > self.radius, self.radius / np.where(n > 0, n, 1.0), 1.0)
            return c + d * scale
        if kind == "singleton":
            return np.broadcast_to(np.array(self.point), x.shape).copy()
        # ordered box: isotonic regression of the pair, then clip (clipping keeps order)
        R = self.radius
        x1, x2 = x[..., 0], x[..., 1]
        m = 0.5 * (x1 + x2)
        viol = x1 > x2
        p1 = np.where(viol, m, x1)
        p2 = np.where(viol, m, x2)
        return np.clip(np.stack([p1, p2], axis=-1), -R, R)

    def contains(self, x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionError(f"point of dimension {x.shape[-1]} for a set of dimension {self.dim}")
        return np.linalg.norm(self.project(x) - x, axis=-1) <= tol * (1.0 + np.linalg.norm(x, axis=-1))

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.project(x), axis=-1)

    def grid(self, resolution, cap=None):
        """Points of a regular grid covering the set (bounding box filtered by membership).

        Unbounded coordinates are truncated to ``[-cap, cap]``.  Degenerate
        coordinates (lower == upper) contribute a single node.
        """
        lo, hi = self.bounds()
        if cap is not None:
            lo = np.maximum(lo, -cap)
            hi = np.minimum(hi, cap)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("grid over an unbounded set needs a cap")
        axes = []
        for a, b in zip(lo, hi):
            n = int(round((b - a) / resolution)) + 1
            axes.append(np.linspace(a, b, max(n, 1)))
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        if self.kind in ("box", "slab", "unconstrained", "singleton"):
            return mesh
        keep = self.contains(mesh, tol=1e-9)
        return mesh[keep]

    def describe(self):
        if self.kind == "unconstrained":
            return f"R^{self.dim}"
        if self.kind in ("box", "slab"):
            return " x ".join(
                "{0}" if lo == hi == 0 else f"[{lo:g},{hi:g}]" for lo, hi in zip(self.lower, self.upper)
            )
        if self.kind == "ball":
            return f"ball({list(self.center)}, {self.radius:g})"
        if self.kind == "ordered_box":
            return f"ordered_box({self.radius:g})"
        return f"{{{list(self.point)}}}"


def parse_set(text, dim):
    """Parse a compact set descriptor as used in config files and the CLI.

    Accepted forms: ``R`` / ``unconstrained``, ``box:lo:hi`` (same interval on
    every axis), ``box:lo1,lo2:hi1,hi2``, ``ball:r`` (centred at 0),
    ``ordered:R``, ``zero``, ``point:x1,x2``, ``slab:lo1,lo2:hi1,hi2``
    (``inf`` allowed), ``line`` (R x {0} x ...).
    """
    t = str(text).strip().lower()
    if t in ("r", "unconstrained", "rd"):
        return ConvexSet.unconstrained(dim)
    if t in ("zero", "0", "origin"):
        return ConvexSet.origin(dim)
    if t == "line":
        return ConvexSet.slab([-np.inf] + [0.0] * (dim - 1), [np.inf] + [0.0] * (dim - 1))
    head, _, rest = t.partition(":")
    parts = rest.split(":") if rest else []

    def vec(s):
        vals = [float(v) for v in s.split(",")]
        return vals * dim if len(vals) == 1 else vals

    if head == "box" and len(parts) == 2:
        return ConvexSet.box(vec(parts[0]), vec(parts[1]))
    if head == "slab" and len(parts) == 2:
        return ConvexSet.slab(vec(parts[0]), vec(parts[1]))
    if head == "ball" and len(parts) == 1:
        return ConvexSet.ball([0.0] * dim, float(parts[0]))
    if head == "ordered" and len(parts) == 1:
        return ConvexSet.ordered_box(float(parts[0]))
    if head == "point" and len(parts) == 1:
        return ConvexSet.singleton(vec(parts[0]))
    raise ValueError(f"cannot parse set descriptor {text!r}")
