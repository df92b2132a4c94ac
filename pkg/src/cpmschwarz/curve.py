"""Closed parametric curves in R^d with closest-point and arclength queries."""

from __future__ import annotations

import math
import warnings
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.spatial import cKDTree

from .errors import ConfigError, DegenerateCurveError, NonUniqueClosestPoint

__all__ = [
    "Curve", "ClosestPoint", "circle", "mobius_boundary", "curve_from_name",
    "length", "closest_point", "point_at_arclength", "min_curvature_radius",
]

N_SEARCH_SAMPLES = 2**12
N_TABLE = 2**14
N_CURVATURE = 2**14

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class ClosestPoint(NamedTuple):
    point: np.ndarray
    t: float
    s: float
    distance: float
    # True when the query lies farther than R0 from the curve, where the
    # closest-point map is not guaranteed to be single-valued.
    outside_reach: bool


class Curve:
    """A closed curve ``t -> position(t)`` with period ``period``.

    ``position`` (and the optional ``velocity``/``acceleration``) must accept
    a 1-D array of parameters and return an ``(n, dim)`` array. Missing
    derivatives are approximated by central differences.

    Construction precomputes the arclength table, the length, the minimum
    radius of curvature and a k-d tree of search samples; afterwards the
    object is treated as immutable.
    """

    def __init__(self, position: Callable, period: float, dim: int,
                 velocity: Callable | None = None,
                 acceleration: Callable | None = None,
                 name: str = "curve"):
        if dim < 2:
            raise ConfigError("curve dimension must be >= 2")
        if not period > 0:
            raise ConfigError("curve period must be positive")
        self.name = name
        self.dim = int(dim)
        self.period = float(period)
        self._position = position
        self._velocity = velocity
        self._acceleration = acceleration

        self.length = _adaptive_length(self)
        self._build_arclength_table()
        self.min_curvature_radius = _min_curvature_radius(self)

        self._search_t = np.arange(N_SEARCH_SAMPLES) * (
            self.period / N_SEARCH_SAMPLES)
        self._search_pts = self.position(self._search_t)
        self._tree = cKDTree(self._search_pts)
        seg = np.diff(np.vstack([self._search_pts, self._search_pts[:1]]),
                      axis=0)
        self._sample_gap = float(np.max(np.linalg.norm(seg, axis=1)))

    def __repr__(self):
        return f"Curve({self.name!r}, dim={self.dim}, L={self.length:.6g})"

    # -- evaluation ---------------------------------------------------------

    def position(self, t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(self._position(np.atleast_1d(t)), dtype=float)
        return out.reshape(t.shape + (self.dim,))

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        if self._velocity is not None:
            out = np.asarray(self._velocity(np.atleast_1d(t)), dtype=float)
            return out.reshape(t.shape + (self.dim,))
        k = 1e-6 * self.period
        return (self.position(t + k) - self.position(t - k)) / (2 * k)

    def acceleration(self, t):
        t = np.asarray(t, dtype=float)
        if self._acceleration is not None:
            out = np.asarray(self._acceleration(np.atleast_1d(t)),
                             dtype=float)
            return out.reshape(t.shape + (self.dim,))
        k = 1e-4 * self.period
        return (self.position(t + k) - 2 * self.position(t)
                + self.position(t - k)) / k**2

    def speed(self, t):
        return np.linalg.norm(self.velocity(t), axis=-1)

    # -- arclength ----------------------------------------------------------

    def _build_arclength_table(self):
        n = N_TABLE
        dt = self.period / n
        self._table_t = np.arange(n + 1) * dt
        # 8-point Gauss-Legendre per table cell
        nodes = (self._table_t[:-1, None]
                 + 0.5 * dt * (_GL_X[None, :] + 1.0))
        pieces = 0.5 * dt * (self.speed(nodes.ravel()).reshape(nodes.shape)
                             @ _GL_W)
        table = np.concatenate([[0.0], np.cumsum(pieces)])
        if abs(table[-1] - self.length) > 1e-10 * self.length:
            raise DegenerateCurveError(
                "arclength table disagrees with adaptive quadrature")
        table[-1] = self.length
        if np.any(np.diff(table) <= 0):
            raise DegenerateCurveError("arclength table is not increasing")
        self._table_s = table
        self._inverse = PchipInterpolator(table, self._table_t)

    def arclength(self, t):
        """Arclength from ``t = 0`` to ``t`` (``t`` taken modulo the period)."""
        t = np.asarray(t, dtype=float)
        return self._arclength_unwrapped(np.mod(t, self.period))

    def _arclength_unwrapped(self, t):
        # valid for t in [0, period]; arclength(period) == length
        t = np.asarray(t, dtype=float)
        tt = t.ravel()
        dt = self.period / N_TABLE
        k = np.clip((tt / dt).astype(np.int64), 0, N_TABLE - 1)
        t0 = self._table_t[k]
        half = 0.5 * (tt - t0)
        nodes = t0[:, None] + half[:, None] * (_GL_X[None, :] + 1.0)
        part = half * (self.speed(nodes.ravel()).reshape(nodes.shape) @ _GL_W)
        return (self._table_s[k] + part).reshape(t.shape)

    def parameter_at_arclength(self, s):
        s = np.mod(np.asarray(s, dtype=float), self.length)
        t = self._inverse(s)
        for _ in range(2):
            t = t - (self._arclength_unwrapped(t) - s) / self.speed(t)
            t = np.clip(t, 0.0, self.period)
        return np.mod(t, self.period)

    def point_at_arclength(self, s):
        return self.position(self.parameter_at_arclength(s))

    # -- closest points -----------------------------------------------------

    def closest_points(self, x, check_unique: bool = True):
        """Vectorised closest-point query.

        Returns ``(cp, t, s, dist)`` arrays for an ``(n, dim)`` input.
        Raises :class:`NonUniqueClosestPoint` if any query has two distinct
        global minimisers whose distances differ by less than ``1e-9``.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ConfigError(f"expected points of dimension {self.dim}")
        n = N_SEARCH_SAMPLES
        k = min(32, n)
        dists, idx = self._tree.query(x, k=k)
        j0 = idx[:, 0]
        t, dist = self._refine(x, j0)

        if check_unique and len(x):
            cyc = np.abs(idx - j0[:, None])
            cyc = np.minimum(cyc, n - cyc)
            d_prev = np.linalg.norm(
                x[:, None, :] - self._search_pts[(idx - 1) % n], axis=-1)
            d_next = np.linalg.norm(
                x[:, None, :] - self._search_pts[(idx + 1) % n], axis=-1)
            plateau = 1e-12 * np.maximum(1.0, dists)
            local_min = ((d_prev >= dists - plateau)
                         & (d_next >= dists - plateau))
            far = ((cyc > 2) & local_min
                   & (dists <= dists[:, :1] + self._sample_gap))
            rows = np.flatnonzero(far.any(axis=1))
            if len(rows):
                pick = np.argmax(far[rows], axis=1)
                t2, dist2 = self._refine(x[rows], idx[rows, pick])
                dt = np.abs(t2 - t[rows])
                dt = np.minimum(dt, self.period - dt)
                separated = dt > 1.5 * self.period / n
                tie = separated & (np.abs(dist2 - dist[rows]) < 1e-9)
                if np.any(tie):
                    bad = x[rows[tie][0]]
                    raise NonUniqueClosestPoint(
                        f"{int(tie.sum())} query point(s) have no unique "
                        f"closest point, e.g. {bad.tolist()}")
                better = separated & (dist2 < dist[rows])
                t[rows[better]] = t2[better]
                dist[rows[better]] = dist2[better]

        cp = self.position(t)
        s = self.arclength(t)
        return cp, t, s, dist

    def closest_point(self, x) -> ClosestPoint:
        x = np.asarray(x, dtype=float).reshape(1, -1)
        cp, t, s, dist = self.closest_points(x)
        outside = bool(dist[0] > self.min_curvature_radius)
        if outside:
            warnings.warn("query point lies outside the reach of the curve; "
                          "closest point may not be unique", RuntimeWarning)
        return ClosestPoint(cp[0], float(t[0]), float(s[0]), float(dist[0]),
                            outside)

    def _refine(self, x, j):
        """Golden-section on a one-sample bracket, then Newton polish."""
        dt = self.period / N_SEARCH_SAMPLES
        lo = self._search_t[j] - dt
        hi = self._search_t[j] + dt

        def f(tt):
            return np.sum((self.position(tt) - x) ** 2, axis=1)

        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        c = hi - invphi * (hi - lo)
        d = lo + invphi * (hi - lo)
        fc, fd = f(c), f(d)
        for _ in range(45):
            left = fc < fd
            hi = np.where(left, d, hi)
            lo = np.where(left, lo, c)
            new_c = hi - invphi * (hi - lo)
            new_d = lo + invphi * (hi - lo)
            c_next = np.where(left, new_c, d)
            d_next = np.where(left, c, new_d)
            fnew = f(np.where(left, new_c, new_d))
            fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
            c, d = c_next, d_next
        t = 0.5 * (lo + hi)
        ft = f(t)

        bracket_lo = self._search_t[j] - dt
        bracket_hi = self._search_t[j] + dt

        def grad(tt):
            diff = self.position(tt) - x
            v = self.velocity(tt)
            return diff, v, np.sum(diff * v, axis=1)

        diff, v, g = grad(t)
        for _ in range(4):
            gp = np.sum(v * v, axis=1) + np.sum(diff * self.acceleration(t),
                                                axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(gp > 0, g / gp, 0.0)
            t_new = np.clip(t - step, bracket_lo, bracket_hi)
            diff_n, v_n, g_n = grad(t_new)
            f_new = np.sum(diff_n * diff_n, axis=1)
            # near the minimum f is flat to rounding; judge by the residual
            ok = (np.abs(g_n) < np.abs(g)) & (f_new <= ft * (1 + 1e-12) + 1e-300)
            t = np.where(ok, t_new, t)
            ft = np.where(ok, f_new, ft)
            okc = ok[:, None]
            diff = np.where(okc, diff_n, diff)
            v = np.where(okc, v_n, v)
            g = np.where(ok, g_n, g)
        return np.mod(t, self.period), np.sqrt(ft)


def _adaptive_length(curve: Curve) -> float:
    pieces = 16
    edges = np.linspace(0.0, curve.period, pieces + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", integrate.IntegrationWarning)
            val, err = integrate.quad(
                lambda tt: float(curve.speed(np.array([tt]))[0]), a, b,
                epsabs=0.0, epsrel=1e-13, limit=200)
        # a differenced speed is noisy near 1e-11; only give up when the
        # error estimate itself is too large
        if caught and not err <= 1e-11 * abs(val):
            raise DegenerateCurveError(
                f"length quadrature did not converge: {caught[0].message}")
        total += val
    if not total > 0:
        raise DegenerateCurveError("curve has zero length")
    return total


def _min_curvature_radius(curve: Curve, n: int = N_CURVATURE) -> float:
    # analytic derivatives when the curve supplies them, else differences
    t = np.arange(n) * (curve.period / n)
    v = curve.velocity(t)
    a = curve.acceleration(t)
    vv = np.sum(v * v, axis=1)
    if np.any(np.sqrt(vv) < 1e-12):
        raise DegenerateCurveError("curve has a zero-speed point")
    cross2 = np.maximum(vv * np.sum(a * a, axis=1) - np.sum(v * a, axis=1)**2,
                        0.0)
    curvature = np.sqrt(cross2) / vv**1.5
    kmax = float(np.max(curvature))
    return math.inf if kmax == 0 else 1.0 / kmax


# module-level functional aliases

def length(curve: Curve) -> float:
    return curve.length


def closest_point(curve: Curve, x) -> ClosestPoint:
    return curve.closest_point(x)


def point_at_arclength(curve: Curve, s):
    return curve.point_at_arclength(s)


def min_curvature_radius(curve: Curve) -> float:
    return curve.min_curvature_radius


# built-in curves

def circle(radius: float = 1.0) -> Curve:
    R = float(radius)
    if not R > 0:
        raise ConfigError("circle radius must be positive")

    def pos(t):
        return R * np.column_stack([np.cos(t), np.sin(t)])

    def vel(t):
        return R * np.column_stack([-np.sin(t), np.cos(t)])

    def acc(t):
        return -pos(t)

    name = "circle" if R == 1.0 else f"circle:R={R:g}"
    return Curve(pos, 2 * math.pi, 2, vel, acc, name=name)


def mobius_boundary(width: float = 1.0, radius: float = 1.0) -> Curve:
    """Boundary of a Moebius strip of the given width about a centre circle.

    ``gamma(t) = ((R + w/2 cos(t/2)) cos t, (R + w/2 cos(t/2)) sin t,
    w/2 sin(t/2))`` for ``t`` in ``[0, 4 pi)``.
    """
    w, R = float(width), float(radius)
    if not (w > 0 and R > w / 2):
        raise ConfigError("need width > 0 and radius > width/2")
    hw = 0.5 * w

    def pos(t):
        rho = R + hw * np.cos(t / 2)
        return np.column_stack([rho * np.cos(t), rho * np.sin(t),
                                hw * np.sin(t / 2)])

    def vel(t):
        rho = R + hw * np.cos(t / 2)
        drho = -0.5 * hw * np.sin(t / 2)
        return np.column_stack([drho * np.cos(t) - rho * np.sin(t),
                                drho * np.sin(t) + rho * np.cos(t),
                                0.5 * hw * np.cos(t / 2)])

    def acc(t):
        rho = R + hw * np.cos(t / 2)
        drho = -0.5 * hw * np.sin(t / 2)
        ddrho = -0.25 * hw * np.cos(t / 2)
        return np.column_stack([
            ddrho * np.cos(t) - 2 * drho * np.sin(t) - rho * np.cos(t),
            ddrho * np.sin(t) + 2 * drho * np.cos(t) - rho * np.sin(t),
            -0.25 * hw * np.sin(t / 2)])

    return Curve(pos, 4 * math.pi, 3, vel, acc, name="mobius-boundary")


def curve_from_name(name: str) -> Curve:
    """Parse ``"circle"``, ``"circle:R=2"`` or ``"mobius-boundary[:w=..,R=..]"``."""
    base, _, rest = name.strip().partition(":")
    params = {}
    for item in filter(None, (p.strip() for p in rest.replace(",", ":")
                              .split(":"))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"bad curve parameter {item!r}")
        try:
            params[key.strip()] = float(val)
        except ValueError:
            raise ConfigError(f"bad curve parameter {item!r}") from None
    if base == "circle":
        unknown = set(params) - {"R"}
        if unknown:
            raise ConfigError(f"unknown circle parameter(s) {sorted(unknown)}")
        return circle(params.get("R", 1.0))
    if base == "mobius-boundary":
        unknown = set(params) - {"w", "R"}
        if unknown:
            raise ConfigError(f"unknown mobius parameter(s) {sorted(unknown)}")
        return mobius_boundary(params.get("w", 1.0), params.get("R", 1.0))
    raise ConfigError(f"unknown curve {name!r}")
