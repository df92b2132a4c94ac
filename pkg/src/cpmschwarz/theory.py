"""Two-subdomain parallel Schwarz on a periodic interval: closed-form analysis.

A closed curve of length ``L`` parametrised by arclength is covered by two
overlapping intervals ``[a1, b1]`` and ``[a2, b2]`` with ``a1 < 0`` and
``b2 > L``. For ``(c - d^2/ds^2) u = f`` the subdomain errors satisfy the
homogeneous equation, so the four interface error values

    eps = [eps1(b2 - L), eps1(a2), eps2(b1), eps2(a1 + L)]

propagate linearly, ``eps_next = M eps``, with the block anti-diagonal 4x4
iteration matrix ``M`` built by :func:`iteration_matrix`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, InvalidOverlap
from .sparsela import SparseMatrix, factorize

__all__ = [
    "SchwarzConfig1D", "IterationMatrix", "entries", "iteration_matrix",
    "inf_norm", "spectral_radius", "kappa_bound", "equal_sized_kappa",
    "extension_form_kappa", "analytic_error_solve",
    "simulate_error_recursion", "reference_ras_1d", "sweep",
    "write_sweep_csv", "SWEEP_COLUMNS",
]

MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class SchwarzConfig1D:
    c: float
    L: float
    a1: float
    b1: float
    a2: float
    b2: float

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError("c must be positive")
        if not self.L > 0:
            raise ConfigError("L must be positive")
        if not (self.l1 > 0 and self.l2 > 0):
            raise InvalidOverlap("subdomain lengths must be positive")
        if not (self.d1 > 0 and self.d2 > 0):
            raise InvalidOverlap(
                f"overlaps must be positive (d1={self.d1:.6g}, "
                f"d2={self.d2:.6g})")
        if not self.d1 + self.d2 < min(self.l1, self.l2):
            raise InvalidOverlap(
                "need 0 < d1 + d2 < min(l1, l2); got "
                f"d1 + d2 = {self.d1 + self.d2:.6g}, "
                f"min(l1, l2) = {min(self.l1, self.l2):.6g}")

    @property
    def l1(self):
        return self.b1 - self.a1

    @property
    def l2(self):
        return self.b2 - self.a2

    @property
    def d1(self):
        return self.b1 - self.a2

    @property
    def d2(self):
        return self.b2 - (self.a1 + self.L)

    @property
    def d0(self):
        return self.d2

    @classmethod
    def from_split(cls, c, L, fraction, d1, d2=None):
        """Disjoint pieces ``[0, fL)``, ``[fL, L)`` widened by half overlaps.

        Each shared boundary is extended by half the requested overlap on
        either side, so the resulting ``d1``, ``d2`` equal the requests.
        """
        d2 = d1 if d2 is None else d2
        cut = fraction * L
        return cls(c, L, -0.5 * d2, cut + 0.5 * d1, cut - 0.5 * d1,
                   L + 0.5 * d2)

    @classmethod
    def equal(cls, c, L, overlap):
        return cls.from_split(c, L, 0.5, overlap, overlap)

    @classmethod
    def from_lengths(cls, c, l1, l2, d1, d2):
        L = l1 + l2 - d1 - d2
        a1 = -0.5 * d2
        b1 = a1 + l1
        a2 = b1 - d1
        return cls(c, L, a1, b1, a2, a2 + l2)


def _sinh_ratio(x, y):
    """``sinh(x) / sinh(y)`` for ``0 <= x <= y``, ``y > 0``, without overflow."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.exp(x - y) * np.expm1(-2 * x) / np.expm1(-2 * y)
    return np.where(x == 0, 0.0, out)


def entries(c, l, d_prev, d):
    """``(p, q, r, s)`` for a subdomain of length ``l``.

    ``p``, ``r`` use the overlap at the subdomain's left end (``d_prev``) and
    ``q``, ``s`` the overlap at its right end (``d``). All four are ratios of
    hyperbolic sines and are computed with the dominant exponential factored
    out.
    """
    k = math.sqrt(c)
    if not l > 0:
        raise ConfigError("subdomain length must be positive")
    if not (0 <= d_prev <= l and 0 <= d <= l):
        raise ConfigError("overlaps must lie in [0, l]")
    if k * l > MAX_EXPONENT:
        raise ConfigError(
            f"sqrt(c) * l = {k * l:.4g} exceeds {MAX_EXPONENT:g}")
    p = float(_sinh_ratio(k * (l - d_prev), k * l))
    r = float(_sinh_ratio(k * d_prev, k * l))
    q = float(_sinh_ratio(k * (l - d), k * l))
    s = float(_sinh_ratio(k * d, k * l))
    return p, q, r, s


@dataclass(frozen=True)
class IterationMatrix:
    M: np.ndarray
    p1: float
    q1: float
    r1: float
    s1: float
    p2: float
    q2: float
    r2: float
    s2: float

    def inf_norm(self):
        return inf_norm(self.M)

    def spectral_radius(self):
        return spectral_radius(self.M)

    def kappa_bound(self):
        return self.inf_norm() ** 2

    def rho_squared(self):
        return self.spectral_radius() ** 2

    def is_doubly_stochastic(self, tol=1e-12):
        rows = self.M.sum(axis=1)
        cols = self.M.sum(axis=0)
        return bool(np.all(np.abs(rows - rows[0]) <= tol)
                    and np.all(np.abs(cols - rows[0]) <= tol))


def iteration_matrix(config: SchwarzConfig1D) -> IterationMatrix:
    c = config.c
    p1, q1, r1, s1 = entries(c, config.l1, config.d0, config.d1)
    p2, q2, r2, s2 = entries(c, config.l2, config.d1, config.d2)
    M = np.array([[0.0, 0.0, r1, p1],
                  [0.0, 0.0, q1, s1],
                  [r2, p2, 0.0, 0.0],
                  [q2, s2, 0.0, 0.0]])
    return IterationMatrix(M, p1, q1, r1, s1, p2, q2, r2, s2)


def inf_norm(M) -> float:
    M = M.M if isinstance(M, IterationMatrix) else np.asarray(M, dtype=float)
    return float(np.max(np.sum(np.abs(M), axis=1)))


def spectral_radius(M) -> float:
    """Exact ``rho(M)`` for ``M = [[0, B], [C, 0]]`` with 2x2 blocks.

    ``M^2 = diag(BC, CB)``, so ``rho(M) = sqrt(rho(BC))``. The 2x2
    eigenvalues are taken as ``m +- sqrt(((a - d)/2)^2 + b c)``, which avoids
    the cancellation in ``tr^2 - 4 det`` when they nearly coincide.
    """
    M = M.M if isinstance(M, IterationMatrix) else np.asarray(M, dtype=float)
    if M.shape != (4, 4) or np.any(M[:2, :2]) or np.any(M[2:, 2:]):
        raise ConfigError("expected a 4x4 block anti-diagonal matrix")
    (a, b), (c, d) = M[:2, 2:] @ M[2:, :2]
    mid = 0.5 * (a + d)
    disc = complex((0.5 * (a - d)) ** 2 + b * c) ** 0.5
    rho_bc = max(abs(mid + disc), abs(mid - disc))
    return math.sqrt(rho_bc)


def kappa_bound(config: SchwarzConfig1D) -> float:
    """Upper bound ``||M||_inf^2`` on the contraction per double iteration."""
    return iteration_matrix(config).kappa_bound()


def equal_sized_kappa(c, L, overlap) -> float:
    """``(p + r)^2`` for two equal subdomains with overlap ``overlap`` each.

    With ``l = L/2 + o`` this is
    ``((e^{k o} + e^{k (l - o)}) / (1 + e^{k l}))^2``, ``k = sqrt(c)``.
    """
    SchwarzConfig1D.equal(c, L, overlap)
    k = math.sqrt(c)
    l = 0.5 * L + overlap
    ratio = ((math.exp(k * (overlap - l)) + math.exp(-k * overlap))
             / (math.exp(-k * l) + 1.0))
    return ratio * ratio


def extension_form_kappa(c, L, delta) -> float:
    """``(e^{k L/2} + e^{k delta})^2 / (1 + e^{k (L/2 + delta)})^2``.

    The equal-split bound written in terms of the interval extension
    ``delta``. It equals :func:`equal_sized_kappa` with overlap ``delta``,
    whereas the intervals ``[-delta, L/2 + delta]``, ``[L/2 - delta,
    L + delta]`` have overlap ``2 delta``.
    """
    k = math.sqrt(c)
    ratio = ((math.exp(-k * delta) + math.exp(-0.5 * k * L))
             / (math.exp(-k * (0.5 * L + delta)) + 1.0))
    return ratio * ratio


def analytic_error_solve(c, a, b, alpha, beta, s):
    """Solution of ``(c - d^2/ds^2) e = 0`` on ``[a, b]``, ``e(a)=alpha``, ``e(b)=beta``."""
    if not b > a:
        raise ConfigError("need b > a")
    k = math.sqrt(c)
    s = np.asarray(s, dtype=float)
    span = k * (b - a)
    left = _sinh_ratio(np.clip(k * (b - s), 0, span), span)
    right = _sinh_ratio(np.clip(k * (s - a), 0, span), span)
    return alpha * left + beta * right


def simulate_error_recursion(config: SchwarzConfig1D, eps0, n: int):
    """Propagate interface errors by solving the subdomain problems exactly.

    Returns an ``(n + 1, 4)`` array whose rows are the error vectors.
    """
    cfg = config
    out = np.zeros((n + 1, 4))
    out[0] = np.asarray(eps0, dtype=float)
    for k in range(n):
        e = out[k]
        # subdomain 1: left data eps2(a1 + L), right data eps2(b1)
        e1 = analytic_error_solve(cfg.c, cfg.a1, cfg.b1, e[3], e[2],
                                  [cfg.b2 - cfg.L, cfg.a2])
        # subdomain 2: left data eps1(a2), right data eps1(b2 - L)
        e2 = analytic_error_solve(cfg.c, cfg.a2, cfg.b2, e[1], e[0],
                                  [cfg.b1, cfg.a1 + cfg.L])
        out[k + 1] = [e1[0], e1[1], e2[0], e2[1]]
    return out


# -- 1-D finite-difference reference -------------------------------------

def _periodic_helmholtz(n, hh, c):
    i = np.arange(n)
    rows = np.concatenate([i, i, i])
    cols = np.concatenate([i, (i - 1) % n, (i + 1) % n])
    vals = np.concatenate([np.full(n, c + 2 / hh**2),
                           np.full(2 * n, -1 / hh**2)])
    return SparseMatrix.from_triplets(rows, cols, vals, (n, n))


def _dirichlet_helmholtz(m, hh, c):
    i = np.arange(m)
    rows = np.concatenate([i, i[1:], i[:-1]])
    cols = np.concatenate([i, i[1:] - 1, i[:-1] + 1])
    vals = np.concatenate([np.full(m, c + 2 / hh**2),
                           np.full(2 * (m - 1), -1 / hh**2)])
    return SparseMatrix.from_triplets(rows, cols, vals, (m, m))


@dataclass
class Reference1D:
    s: np.ndarray            # grid nodes on [0, L)
    u_single: np.ndarray
    iterates: list
    error_history: np.ndarray


def reference_ras_1d(config: SchwarzConfig1D, f: Callable, h_1d: float,
                     n_iters: int, u0=None, tol=1e-13) -> Reference1D:
    """Finite-difference RAS on the periodic interval ``[0, L)``.

    Subdomain endpoints are snapped to the nearest grid node. Each subdomain
    solves ``(c - D2) u = f`` with Dirichlet values read from the previous
    global iterate at its endpoints; the new global iterate takes subdomain 1
    on ``[0, b1~)`` and subdomain 2 on ``[b1~, L)``, where the disjoint cut
    is the midpoint of the overlap ``[a2, b1]``.
    """
    cfg = config
    n = int(round(cfg.L / h_1d))
    if n < 8:
        raise ConfigError("h_1d too coarse")
    hh = cfg.L / n
    s = np.arange(n) * hh
    rhs = np.asarray(np.broadcast_to(f(s), s.shape), dtype=float)
    u_single = factorize(_periodic_helmholtz(n, hh, cfg.c), tol=tol)(rhs)

    cut = 0.5 * (cfg.a2 + cfg.b1)
    owned1 = s < cut
    subs = []
    for a, b, own in ((cfg.a1, cfg.b1, owned1), (cfg.a2, cfg.b2, ~owned1)):
        ia, ib = int(round(a / hh)), int(round(b / hh))
        if ib - ia < 3:
            raise ConfigError("subdomain has fewer than two interior nodes")
        nodes = np.arange(ia, ib + 1) % n      # endpoints included
        interior = nodes[1:-1]
        solver = factorize(_dirichlet_helmholtz(len(interior), hh, cfg.c),
                           tol=tol)
        keep = own[interior]
        subs.append((nodes[0], nodes[-1], interior, solver, keep))

    u = np.zeros(n) if u0 is None else np.asarray(u0, dtype=float).copy()
    iterates = [u.copy()]
    history = [np.max(np.abs(u - u_single))]
    for _ in range(n_iters):
        new = np.empty(n)
        for left, right, interior, solver, keep in subs:
            b = rhs[interior].copy()
            b[0] += u[left] / hh**2
            b[-1] += u[right] / hh**2
            x = solver(b)
            new[interior[keep]] = x[keep]
        u = new
        iterates.append(u.copy())
        history.append(np.max(np.abs(u - u_single)))
    return Reference1D(s, u_single, iterates, np.array(history))


# -- sweeps --------------------------------------------------------------

SWEEP_COLUMNS = ("c", "L", "l1", "l2", "d1", "d2", "inf_norm", "rho",
                 "kappa_bound")


def sweep(configs):
    rows = []
    for cfg in configs:
        im = iteration_matrix(cfg)
        rows.append((cfg.c, cfg.L, cfg.l1, cfg.l2, cfg.d1, cfg.d2,
                     im.inf_norm(), im.spectral_radius(), im.kappa_bound()))
    return rows


def write_sweep_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([f"{v:.17g}" for v in row])
