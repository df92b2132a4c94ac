"""Two-subdomain restricted additive Schwarz on the closest point band.

Band points are assigned to subdomains by the arclength of their closest
point. Subdomain ``j`` owns the points whose arclength lies in its disjoint
piece and solves on the points whose arclength lies in its overlapping
interval (its *members*). The new global iterate takes each subdomain's
solution on its owned points only.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .band import Band
from .errors import ConfigError, EmptySubdomain, InvalidOverlap
from .sparsela import Factorization, SolveLog, SparseMatrix
from .theory import SchwarzConfig1D

__all__ = [
    "Partition", "make_partition", "RAS", "ras_step", "ras_solve",
    "observed_kappa", "write_history_csv", "read_history_csv",
    "DIRICHLET_MODES",
]

logger = logging.getLogger(__name__)

DIRICHLET_MODES = ("algebraic", "iterate", "extension")


@dataclass(frozen=True, eq=False)
class Partition:
    L: float
    disjoint: tuple      # ((0, cut), (cut, L))
    intervals: tuple     # ((a1, b1), (a2, b2)), arclength, may leave [0, L)
    owned: tuple         # band ordinals per subdomain
    member: tuple
    boundary: tuple      # members whose operator row references non-members
    interior: tuple

    @property
    def l1(self):
        a, b = self.intervals[0]
        return b - a

    @property
    def l2(self):
        a, b = self.intervals[1]
        return b - a

    @property
    def d1(self):
        return self.intervals[0][1] - self.intervals[1][0]

    @property
    def d2(self):
        return self.intervals[1][1] - (self.intervals[0][0] + self.L)

    def config1d(self, c) -> SchwarzConfig1D:
        (a1, b1), (a2, b2) = self.intervals
        return SchwarzConfig1D(c, self.L, a1, b1, a2, b2)


def _in_interval(s, a, b, L):
    return np.mod(s - a, L) <= (b - a)


def make_partition(band: Band, L: float, split_fractions, overlap_lengths,
                   A: SparseMatrix) -> Partition:
    """Arclength partition of ``band`` into two overlapping subdomains.

    ``split_fractions`` gives the disjoint pieces ``[0, f1 L)`` and
    ``[f1 L, L)``. Each shared boundary is widened by half of the requested
    overlap on either side, so ``d1 = b1 - a2`` and ``d2 = b2 - (a1 + L)``
    equal ``overlap_lengths``.
    """
    f1, f2 = (float(x) for x in split_fractions)
    if not (f1 > 0 and f2 > 0 and abs(f1 + f2 - 1) < 1e-12):
        raise ConfigError("split fractions must be positive and sum to 1")
    d1, d2 = (float(x) for x in overlap_lengths)
    cut = f1 * L
    intervals = ((-0.5 * d2, cut + 0.5 * d1), (cut - 0.5 * d1, L + 0.5 * d2))
    l1 = intervals[0][1] - intervals[0][0]
    l2 = intervals[1][1] - intervals[1][0]
    if not (d1 > 0 and d2 > 0 and d1 + d2 < min(l1, l2)):
        raise InvalidOverlap(
            f"need 0 < d1, d2 and d1 + d2 < min(l1, l2); got d1={d1:.6g}, "
            f"d2={d2:.6g}, l1={l1:.6g}, l2={l2:.6g}")

    n = band.n
    if A.shape != (n, n):
        raise ConfigError("operator does not match the band")
    s = band.s[:n]
    owned_mask = s < cut
    Acsr = A.to_scipy()
    owned, member, boundary, interior = [], [], [], []
    for j, (a, b) in enumerate(intervals):
        mem = _in_interval(s, a, b, L)
        idx = np.flatnonzero(mem)
        rows = Acsr[idx]
        outside = np.bincount(
            np.repeat(np.arange(len(idx)), np.diff(rows.indptr)),
            weights=(~mem[rows.indices]).astype(float), minlength=len(idx))
        gamma = outside > 0
        if not np.any(~gamma):
            raise EmptySubdomain(f"subdomain {j + 1} has no interior points")
        owned.append(np.flatnonzero(owned_mask if j == 0 else ~owned_mask))
        member.append(idx)
        boundary.append(idx[gamma])
        interior.append(idx[~gamma])
    return Partition(L=float(L), disjoint=((0.0, cut), (cut, float(L))),
                     intervals=intervals, owned=tuple(owned),
                     member=tuple(member), boundary=tuple(boundary),
                     interior=tuple(interior))


class RAS:
    """Restricted additive Schwarz iteration with factorised local problems.

    ``dirichlet`` selects how interface data from the previous iterate
    enters each local problem:

    ``"algebraic"`` (default)
        every member row is kept; couplings to non-member points are moved
        to the right-hand side using the previous iterate.
    ``"iterate"``
        rows of boundary members are replaced by identity rows holding the
        previous iterate's values.
    ``"extension"``
        as ``"iterate"`` but holding the extension ``E u_prev``.

    All three share the same owned-point recombination. Only
    ``"algebraic"`` and ``"iterate"`` have the single-domain solution as an
    exact fixed point.
    """

    def __init__(self, A: SparseMatrix, b, partition: Partition,
                 E: SparseMatrix | None = None, inner_tol=1e-12,
                 dirichlet="algebraic", log: SolveLog | None = None):
        if dirichlet not in DIRICHLET_MODES:
            raise ConfigError(f"unknown dirichlet mode {dirichlet!r}")
        if dirichlet == "extension" and E is None:
            raise ConfigError("extension mode needs the extension matrix")
        self.A = A
        self.b = np.asarray(b, dtype=float)
        self.n = A.nrows
        if self.b.shape != (self.n,):
            raise ConfigError("rhs does not match the operator")
        self.partition = partition
        self.E = E
        self.dirichlet = dirichlet
        self.log = SolveLog() if log is None else log
        Acsr = A.to_scipy()
        self._subs = []
        for idx, gamma, own in zip(partition.member, partition.boundary,
                                   partition.owned):
            rows = Acsr[idx]
            local = rows[:, idx]
            is_gamma = np.isin(idx, gamma)
            outside = np.setdiff1d(np.arange(self.n), idx, assume_unique=True)
            coupling = rows[:, outside] if dirichlet == "algebraic" else None
            if dirichlet != "algebraic":
                keep = sp.diags((~is_gamma).astype(float))
                local = keep @ local + sp.diags(is_gamma.astype(float))
            solver = Factorization(SparseMatrix(local), tol=inner_tol,
                                   log=self.log)
            pos = np.flatnonzero(np.isin(idx, own))
            self._subs.append((idx, is_gamma, outside, coupling, solver,
                               pos, idx[pos]))
        covered = np.concatenate([s[6] for s in self._subs])
        if len(covered) != self.n or len(np.unique(covered)) != self.n:
            raise ConfigError("owned sets do not partition the band")

    def step(self, u_prev):
        u_prev = np.asarray(u_prev, dtype=float)
        if u_prev.shape != (self.n,):
            raise ConfigError("iterate has the wrong length")
        if self.dirichlet == "extension":
            data = (self.E @ u_prev)[:self.n]
        else:
            data = u_prev
        new = np.empty(self.n)
        for idx, is_gamma, outside, coupling, solver, pos, dest in self._subs:
            rhs = self.b[idx].copy()
            if coupling is not None:
                rhs -= coupling @ u_prev[outside]
            else:
                rhs[is_gamma] = data[idx[is_gamma]]
            x = solver(rhs)
            new[dest] = x[pos]
        return new

    def solve(self, u0, u_single, tol, max_iter):
        if not tol > 0:
            raise ConfigError("tol must be positive")
        u = np.asarray(u0, dtype=float).copy()
        history = [float(np.max(np.abs(u - u_single)))]
        while history[-1] > tol and len(history) <= max_iter:
            u = self.step(u)
            history.append(float(np.max(np.abs(u - u_single))))
        logger.debug("RAS stopped after %d iterations, error %.3e",
                     len(history) - 1, history[-1])
        return u, np.array(history)


def ras_step(A, b, partition, E, u_prev, inner_tol=1e-12,
             dirichlet="algebraic"):
    return RAS(A, b, partition, E, inner_tol=inner_tol,
               dirichlet=dirichlet).step(u_prev)


def ras_solve(A, b, partition, E, u0, tol, max_iter, u_single=None,
              inner_tol=1e-12, dirichlet="algebraic"):
    """Iterate RAS from ``u0`` until ``||u - u_single||_inf <= tol``.

    Returns ``(u, error_history)`` with ``error_history[n]`` the max-norm
    distance of iterate ``n`` to the single-domain solution. At most
    ``max_iter`` steps are taken.
    """
    if u_single is None:
        u_single = Factorization(A, tol=inner_tol)(np.asarray(b, float))
    ras = RAS(A, b, partition, E, inner_tol=inner_tol, dirichlet=dirichlet)
    return ras.solve(u0, u_single, tol, max_iter)


def observed_kappa(error_history, skip=0) -> float:
    """Geometric mean of ``history[n + 2] / history[n]``.

    Entries from the first one below ``1e3 * eps * history[0]`` onwards are
    discarded, as are the first ``skip`` entries.
    """
    h = np.asarray(error_history, dtype=float)
    if len(h) < 3:
        raise ConfigError("need at least three history entries")
    floor = 1e3 * np.finfo(float).eps * h[0]
    small = np.flatnonzero(~(h > floor))
    m = small[0] if len(small) else len(h)
    h = h[skip:m]
    if len(h) < 3:
        raise ConfigError("fewer than one valid double-iteration ratio")
    ratios = h[2:] / h[:-2]
    return float(np.exp(np.mean(np.log(ratios))))


def write_history_csv(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("iter", "error"))
        for k, e in enumerate(history):
            w.writerow((k, f"{e:.17g}"))


def read_history_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["iter", "error"]:
        raise ConfigError("not an error-history CSV")
    return np.array([float(r[1]) for r in rows[1:]])
