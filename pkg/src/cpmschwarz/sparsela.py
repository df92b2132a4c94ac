"""Compressed-sparse-row matrices, products, and non-symmetric solves.

Storage and products are backed by :mod:`scipy.sparse`; the restarted GMRES
solver is implemented here. A direct LU path (SuperLU) is provided for the
many repeated subdomain solves of the Schwarz iteration, under the same
residual contract as the Krylov path.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, NoConvergence

__all__ = [
    "SparseMatrix", "matvec", "spmm", "solve", "gmres", "factorize",
    "Factorization", "SolveLog", "rounding_floor", "write_triplets",
    "read_triplets",
]

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
ROUNDING_FACTOR = 8.0


def rounding_floor(A: "SparseMatrix", x, b) -> float:
    """Smallest relative residual resolvable in double precision.

    ``eps * || |A| |x| + |b| ||_2 / ||b||_2``, scaled by ``ROUNDING_FACTOR``:
    the error committed merely by evaluating ``A x - b`` in floating point.
    """
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return 0.0
    absA = abs(A.to_scipy())
    bound = absA @ np.abs(x) + np.abs(b)
    return ROUNDING_FACTOR * np.finfo(float).eps * np.linalg.norm(bound) / bnorm


class SolveLog:
    """Record of accepted solves: relative residual and threshold applied."""

    def __init__(self):
        self.records = []

    def add(self, residual, tol, floor):
        self.records.append((residual, tol, floor))

    def all_within_threshold(self):
        return all(r <= max(t, f) for r, t, f in self.records)

    def all_within_tol(self):
        return all(r <= t for r, t, _ in self.records)

    def max_residual(self):
        return max((r for r, _, _ in self.records), default=0.0)

    def __len__(self):
        return len(self.records)


class SparseMatrix:
    """Immutable CSR matrix.

    Column indices are strictly increasing within each row and no explicit
    zeros are stored. Use :meth:`from_triplets` to build one from possibly
    repeated ``(row, col, value)`` entries.
    """

    __slots__ = ("_csr",)

    def __init__(self, csr):
        csr = sp.csr_array(csr, dtype=float)
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        csr.indptr.flags.writeable = False
        csr.indices.flags.writeable = False
        csr.data.flags.writeable = False
        self._csr = csr

    @classmethod
    def from_triplets(cls, rows, cols, vals, shape):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if rows.size and (rows.min() < 0 or rows.max() >= shape[0]
                          or cols.min() < 0 or cols.max() >= shape[1]):
            raise ConfigError("triplet index out of range")
        return cls(sp.coo_array((vals, (rows, cols)), shape=shape).tocsr())

    @classmethod
    def identity(cls, n):
        return cls(sp.identity(n, format="csr"))

    @classmethod
    def from_dense(cls, a):
        return cls(sp.csr_array(np.asarray(a, dtype=float)))

    @property
    def shape(self):
        return self._csr.shape

    @property
    def nrows(self):
        return self._csr.shape[0]

    @property
    def ncols(self):
        return self._csr.shape[1]

    @property
    def indptr(self):
        return self._csr.indptr

    @property
    def indices(self):
        return self._csr.indices

    @property
    def data(self):
        return self._csr.data

    @property
    def nnz(self):
        return self._csr.nnz

    def row_nnz(self):
        return np.diff(self._csr.indptr)

    def row_sums(self):
        return np.asarray(self._csr.sum(axis=1)).ravel()

    def diagonal(self):
        return self._csr.diagonal()

    def to_scipy(self):
        return self._csr

    def todense(self):
        return self._csr.toarray()

    def submatrix(self, rows, cols=None):
        rows = np.asarray(rows)
        cols = rows if cols is None else np.asarray(cols)
        return SparseMatrix(self._csr[rows][:, cols])

    def matvec(self, v):
        return matvec(self, v)

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return spmm(self, other)
        return matvec(self, other)

    def __add__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        if other.shape != self.shape:
            raise ConfigError("shape mismatch in sparse addition")
        return SparseMatrix(self._csr + other._csr)

    def __sub__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        if other.shape != self.shape:
            raise ConfigError("shape mismatch in sparse subtraction")
        return SparseMatrix(self._csr - other._csr)

    def __mul__(self, scalar):
        return SparseMatrix(self._csr * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return SparseMatrix(-self._csr)

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def matvec(A: SparseMatrix, v):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != A.ncols:
        raise ConfigError(
            f"dimension mismatch: matrix {A.shape} times vector {v.shape}")
    return A.to_scipy() @ v


def spmm(A: SparseMatrix, B: SparseMatrix) -> SparseMatrix:
    if A.ncols != B.nrows:
        raise ConfigError(f"dimension mismatch: {A.shape} @ {B.shape}")
    return SparseMatrix(A.to_scipy() @ B.to_scipy())


def _diag_preconditioner(A):
    d = A.diagonal()
    if np.any(d == 0):
        return np.ones_like(d)
    return d


def gmres(A: SparseMatrix, b, tol=DEFAULT_TOL, max_iter=10_000, restart=50,
          x0=None, log: SolveLog | None = None):
    """Restarted GMRES with right diagonal (Jacobi) preconditioning.

    Solves ``A x = b`` to ``||A x - b||_2 <= tol ||b||_2`` and raises
    :class:`NoConvergence` otherwise. When ``tol`` lies below the rounding
    floor of the residual (see :func:`rounding_floor`) the floor is used
    instead. ``max_iter`` counts inner (Arnoldi) iterations across all
    restarts. If a diagonal entry is zero the preconditioner falls back to
    the identity.
    """
    b = np.asarray(b, dtype=float)
    n = A.nrows
    if A.ncols != n or b.shape != (n,):
        raise ConfigError("gmres needs a square matrix and matching rhs")
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n)
    dinv = 1.0 / _diag_preconditioner(A)
    Acsr = A.to_scipy()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    m = max(1, min(restart, n))
    done = 0
    r = b - Acsr @ x
    rnorm = np.linalg.norm(r)
    while True:
        floor = rounding_floor(A, x, b)
        if rnorm <= max(tol, floor) * bnorm:
            if log is not None:
                log.add(rnorm / bnorm, tol, floor)
            return x
        if done >= max_iter:
            raise NoConvergence(done, rnorm / bnorm)
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = rnorm
        V[0] = r / rnorm
        k_used = 0
        for k in range(m):
            w = Acsr @ (dinv * V[k])
            # modified Gram-Schmidt, one reorthogonalisation pass
            for _ in range(2):
                for i in range(k + 1):
                    hik = V[i] @ w
                    H[i, k] += hik
                    w -= hik * V[i]
            H[k + 1, k] = np.linalg.norm(w)
            if H[k + 1, k] > 0:
                V[k + 1] = w / H[k + 1, k]
            for i in range(k):
                tmp = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = tmp
            denom = math.hypot(H[k, k], H[k + 1, k])
            cs[k] = H[k, k] / denom
            sn[k] = H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            k_used = k + 1
            done += 1
            if abs(g[k + 1]) <= 0.5 * tol * bnorm or done >= max_iter:
                break
        y = np.linalg.solve(np.triu(H[:k_used, :k_used]), g[:k_used])
        x = x + dinv * (V[:k_used].T @ y)
        r = b - Acsr @ x
        rnorm = np.linalg.norm(r)


class Factorization:
    """Sparse LU of a square matrix, reusable across right-hand sides.

    Every :meth:`solve` enforces ``||A x - b||_2 <= max(tol, floor) ||b||_2``
    where ``floor`` is :func:`rounding_floor`, applying up to ``refine``
    steps of iterative refinement before raising :class:`NoConvergence`.
    Accepted solves are appended to ``log`` when one is given.
    """

    def __init__(self, A: SparseMatrix, tol=DEFAULT_TOL, refine=3,
                 log: SolveLog | None = None):
        if A.nrows != A.ncols:
            raise ConfigError("factorize needs a square matrix")
        if not tol > 0:
            raise ConfigError("tol must be positive")
        self.A = A
        self.tol = tol
        self.refine = refine
        self.log = log
        self._lu = spla.splu(A.to_scipy().tocsc())

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape != (self.A.nrows,):
            raise ConfigError("right-hand side has the wrong length")
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            return np.zeros_like(b)
        Acsr = self.A.to_scipy()
        x = self._lu.solve(b)
        r = b - Acsr @ x
        rel = np.linalg.norm(r) / bnorm
        steps = 0
        while rel > self.tol and steps < self.refine:
            x_new = x + self._lu.solve(r)
            r_new = b - Acsr @ x_new
            rel_new = np.linalg.norm(r_new) / bnorm
            steps += 1
            if rel_new >= rel:
                break
            x, r, rel = x_new, r_new, rel_new
        floor = rounding_floor(self.A, x, b) if rel > self.tol else 0.0
        if rel > max(self.tol, floor):
            raise NoConvergence(steps, rel)
        if self.log is not None:
            self.log.add(rel, self.tol, floor)
        return x

    __call__ = solve


def factorize(A: SparseMatrix, tol=DEFAULT_TOL,
              log: SolveLog | None = None) -> Factorization:
    return Factorization(A, tol=tol, log=log)


def solve(A: SparseMatrix, b, tol=DEFAULT_TOL, max_iter=10_000,
          method="gmres", log: SolveLog | None = None):
    """Solve ``A x = b`` with ``||A x - b||_2 <= tol ||b||_2``.

    ``tol`` is raised to the residual's rounding floor when it is below it.

    ``method`` is ``"gmres"`` (restart 50, right diagonal preconditioning) or
    ``"direct"`` (sparse LU with iterative refinement).
    """
    if not tol > 0:
        raise ConfigError("tol must be positive")
    if method == "gmres":
        return gmres(A, b, tol=tol, max_iter=max_iter, log=log)
    if method == "direct":
        return Factorization(A, tol=tol, log=log).solve(b)
    raise ConfigError(f"unknown solve method {method!r}")


def write_triplets(path, A: SparseMatrix):
    """Write ``rows cols nnz`` then one ``row col value`` line per entry."""
    coo = A.to_scipy().tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{A.nrows} {A.ncols} {A.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v:.17g}\n")


def read_triplets(path) -> SparseMatrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ConfigError("triplet header must be 'rows cols nnz'")
        nrows, ncols, nnz = (int(x) for x in header)
        body = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    if body.shape[0] != nnz:
        raise ConfigError(f"expected {nnz} triplets, found {body.shape[0]}")
    return SparseMatrix.from_triplets(body[:, 0].astype(np.int64),
                                      body[:, 1].astype(np.int64),
                                      body[:, 2], (nrows, ncols))
