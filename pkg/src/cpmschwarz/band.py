"""Computational tube around a curve and the closest point discretisation.

The band is the set of grid points ``h * (i_1, ..., i_d)`` lying within the
tube radius of the curve. Laplacian rows of band points reference their
``2d`` grid neighbours; neighbours outside the band are kept as *ghost*
points. Ghost values are never unknowns: they are always obtained by
extension (interpolation at their closest point), so the discrete Laplacian
``Lap`` maps band+ghost values to band rows and the extension matrix ``E``
maps band values to band+ghost rows. The assembled operator is

    A = c I - Lap E + (2 d / h^2) (I - E_band)

where ``E_band`` is the square block of ``E`` for the band rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .curve import Curve
from .errors import (EmptyBandError, NonUniqueClosestPoint, StencilError,
                     TubeTooWide)
from .sparsela import SparseMatrix

__all__ = [
    "Band", "DiscreteOperator", "tube_radius", "build_band",
    "lagrange_weights", "stencil_1d", "extension_matrix", "laplacian",
    "assemble_helmholtz", "assemble_rhs", "restrict_to_curve",
    "interpolation_matrix", "discretize", "write_band_csv",
]


def tube_radius(d: int, p: int, h: float) -> float:
    return math.sqrt((d - 1) * (p + 1) ** 2 + (p + 3) ** 2) * h / 2


@dataclass(frozen=True, eq=False)
class Band:
    """Band points followed by ghost points.

    Arrays indexed by *extended ordinal* have ``n_ext`` rows; the first
    ``n`` are band points (the unknowns), the rest ghosts.
    """

    curve: Curve
    h: float
    p: int
    r: float
    index: np.ndarray      # (n_ext, d) integer grid indices
    cp: np.ndarray         # (n_ext, d)
    t: np.ndarray          # curve parameter of cp
    s: np.ndarray          # arclength of cp
    dist: np.ndarray       # distance to the curve
    n: int                 # number of band points
    grown: np.ndarray      # (n,) True for points added for stencil closure
    _lo: np.ndarray
    _extent: np.ndarray
    _strides: np.ndarray
    _sorted_keys: np.ndarray
    _order: np.ndarray

    @property
    def dim(self):
        return self.curve.dim

    @property
    def n_ext(self):
        return self.index.shape[0]

    @property
    def coords(self):
        return self.index * self.h

    def lookup(self, idx, band_only=False):
        """Extended ordinals of grid indices ``idx``; -1 where absent."""
        idx = np.asarray(idx, dtype=np.int64)
        shape = idx.shape[:-1]
        rel = idx.reshape(-1, self.dim) - self._lo
        inside = np.all((rel >= 0) & (rel < self._extent), axis=1)
        keys = np.where(inside, rel @ self._strides, -1)
        pos = np.searchsorted(self._sorted_keys, keys)
        pos = np.minimum(pos, len(self._sorted_keys) - 1)
        found = inside & (self._sorted_keys[pos] == keys)
        out = np.where(found, self._order[pos], -1)
        if band_only:
            out = np.where(out < self.n, out, -1)
        return out.reshape(shape)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    band: Band
    c: float
    E: SparseMatrix        # (n_ext, n)
    Lap: SparseMatrix      # (n, n_ext)
    A: SparseMatrix        # (n, n)
    b: np.ndarray          # (n,)

    @property
    def E_band(self):
        return self.E.submatrix(np.arange(self.band.n),
                                np.arange(self.band.n))


# -- interpolation stencils ----------------------------------------------

def lagrange_weights(theta, p: int):
    """Barycentric Lagrange weights on the nodes ``0, 1, ..., p``.

    ``theta`` has any shape; the result has an extra trailing axis of
    length ``p + 1``.
    """
    theta = np.asarray(theta, dtype=float)
    k = np.arange(p + 1)
    bw = np.array([(-1) ** j * math.comb(p, j) for j in k], dtype=float)
    diff = theta[..., None] - k
    # nodes closer than rounding distance are treated as exact hits
    exact = np.abs(diff) <= 1e-15
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        terms = bw / diff
        w = terms / terms.sum(axis=-1, keepdims=True)
    hit = exact.any(axis=-1)
    if np.any(hit):
        w[hit] = exact[hit].astype(float)
    return w


def stencil_1d(x, h: float, p: int):
    """First node index and Lagrange weights of the degree-``p`` stencil.

    Odd ``p``: the ``p + 1`` nodes whose middle cell contains ``x``. Even
    ``p``: the ``p + 1`` nodes centred on the node nearest ``x``. Ties go to
    the lower index.
    """
    q = np.asarray(x, dtype=float) / h
    if p % 2:
        base = np.floor(q).astype(np.int64) - (p - 1) // 2
    else:
        base = np.ceil(q - 0.5).astype(np.int64) - p // 2
    return base, lagrange_weights(q - base, p)


def _tensor_stencil(points, h, p):
    """Grid indices ``(m, (p+1)^d, d)`` and weights ``(m, (p+1)^d)``."""
    m, d = points.shape
    base, w1 = stencil_1d(points, h, p)          # (m, d), (m, d, p+1)
    offs = np.stack(np.meshgrid(*([np.arange(p + 1)] * d), indexing="ij"),
                    axis=-1).reshape(-1, d)       # ((p+1)^d, d)
    nodes = base[:, None, :] + offs[None, :, :]
    w = np.ones((m, offs.shape[0]))
    for k in range(d):
        w *= w1[:, k, offs[:, k]]
    return nodes, w


# -- band construction ---------------------------------------------------

def _neighbour_offsets(d):
    off = np.zeros((2 * d, d), dtype=np.int64)
    for k in range(d):
        off[2 * k, k] = 1
        off[2 * k + 1, k] = -1
    return off


def _row_keys(arrays):
    """Linear int64 keys for integer rows, shared across ``arrays``."""
    nonempty = [a for a in arrays if len(a)]
    lo = np.min([a.min(axis=0) for a in nonempty], axis=0)
    ext = np.max([a.max(axis=0) for a in nonempty], axis=0) - lo + 1
    strides = np.cumprod(np.concatenate([[1], ext[:0:-1]]))[::-1]
    return [(a - lo) @ strides if len(a) else np.zeros(0, np.int64)
            for a in arrays]


def _unique_rows(a):
    if len(a) == 0:
        return a.reshape(0, a.shape[-1])
    (keys,) = _row_keys([a])
    _, first = np.unique(keys, return_index=True)
    return a[first]


def _setdiff_rows(a, b):
    """Rows of ``a`` not present in ``b`` (both integer arrays)."""
    if len(a) == 0 or len(b) == 0:
        return a
    ka, kb = _row_keys([a, b])
    return a[~np.isin(ka, kb)]


def _layer_closest_points(curve, x):
    # ghosts and grown points lie up to a stencil width outside the tube,
    # which for a nearly self-approaching curve can cross its medial axis
    try:
        return curve.closest_points(x)
    except NonUniqueClosestPoint as exc:
        raise TubeTooWide(
            "the tube's stencil layer reaches points without a unique "
            f"closest point ({exc}); reduce h") from None


def build_band(curve: Curve, h: float, p: int) -> Band:
    """Grid points within the tube radius, closed under the stencils used."""
    if not h > 0:
        raise EmptyBandError("grid spacing must be positive")
    if p < 1:
        raise EmptyBandError("interpolation degree must be >= 1")
    d = curve.dim
    r = tube_radius(d, p, h)
    if r >= curve.min_curvature_radius:
        raise TubeTooWide(
            f"tube radius {r:.4g} >= minimum curvature radius "
            f"{curve.min_curvature_radius:.4g}; reduce h")

    # candidates: grid boxes around curve samples spaced <= h/2 in arclength
    n_samp = max(16, int(math.ceil(2 * curve.length / h)))
    samples = curve.point_at_arclength(
        np.arange(n_samp) * (curve.length / n_samp))
    half = int(math.ceil((r + h) / h))
    box = np.stack(np.meshgrid(*([np.arange(-half, half + 1)] * d),
                               indexing="ij"), axis=-1).reshape(-1, d)
    centre = np.rint(samples / h).astype(np.int64)
    chunks = []
    step = max(1, 2_000_000 // len(box))
    for i in range(0, n_samp, step):
        c = centre[i:i + step]
        chunks.append(_unique_rows((c[:, None, :] + box[None]).reshape(-1, d)))
    cand = _unique_rows(np.concatenate(chunks))

    # cheap prefilter on distance to the curve's search samples
    dsamp, _ = curve._tree.query(cand * h)
    cand = cand[dsamp <= r + curve._sample_gap]
    # far candidates may sit on the medial axis; uniqueness is only
    # demanded of the points that are kept
    cp, t, s, dist = curve.closest_points(cand * h, check_unique=False)
    keep = dist <= r
    if not np.any(keep):
        raise EmptyBandError("no grid points inside the tube")
    band_idx = cand[keep]
    data = list(curve.closest_points(band_idx * h))
    grown = np.zeros(len(band_idx), dtype=bool)

    nbr = _neighbour_offsets(d)
    while True:
        ghost_idx = _unique_rows(
            (band_idx[:, None, :] + nbr[None]).reshape(-1, d))
        ghost_idx = _setdiff_rows(ghost_idx, band_idx)
        gcp, gt, gs, gdist = _layer_closest_points(curve, ghost_idx * h)
        all_cp = np.vstack([data[0], gcp])
        nodes, _ = _tensor_stencil(all_cp, h, p)
        needed = _unique_rows(nodes.reshape(-1, d))
        missing = _setdiff_rows(needed, band_idx)
        if len(missing) == 0:
            break
        mcp, mt, ms, mdist = _layer_closest_points(curve, missing * h)
        band_idx = np.vstack([band_idx, missing])
        data = [np.vstack([data[0], mcp]), np.concatenate([data[1], mt]),
                np.concatenate([data[2], ms]),
                np.concatenate([data[3], mdist])]
        grown = np.concatenate([grown, np.ones(len(missing), dtype=bool)])

    index = np.vstack([band_idx, ghost_idx])
    lo = index.min(axis=0) - 1
    extent = index.max(axis=0) - lo + 2
    strides = np.cumprod(np.concatenate([[1], extent[:0:-1]]))[::-1].astype(
        np.int64)
    keys = (index - lo) @ strides
    order = np.argsort(keys, kind="stable")
    band = Band(
        curve=curve, h=float(h), p=int(p), r=r, index=index,
        cp=np.vstack([data[0], gcp]),
        t=np.concatenate([data[1], gt]),
        s=np.concatenate([data[2], gs]),
        dist=np.concatenate([data[3], gdist]),
        n=len(band_idx), grown=grown,
        _lo=lo, _extent=extent, _strides=strides, _sorted_keys=keys[order],
        _order=order.astype(np.int64))
    return band


# -- operators -----------------------------------------------------------

def interpolation_matrix(band: Band, points) -> SparseMatrix:
    """Degree-``p`` tensor interpolation of band values at ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    nodes, w = _tensor_stencil(points, band.h, band.p)
    cols = band.lookup(nodes, band_only=True)
    if np.any(cols < 0):
        bad = int(np.any(cols < 0, axis=1).sum())
        raise StencilError(
            f"{bad} interpolation stencil(s) leave the band")
    m, k = w.shape
    rows = np.repeat(np.arange(m), k)
    return SparseMatrix.from_triplets(rows, cols.ravel(), w.ravel(),
                                      (m, band.n))


def extension_matrix(band: Band, curve: Curve | None = None) -> SparseMatrix:
    """``(n_ext, n)`` matrix interpolating band data at every closest point."""
    return interpolation_matrix(band, band.cp)


def laplacian(band: Band) -> SparseMatrix:
    """``(n, n_ext)`` second-order cross-stencil Laplacian of band rows."""
    d, n, h = band.dim, band.n, band.h
    nbr = _neighbour_offsets(d)
    cols = band.lookup(band.index[:n, None, :] + nbr[None])
    if np.any(cols < 0):
        raise StencilError("Laplacian neighbour missing from band")
    rows = np.concatenate([np.arange(n), np.repeat(np.arange(n), 2 * d)])
    cols = np.concatenate([np.arange(n), cols.ravel()])
    vals = np.concatenate([np.full(n, -2.0 * d / h**2),
                           np.full(2 * d * n, 1.0 / h**2)])
    return SparseMatrix.from_triplets(rows, cols, vals, (n, band.n_ext))


def assemble_helmholtz(band: Band, c: float, E: SparseMatrix,
                       Lap: SparseMatrix) -> SparseMatrix:
    """``A = c I - Lap E + (2d/h^2)(I - E_band)``."""
    n, d, h = band.n, band.dim, band.h
    eye = SparseMatrix.identity(n)
    E_band = E.submatrix(np.arange(n), np.arange(n))
    return c * eye - Lap @ E + (2.0 * d / h**2) * (eye - E_band)


def assemble_rhs(band: Band, f: Callable) -> np.ndarray:
    """``f`` (a function of arclength) evaluated at each band point's cp."""
    s = band.s[:band.n]
    return np.asarray(np.broadcast_to(f(s), s.shape), dtype=float).copy()


def restrict_to_curve(band: Band, u, s_samples) -> np.ndarray:
    s_samples = np.asarray(s_samples, dtype=float)
    pts = band.curve.point_at_arclength(s_samples.ravel())
    return (interpolation_matrix(band, pts) @ np.asarray(u, dtype=float)
            ).reshape(s_samples.shape)


def discretize(curve: Curve, h: float, p: int, c: float,
               f: Callable) -> DiscreteOperator:
    band = build_band(curve, h, p)
    E = extension_matrix(band)
    Lap = laplacian(band)
    A = assemble_helmholtz(band, c, E, Lap)
    return DiscreteOperator(band=band, c=float(c), E=E, Lap=Lap, A=A,
                            b=assemble_rhs(band, f))


def write_band_csv(path, band: Band, values=None, mask=None):
    """Dump band points: grid coordinates, cp, cp arclength, optional value."""
    n = band.n
    sel = np.arange(n) if mask is None else np.flatnonzero(mask[:n])
    d = band.dim
    header = ([f"x{k}" for k in range(d)] + [f"cp{k}" for k in range(d)]
              + ["s", "dist"] + (["value"] if values is not None else []))
    cols = [band.coords[sel], band.cp[sel], band.s[sel, None],
            band.dist[sel, None]]
    if values is not None:
        cols.append(np.asarray(values)[sel, None])
    np.savetxt(path, np.hstack(cols), delimiter=",", fmt="%.17g",
               header=",".join(header), comments="")
