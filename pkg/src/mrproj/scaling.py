"""
Daubechies scaling functions on a dyadic value table.

The father function of order ``r`` (``r`` vanishing moments, ``2r`` filter
taps) is stored on the grid ``m * 2**-L`` of its support ``[-(r-1), r]`` and
read back by linear interpolation.  ``r = 1`` is the Haar indicator of
``[0, 1)``, which is evaluated exactly.
"""
import csv
import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .exceptions import BasisConstructionError

__all__ = [
    "ScalingBasis",
    "daubechies_filter",
    "build_basis",
    "eval_phi",
    "support",
    "active_offsets",
    "active_indices",
    "design_matrix",
]

MAX_ORDER = 10


def daubechies_filter(r):
    """
    Minimum-phase Daubechies refinement filter with ``2r`` taps.

    Obtained by spectral factorisation of the Daubechies polynomial
    ``P(y) = sum_k C(r-1+k, k) y**k`` with ``y = sin(w/2)**2``; the roots
    inside the unit circle are kept.  Coefficients sum to ``sqrt(2)``.

    Parameters
    ----------
    r : int
        Number of vanishing moments, ``1 <= r <= 10``.

    Returns
    -------
    h : ndarray, shape (2r,)
    """
    if not isinstance(r, (int, np.integer)) or not 1 <= r <= MAX_ORDER:
        raise ValueError(f"order r must be an integer in [1, {MAX_ORDER}], got {r!r}")
    r = int(r)
    poly = np.array([1.0])
    if r > 1:
        # P(y) in increasing powers; np.roots wants decreasing
        p_coeffs = [comb(r - 1 + k, k) for k in range(r)]
        y_roots = np.roots(p_coeffs[::-1])
        for y in y_roots:
            # y = (2 - z - 1/z) / 4  <=>  z**2 - (2 - 4y) z + 1 = 0
            z = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
            z_in = z[np.argmin(np.abs(z))]
            poly = np.convolve(poly, [1.0, -z_in])
        poly = np.real(poly)
    for _ in range(r):
        poly = np.convolve(poly, [1.0, 1.0])
    h = poly * (np.sqrt(2.0) / poly.sum())
    # largest tap first, the usual minimum-phase presentation
    if abs(h[0]) < abs(h[-1]):
        h = h[::-1]
    return h


def _integer_values(h):
    """Values of the standard (support ``[0, 2r-1]``) father function at integers."""
    n_taps = len(h)
    last = n_taps - 1
    interior = np.arange(1, last)
    mat = np.zeros((len(interior), len(interior)))
    for a_i, a in enumerate(interior):
        for b_i, b in enumerate(interior):
            t = 2 * a - b
            if 0 <= t < n_taps:
                mat[a_i, b_i] = np.sqrt(2.0) * h[t]
    w, v = np.linalg.eig(mat)
    i = int(np.argmin(np.abs(w - 1.0)))
    if abs(w[i] - 1.0) > 1e-8:
        raise BasisConstructionError(
            f"integer refinement matrix has no eigenvalue 1 (closest {w[i]!r})")
    vec = np.real(v[:, i])
    if abs(vec.sum()) < 1e-12:
        raise BasisConstructionError("eigenvector cannot be normalised to unit mass")
    vec = vec / vec.sum()
    values = np.zeros(n_taps)
    values[interior] = vec
    return values


@dataclass(frozen=True)
class ScalingBasis:
    """
    Tabulated Daubechies father function.

    Attributes
    ----------
    r : int
        Order; the basis reproduces polynomials of degree ``r - 1``.
    filter : ndarray
        The ``2r`` refinement coefficients; ``filter[t]`` multiplies
        ``phi(2x - (t - (r-1)))`` in the refinement relation.
    table_depth : int
        Dyadic depth ``L`` of the value table.
    grid, values : ndarray
        ``phi(grid[m]) = values[m]`` with ``grid[m] = -(r-1) + m 2**-L``.
    """

    r: int
    filter: np.ndarray = field(repr=False)
    table_depth: int
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def R(self):
        """Number of active translates per axis on a cell, ``2r - 1``."""
        return 2 * self.r - 1

    @property
    def is_haar(self):
        return self.r == 1

    def phi(self, u):
        """Evaluate the father function at (arrays of) real points ``u``."""
        u = np.asarray(u, dtype=float)
        if self.is_haar:
            return ((u >= 0.0) & (u < 1.0)).astype(float)
        return np.interp(u, self.grid, self.values, left=0.0, right=0.0)

    def refinement_residual(self):
        """Max over table points of ``|phi(x) - sqrt2 sum_t h_t phi(2x - t)|``."""
        rhs = np.zeros_like(self.values)
        shift = self.r - 1
        for t, h_t in enumerate(self.filter):
            rhs += np.sqrt(2.0) * h_t * self.phi(2.0 * self.grid - (t - shift))
        return float(np.max(np.abs(self.values - rhs)))

    def to_csv(self, path):
        """Write the value table as ``x,phi`` rows."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "phi"])
            for x, v in zip(self.grid, self.values):
                writer.writerow([repr(float(x)), repr(float(v))])


def build_basis(r, table_depth=12):
    """
    Build the dyadic value table of the order-``r`` Daubechies father function.

    Integer values come from the eigenvalue-1 eigenvector of the integer
    refinement matrix (normalised so the translates sum to one); the table is
    then filled level by level with the refinement relation.

    Parameters
    ----------
    r : int
        Order, ``1 <= r <= 10``.
    table_depth : int
        Dyadic depth of the table, at least 6.

    Returns
    -------
    ScalingBasis
    """
    if not isinstance(table_depth, (int, np.integer)) or table_depth < 6:
        raise ValueError(f"table_depth must be an integer >= 6, got {table_depth!r}")
    h = daubechies_filter(r)
    r = int(r)
    L = int(table_depth)
    width = 2 * r - 1
    grid = np.arange(width * 2**L + 1) / 2.0**L - (r - 1)
    if r == 1:
        values = np.ones(2**L + 1)
        values[-1] = 0.0
        return ScalingBasis(r, h, L, grid, values)

    vals = _integer_values(h)
    n_taps = len(h)
    for level in range(1, L + 1):
        half = 2 ** (level - 1)
        new = np.zeros(width * 2**level + 1)
        new[::2] = vals
        odd = np.arange(1, len(new), 2)
        acc = np.zeros(len(odd))
        for t in range(n_taps):
            src = odd - t * half
            ok = (src >= 0) & (src < len(vals))
            acc[ok] += np.sqrt(2.0) * h[t] * vals[src[ok]]
        new[odd] = acc
        vals = new
    return ScalingBasis(r, h, L, grid, vals)


def eval_phi(basis, j, k, x):
    """
    Evaluate ``phi_{j,k}(x) = 2**(jd/2) prod_i phi(2**j x_i - k_i)``.

    ``x`` may be a single point of shape ``(d,)`` or a batch ``(n, d)``; a
    scalar is treated as ``d = 1``.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    x = np.asarray(x, dtype=float)
    scalar = x.ndim <= 1
    x = np.atleast_2d(x.reshape(-1, k.size) if x.ndim <= 1 else x)
    d = k.size
    vals = np.prod(basis.phi(2.0**j * x - k), axis=1) * 2.0 ** (j * d / 2.0)
    return float(vals[0]) if scalar else vals


def support(r, j, k):
    """
    Closed support box ``2**-j (k + [-(r-1), r]**d)`` of ``phi_{j,k}``.

    Returns
    -------
    lo, hi : ndarray
        Lower and upper corners.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    scale = 2.0 ** (-j)
    return scale * (k - (r - 1)), scale * (k + r)


def active_offsets(r, d):
    """
    Offsets ``o`` such that ``nu = m + o`` runs over ``S_j`` of cell ``m``.

    Ordered lexicographically with the last axis fastest, which matches the
    column order of :func:`design_matrix`.
    """
    one_axis = range(-(r - 1), r)
    return np.array(list(itertools.product(one_axis, repeat=d)), dtype=np.int64).reshape(-1, d)


def active_indices(r, j, cell):
    """
    Indices of the translates whose support covers the open cell.

    Parameters
    ----------
    r : int
    j : int
        Level (unused beyond documenting the lattice; the set is level-free
        in cell coordinates).
    cell : CellIndex or array_like of int
        The cell, or its lattice coordinate ``m``.

    Returns
    -------
    set of tuple of int
        ``(2r-1)**d`` lattice indices.
    """
    m = np.atleast_1d(np.asarray(getattr(cell, "m", cell), dtype=np.int64))
    offs = active_offsets(r, m.size)
    return {tuple(int(v) for v in row) for row in m + offs}


def design_matrix(basis, j, m, x):
    """
    Rows ``phi_H(x_i)`` of the local regression for points in cells ``m``.

    Parameters
    ----------
    basis : ScalingBasis
    j : int
    m : ndarray of int, shape (n, d)
        Lattice coordinate of the cell used for each row.
    x : ndarray, shape (n, d)
        Points, each inside (the closure of) its cell.

    Returns
    -------
    ndarray, shape (n, (2r-1)**d)
        Column order follows :func:`active_offsets`.
    """
    x = np.asarray(x, dtype=float)
    m = np.asarray(m)
    n, d = x.shape
    u = 2.0**j * x - m
    offs = np.arange(-(basis.r - 1), basis.r)
    out = np.ones((n, 1))
    for axis in range(d):
        if basis.is_haar:
            # in-cell points; keeps the face x = 1 folded into the last cell
            ax = np.ones((n, 1))
        else:
            ax = basis.phi(u[:, axis:axis + 1] - offs[None, :])
        out = (out[:, :, None] * ax[:, None, :]).reshape(n, -1)
    return out * 2.0 ** (j * d / 2.0)
