"""Dyadic cells, point location and occupancy maps."""
from dataclasses import dataclass

import numpy as np

__all__ = ["CellIndex", "DesignSample", "OccupancyMap", "locate", "occupancy", "shift"]


@dataclass(frozen=True)
class CellIndex:
    """The dyadic cell ``2**-j (m + (0, 1)**d)``."""

    j: int
    m: tuple

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(v) for v in np.atleast_1d(self.m)))

    @property
    def d(self):
        return len(self.m)

    def center(self):
        return (np.asarray(self.m, dtype=float) + 0.5) * 2.0 ** (-self.j)

    def bounds(self):
        lo = np.asarray(self.m, dtype=float) * 2.0 ** (-self.j)
        return lo, lo + 2.0 ** (-self.j)


class DesignSample:
    """
    Design points and responses.

    Parameters
    ----------
    X : array_like, shape (n, d) or (n,)
    Y : array_like, shape (n,), optional
        Responses; may be omitted for design-only samples.
    """

    def __init__(self, X, Y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError("X must be one- or two-dimensional")
        if not np.all(np.isfinite(X)):
            raise ValueError("design points must be finite")
        if Y is not None:
            Y = np.asarray(Y, dtype=float).reshape(-1)
            if len(Y) != len(X):
                raise ValueError(f"X has {len(X)} rows but Y has {len(Y)}")
            if not np.all(np.isfinite(Y)):
                raise ValueError("responses must be finite")
        self.X = X
        self.Y = Y

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def subset(self, idx):
        return DesignSample(self.X[idx], None if self.Y is None else self.Y[idx])

    def with_responses(self, Y):
        return DesignSample(self.X, Y)

    def __len__(self):
        return self.n


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None, None]
    elif x.ndim == 1:
        x = x[:, None]
    return x


def cell_coords(x, j, clamp_unit=True):
    """
    Lattice coordinates ``floor(2**j x)`` for a batch of points.

    With ``clamp_unit`` the face ``x_i = 1`` of the unit cube is folded into
    the last cell so that ``[0, 1]**d`` is fully covered.
    """
    x = _as_points(x)
    m = np.floor(2.0**j * x).astype(np.int64)
    if clamp_unit:
        top = 2**j
        m[(x == 1.0) & (m == top)] = top - 1
    return m


def locate(x, j, clamp_unit=True):
    """Cell of level ``j`` containing the single point ``x``."""
    m = cell_coords(np.atleast_1d(np.asarray(x, dtype=float))[None, :], j, clamp_unit)[0]
    return CellIndex(j, tuple(m))


@dataclass(frozen=True)
class OccupancyMap:
    """
    Sample rows grouped by the level-``j`` cell they fall in.

    ``cells[c]`` is the lattice coordinate of group ``c`` and ``rows[c]`` the
    sample indices it holds.  Groups are sorted lexicographically by cell.
    """

    j: int
    cells: np.ndarray
    rows: list

    def __len__(self):
        return len(self.rows)

    def as_dict(self):
        return {CellIndex(self.j, tuple(c)): r for c, r in zip(self.cells, self.rows)}

    def lookup(self):
        return {tuple(int(v) for v in c): i for i, c in enumerate(self.cells)}


def occupancy(sample, j, clamp_unit=True):
    """Group the rows of ``sample`` (or an ``(n, d)`` array) by cell at level ``j``."""
    X = sample.X if isinstance(sample, DesignSample) else _as_points(sample)
    if len(X) == 0:
        return OccupancyMap(j, np.zeros((0, X.shape[1]), dtype=np.int64), [])
    m = cell_coords(X, j, clamp_unit)
    cells, inverse = np.unique(m, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    splits = np.cumsum(np.bincount(inverse, minlength=len(cells)))[:-1]
    return OccupancyMap(j, cells, np.split(order, splits))


def shift(u, anchor, j):
    """Move ``anchor`` to the centre of ``2**-j [0, 1]**d``; ``u`` follows rigidly."""
    u = np.asarray(u, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    return u - anchor + 2.0 ** (-j - 1)
