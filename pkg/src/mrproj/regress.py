"""
Local least-squares fits on dyadic cells and the fixed-level estimator.

On every occupied cell ``H`` of level ``j`` the responses are regressed on
the ``(2r-1)**d`` scaling functions whose supports cover ``H``.  A fit is
kept only when the smallest eigenvalue of its Gram matrix reaches the
threshold ``1 / pi_n``; otherwise the cell falls back to a configured value.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, FitError
from .lattice import CellIndex, cell_coords, occupancy
from .scaling import design_matrix

__all__ = [
    "ThresholdPolicy",
    "EstimatorConfig",
    "LocalFit",
    "CellFitTable",
    "gram_and_moment",
    "local_fit",
    "evaluate_fit",
    "estimate",
    "fit_level",
    "clamp",
    "FALLBACKS",
]

FALLBACKS = ("zero", "demote-level", "neighbor-average")
POLICIES = ("theory", "density-floor", "empirical-decile")


def clamp(z, M):
    """Truncation ``T_M``: values beyond ``+-M`` are set to ``+-M``."""
    if M is None:
        return z
    return np.clip(z, -M, M)


@dataclass(frozen=True)
class ThresholdPolicy:
    """
    Rule producing the eigenvalue threshold ``1 / pi_n``.

    Parameters
    ----------
    variant : {'theory', 'density-floor', 'empirical-decile'}
        ``theory`` uses ``pi_n = log n``; ``density-floor`` uses
        ``1/pi_n = min(g_min_star / 2, 1)`` for a known lower bound
        ``g_min_star``; ``empirical-decile`` takes the ``decile`` quantile of
        all computed smallest eigenvalues.
    g_min_star : float, optional
        Required by ``density-floor``.
    clamp : float, optional
        Known sup-norm bound ``M``; estimates are truncated to ``[-M, M]``.
    decile : float
        Quantile level of the empirical rule.
    """

    variant: str = "theory"
    g_min_star: float = None
    clamp: float = None
    decile: float = 0.1

    def __post_init__(self):
        if self.variant not in POLICIES:
            raise ConfigurationError(f"unknown threshold policy {self.variant!r}; expected one of {POLICIES}")
        if self.variant == "density-floor" and (self.g_min_star is None or self.g_min_star <= 0):
            raise ConfigurationError("density-floor policy needs a positive g_min_star")
        if self.clamp is not None and self.clamp <= 0:
            raise ConfigurationError("clamp bound M must be positive")
        if not 0.0 < self.decile < 1.0:
            raise ConfigurationError("decile must lie in (0, 1)")

    def pi_inv(self, n=None, lambdas=None):
        """
        Threshold ``1 / pi_n``.

        ``n`` is needed by ``theory``, ``lambdas`` (all smallest eigenvalues
        over cells and levels) by ``empirical-decile``.
        """
        if self.variant == "theory":
            if n is None or n < 3:
                raise ConfigurationError("theory threshold needs n >= 3 so that log n > 1")
            return 1.0 / np.log(n)
        if self.variant == "density-floor":
            return min(self.g_min_star / 2.0, 1.0)
        if lambdas is None or len(lambdas) == 0:
            raise ConfigurationError("empirical-decile threshold needs at least one computed eigenvalue")
        return min(float(np.quantile(np.asarray(lambdas, dtype=float), self.decile)), 1.0)


@dataclass(frozen=True)
class EstimatorConfig:
    """Order, dimension, threshold policy, Lepski constant and fallback."""

    r: int
    d: int = 1
    policy: ThresholdPolicy = field(default_factory=ThresholdPolicy)
    kappa: float = 1.0
    fallback: str = "zero"

    def __post_init__(self):
        if self.r < 1:
            raise ConfigurationError("r must be >= 1")
        if self.d < 1:
            raise ConfigurationError("d must be >= 1")
        if not self.kappa > 0:
            raise ConfigurationError("kappa must be > 0")
        if self.fallback not in FALLBACKS:
            raise ConfigurationError(f"unknown fallback {self.fallback!r}; expected one of {FALLBACKS}")


@dataclass(frozen=True)
class LocalFit:
    """Fitted coefficients on one cell; ``alpha`` is zero when not ``valid``."""

    cell: CellIndex
    alpha: np.ndarray
    lambda_min: float
    n_points: int
    valid: bool


def _points(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x.reshape(-1, d) if d > 1 else x[:, None]
    return x


def gram_and_moment(cell, sample, basis):
    """
    Local Gram matrix and moment vector of one cell.

    ``Q = (1/n) sum_i phi_H(X_i) phi_H(X_i)^T`` and
    ``b = (1/n) sum_i phi_H(X_i) Y_i`` over the sample points in ``cell``,
    with ``n`` the full sample size.
    """
    m = np.asarray(cell.m, dtype=np.int64)
    inside = np.all(cell_coords(sample.X, cell.j) == m, axis=1)
    p = basis.R ** len(m)
    if not inside.any():
        return np.zeros((p, p)), np.zeros(p)
    B = design_matrix(basis, cell.j, np.broadcast_to(m, (inside.sum(), len(m))), sample.X[inside])
    Q = B.T @ B / sample.n
    Q = 0.5 * (Q + Q.T)
    b = B.T @ sample.Y[inside] / sample.n
    return Q, b


def _singular_tol(w):
    """Eigenvalues below this are rounding noise of a rank-deficient Gram matrix."""
    p = w.shape[-1]
    return 10.0 * p * np.finfo(float).eps * np.maximum(w[..., -1], np.finfo(float).tiny)


def _spectral_solve(w, V, b, pi_inv):
    """
    Solve ``Q a = b`` from ``Q = V diag(w) V^T``.

    Rows whose smallest eigenvalue is below ``pi_inv``, or numerically zero
    (non-unique least-squares solution), get ``a = 0`` and ``valid = False``.
    """
    lam = w[..., 0]
    valid = (lam >= pi_inv) & (lam > _singular_tol(w))
    # only well-posed rows are divided
    safe = np.where(valid[..., None], w, 1.0)
    coef = np.einsum("...ji,...j->...i", V, b) / safe
    alpha = np.einsum("...ij,...j->...i", V, coef)
    alpha = np.where(valid[..., None], alpha, 0.0)
    return alpha, valid


def _eigh(Q):
    try:
        w, V = np.linalg.eigh(Q)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"symmetric eigensolve failed: {exc}") from exc
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(V))):
        raise FitError("symmetric eigensolve returned non-finite values")
    return w, V


def local_fit(cell, sample, basis, policy, pi_inv=None):
    """
    Thresholded least-squares fit on a single cell.

    Parameters
    ----------
    cell : CellIndex
    sample : DesignSample
    basis : ScalingBasis
    policy : ThresholdPolicy
    pi_inv : float, optional
        Overrides the policy's threshold (needed for the empirical rule).
    """
    if pi_inv is None:
        pi_inv = policy.pi_inv(n=sample.n)
    if pi_inv > 1:
        raise ConfigurationError("threshold 1/pi_n must not exceed 1")
    Q, b = gram_and_moment(cell, sample, basis)
    w, V = _eigh(Q)
    alpha, valid = _spectral_solve(w, V, b, pi_inv)
    n_points = int(np.all(cell_coords(sample.X, cell.j) == np.asarray(cell.m), axis=1).sum())
    lam = w[0] if w[0] > _singular_tol(w) else 0.0
    return LocalFit(cell, alpha, float(lam), n_points, bool(valid))


def evaluate_fit(fit, basis, x, clamp_bound=None):
    """
    Value of a single local fit at ``x``, which must lie in ``fit.cell``.

    Invalid fits evaluate to 0.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = cell_coords(x[None, :], fit.cell.j)[0]
    if tuple(int(v) for v in m) != fit.cell.m:
        raise ValueError(f"point {x.tolist()} is not in cell {fit.cell}")
    if not fit.valid:
        return float(clamp(0.0, clamp_bound))
    row = design_matrix(basis, fit.cell.j, m[None, :], x[None, :])[0]
    return float(clamp(row @ fit.alpha, clamp_bound))


class CellFitTable:
    """
    All local fits of one level, callable as the estimator ``x -> eta_j(x)``.

    Attributes
    ----------
    j : int
    cells : ndarray, shape (c, d)
        Occupied cells, lexicographically sorted.
    alpha : ndarray, shape (c, p)
    lambda_min : ndarray, shape (c,)
    n_points : ndarray, shape (c,)
    valid : ndarray of bool, shape (c,)
    pi_inv : float
        Threshold that produced ``valid``.
    """

    def __init__(self, basis, j, n, cells, alpha, lambda_min, n_points, valid, pi_inv,
                 clamp_bound=None, fallback="zero", systems=None):
        self.basis = basis
        self.j = int(j)
        self.n = int(n)
        cells = np.asarray(cells, dtype=np.int64)
        alpha = np.asarray(alpha, dtype=float)
        self.cells = cells.reshape(len(lambda_min), cells.shape[-1] if cells.ndim == 2 else -1)
        self.alpha = alpha.reshape(len(lambda_min), alpha.shape[-1] if alpha.ndim == 2 else -1)
        self.lambda_min = np.asarray(lambda_min, dtype=float)
        self.n_points = np.asarray(n_points, dtype=np.int64)
        self.valid = np.asarray(valid, dtype=bool)
        self.pi_inv = float(pi_inv)
        self.clamp_bound = clamp_bound
        self.fallback = fallback
        self._systems = systems
        self._index = {tuple(int(v) for v in c): i for i, c in enumerate(self.cells)}
        self._neighbour_cache = None

    @property
    def d(self):
        return self.cells.shape[1]

    @property
    def n_regressions(self):
        return len(self.lambda_min)

    def __len__(self):
        return self.n_regressions

    def fits(self):
        """The table as a ``{CellIndex: LocalFit}`` mapping."""
        out = {}
        for i, c in enumerate(self.cells):
            cell = CellIndex(self.j, tuple(c))
            out[cell] = LocalFit(cell, self.alpha[i].copy(), float(self.lambda_min[i]),
                                 int(self.n_points[i]), bool(self.valid[i]))
        return out

    def rethreshold(self, pi_inv):
        """Same fits under another threshold (only for tables built from data)."""
        if self._systems is None:
            raise ValueError("table was not built from data; eigen-systems unavailable")
        if pi_inv > 1:
            raise ConfigurationError("threshold 1/pi_n must not exceed 1")
        w, V, b = self._systems
        alpha, valid = _spectral_solve(w, V, b, pi_inv)
        return CellFitTable(self.basis, self.j, self.n, self.cells, alpha, self.lambda_min,
                            self.n_points, valid, pi_inv, self.clamp_bound, self.fallback,
                            self._systems)

    def with_options(self, clamp_bound=None, fallback=None):
        return CellFitTable(self.basis, self.j, self.n, self.cells, self.alpha, self.lambda_min,
                            self.n_points, self.valid, self.pi_inv,
                            self.clamp_bound if clamp_bound is None else clamp_bound,
                            self.fallback if fallback is None else fallback, self._systems)

    def cell_lookup(self, x):
        """Row index of the fit covering each point, -1 where the cell is empty."""
        x = _points(x, self.d)
        m = cell_coords(x, self.j)
        if len(self._index) == 0:
            return np.full(len(x), -1, dtype=np.int64)
        if self.d == 1:
            keys = self.cells[:, 0]
            pos = np.searchsorted(keys, m[:, 0])
            pos = np.clip(pos, 0, len(keys) - 1)
            return np.where(keys[pos] == m[:, 0], pos, -1)
        uniq, inv = np.unique(m, axis=0, return_inverse=True)
        idx = np.array([self._index.get(tuple(int(v) for v in u), -1) for u in uniq], dtype=np.int64)
        return idx[inv.reshape(-1)]

    def raw(self, x):
        """
        Unclamped fitted values and validity at ``x``.

        Returns
        -------
        values : ndarray
            ``<alpha_H, phi_H(x)>`` on valid cells, 0 elsewhere.
        ok : ndarray of bool
            Whether the covering cell holds a valid fit.
        """
        x = _points(x, self.d)
        idx = self.cell_lookup(x)
        ok = idx >= 0
        ok[ok] = self.valid[idx[ok]]
        values = np.zeros(len(x))
        if ok.any():
            m = cell_coords(x[ok], self.j)
            rows = design_matrix(self.basis, self.j, m, x[ok])
            values[ok] = np.einsum("ij,ij->i", rows, self.alpha[idx[ok]])
        return values, ok

    def _neighbour_values(self):
        if self._neighbour_cache is not None:
            return self._neighbour_cache
        centres = (self.cells + 0.5) * 2.0 ** (-self.j)
        centre_vals = np.zeros(len(self.cells))
        if self.valid.any():
            vrows = design_matrix(self.basis, self.j, self.cells[self.valid], centres[self.valid])
            centre_vals[self.valid] = np.einsum("ij,ij->i", vrows, self.alpha[self.valid])
        self._neighbour_cache = centre_vals
        return centre_vals

    def _neighbour_average(self, m):
        centre_vals = self._neighbour_values()
        steps = np.array(np.meshgrid(*[[-1, 0, 1]] * self.d, indexing="ij")).reshape(self.d, -1).T
        steps = steps[np.any(steps != 0, axis=1)]
        acc, cnt = 0.0, 0
        for s in steps:
            i = self._index.get(tuple(int(v) for v in m + s))
            if i is not None and self.valid[i]:
                acc += centre_vals[i]
                cnt += 1
        return acc / cnt if cnt else 0.0

    def __call__(self, x):
        """Evaluate ``eta_j`` at points ``x`` (shape ``(q, d)``, or ``(q,)`` when d = 1)."""
        x = _points(x, self.d)
        values, ok = self.raw(x)
        if self.fallback == "neighbor-average" and not ok.all():
            bad = np.flatnonzero(~ok)
            m = cell_coords(x[bad], self.j)
            cache = {}
            for k, mm in zip(bad, m):
                key = tuple(int(v) for v in mm)
                if key not in cache:
                    cache[key] = self._neighbour_average(mm)
                values[k] = cache[key]
        return clamp(values, self.clamp_bound)

    def to_dict(self):
        return {
            "j": self.j,
            "r": self.basis.r,
            "d": self.d,
            "n": self.n,
            "pi_inv": self.pi_inv,
            "clamp": self.clamp_bound,
            "fallback": self.fallback,
            "cells": [
                {
                    "j": self.j,
                    "m": [int(v) for v in self.cells[i]],
                    "alpha": [float(a) for a in self.alpha[i]],
                    "lambda_min": float(self.lambda_min[i]),
                    "valid": bool(self.valid[i]),
                    "n_points": int(self.n_points[i]),
                }
                for i in range(self.n_regressions)
            ],
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data, basis):
        if basis.r != data["r"]:
            raise ValueError(f"table was fitted with r={data['r']}, basis has r={basis.r}")
        cells = data["cells"]
        d = data["d"]
        p = basis.R ** d
        return cls(
            basis,
            data["j"],
            data["n"],
            np.array([c["m"] for c in cells], dtype=np.int64).reshape(len(cells), d),
            np.array([c["alpha"] for c in cells], dtype=float).reshape(len(cells), p),
            np.array([c["lambda_min"] for c in cells], dtype=float),
            np.array([c["n_points"] for c in cells], dtype=np.int64),
            np.array([c["valid"] for c in cells], dtype=bool),
            data["pi_inv"],
            data.get("clamp"),
            data.get("fallback", "zero"),
        )

    @classmethod
    def from_json(cls, text, basis):
        return cls.from_dict(json.loads(text), basis)


def fit_level(sample, j, basis, pi_inv=0.0, clamp_bound=None, fallback="zero"):
    """
    Fit every occupied cell of level ``j`` in one pass.

    Each design point contributes only to its own cell's Gram matrix, so the
    cost is ``O(n (2r-1)**(2d))`` plus one small eigensolve per cell.

    Parameters
    ----------
    sample : DesignSample
    j : int
    basis : ScalingBasis
    pi_inv : float
        Eigenvalue threshold; the default 0 keeps every nonsingular fit, which
        is the starting point for :meth:`CellFitTable.rethreshold`.
    """
    if sample.Y is None:
        raise ValueError("sample has no responses")
    occ = occupancy(sample, j)
    d = sample.d
    p = basis.R ** d
    if len(occ) == 0:
        empty = np.zeros((0, p))
        return CellFitTable(basis, j, sample.n, np.zeros((0, d), dtype=np.int64), empty,
                            np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool),
                            pi_inv, clamp_bound, fallback,
                            (np.zeros((0, p)), np.zeros((0, p, p)), np.zeros((0, p))))
    order = np.concatenate(occ.rows)
    counts = np.array([len(r) for r in occ.rows], dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    owner = np.repeat(np.arange(len(counts)), counts)
    X = sample.X[order]
    B = design_matrix(basis, j, occ.cells[owner], X)
    n = sample.n
    Q = np.add.reduceat(B[:, :, None] * B[:, None, :], starts, axis=0) / n
    Q = 0.5 * (Q + np.swapaxes(Q, 1, 2))
    b = np.add.reduceat(B * sample.Y[order][:, None], starts, axis=0) / n
    w, V = _eigh(Q)
    alpha, valid = _spectral_solve(w, V, b, pi_inv)
    lam = np.where(w[:, 0] > _singular_tol(w), w[:, 0], 0.0)
    return CellFitTable(basis, j, n, occ.cells, alpha, lam, counts, valid, pi_inv,
                        clamp_bound, fallback, (w, V, b))


def estimate(sample, j, basis, config):
    """
    Fixed-level estimator ``eta_j``: one thresholded fit per occupied cell.

    Returns
    -------
    CellFitTable
        Callable on points; ``n_regressions`` equals the number of occupied
        cells.
    """
    policy = config.policy
    table = fit_level(sample, j, basis, 0.0, policy.clamp, config.fallback)
    if policy.variant == "empirical-decile":
        pi_inv = policy.pi_inv(lambdas=table.lambda_min)
    else:
        pi_inv = policy.pi_inv(n=sample.n)
    return table.rethreshold(pi_inv)
