"""
Resolution ranges and pointwise Lepski selection of the level.

The adaptive estimate at ``x`` uses the coarsest level whose value agrees
with every finer level up to ``g(j, k) = (2**(jd/2) + 2**(kd/2)) t_n / sqrt(n)``.
All comparisons reuse the per-level fit tables; nothing is refitted.
"""
import csv
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError
from .regress import _points, clamp, fit_level

__all__ = [
    "ResolutionGrid",
    "resolution_grid",
    "practical_max_level",
    "lepski_threshold",
    "lepski_select",
    "AdaptiveEstimate",
    "adaptive_estimate",
    "fit_all_levels",
    "single_level_grid",
    "lepski_scale",
]


@dataclass(frozen=True)
class ResolutionGrid:
    """Levels ``j_low..J`` with the Lepski scale ``t_n``."""

    j_low: int
    J: int
    t_n: float
    n: int
    d: int = 1
    kappa: float = 1.0
    pi_n: float = 1.0

    def __post_init__(self):
        if self.J < self.j_low:
            raise ConfigurationError(f"empty resolution range: J={self.J} < j_low={self.j_low}")

    @property
    def levels(self):
        return list(range(self.j_low, self.J + 1))

    def __contains__(self, j):
        return self.j_low <= j <= self.J

    def __len__(self):
        return self.J - self.j_low + 1

    def with_scale(self, kappa=None, pi_n=None):
        """Same levels, Lepski scale recomputed from ``kappa`` and ``pi_n``."""
        kappa = self.kappa if kappa is None else kappa
        pi_n = self.pi_n if pi_n is None else pi_n
        return ResolutionGrid(self.j_low, self.J, lepski_scale(self.n, kappa, pi_n),
                              self.n, self.d, kappa, pi_n)


def lepski_scale(n, kappa, pi_n):
    """``t_n = sqrt(kappa pi_n**2 log n)``."""
    return math.sqrt(kappa * pi_n**2 * math.log(n))


def _log2_floor(v):
    v = int(v)
    if v < 1:
        return None
    return v.bit_length() - 1


def practical_max_level(n):
    """
    Finest level of the simulation protocol, ``ceil(log2(n / log10 n))``.

    Gives 10 for the roughly 2850 deduplicated points of the benchmark runs.
    """
    return int(math.ceil(math.log2(n / math.log10(n))))


def resolution_grid(n, d, r, kappa=1.0, pi_n=None, mode="known-r", s=None,
                    rule="theory", j_low=None):
    """
    Build the range of candidate levels.

    Parameters
    ----------
    n : int
        Sample size, at least 3.
    d, r : int
    kappa : float
        Lepski constant.
    pi_n : float, optional
        Defaults to ``log n``.
    mode : {'known-r', 'known-s'}
        Lowest level from ``2**j_r = floor(n**(1/(2r+d)))`` or, given ``s``,
        ``2**j_s = floor(n**(1/(2s+d)))``.
    rule : {'theory', 'practical'}
        ``theory``: ``2**(Jd) = floor(n / t_n**2)``; ``practical``:
        :func:`practical_max_level`.
    j_low : int, optional
        Overrides the lowest level (the simulation protocol uses 3).
    """
    if n < 3:
        raise ConfigurationError("n must be >= 3 so that log n > 1")
    if not kappa > 0:
        raise ConfigurationError("kappa must be > 0")
    if pi_n is None:
        pi_n = math.log(n)
    t_n = lepski_scale(n, kappa, pi_n)
    if j_low is None:
        if mode == "known-r":
            expo = 1.0 / (2 * r + d)
        elif mode == "known-s":
            if s is None or not s > 0:
                raise ConfigurationError("known-s mode needs a smoothness s > 0")
            expo = 1.0 / (2 * s + d)
        else:
            raise ConfigurationError(f"unknown mode {mode!r}")
        j_low = _log2_floor(math.floor(n**expo))
        if j_low is None:
            raise ConfigurationError("n too small for any level")
    if rule == "theory":
        cap = math.floor(n / t_n**2)
        top = _log2_floor(cap)
        if top is None:
            raise ConfigurationError(
                f"n / t_n^2 = {n / t_n**2:.4g} < 1 with kappa={kappa}, pi_n={pi_n:.4g}: no level satisfies 2^(Jd) <= n t_n^-2")
        J = top // d
    elif rule == "practical":
        J = practical_max_level(n)
    else:
        raise ConfigurationError(f"unknown rule {rule!r}")
    if J < j_low:
        raise ConfigurationError(
            f"J={J} < j_low={j_low}: need 2^(Jd) <= n t_n^-2 = {n / t_n**2:.4g} with J >= j_low "
            f"(n={n}, kappa={kappa}, pi_n={pi_n:.4g})")
    return ResolutionGrid(int(j_low), int(J), t_n, int(n), d, kappa, pi_n)


def lepski_threshold(j, k, grid):
    """``g(j, k) = (2**(jd/2) + 2**(kd/2)) t_n / sqrt(n)``."""
    d = grid.d
    return (2.0 ** (j * d / 2.0) + 2.0 ** (k * d / 2.0)) * grid.t_n / math.sqrt(grid.n)


def lepski_select(values, grid, valid=None):
    """
    Adaptive level at each point.

    Parameters
    ----------
    values : mapping level -> array, or ndarray of shape (len(grid), q)
        ``eta_j(x)`` for every level of the grid (rows in increasing ``j``).
    grid : ResolutionGrid
    valid : ndarray of bool, same shape as ``values``, optional
        When given, only levels holding a valid fit at a point take part in
        the comparisons there, and the fallback for an empty candidate set is
        the finest valid level instead of ``J``.

    Returns
    -------
    ndarray of int, shape (q,)
        Smallest ``j`` with ``|eta_j - eta_k| <= g(j, k)`` for all finer
        ``k``; ``J`` when no level qualifies.
    """
    levels = grid.levels
    if isinstance(values, dict):
        values = np.vstack([np.atleast_1d(values[j]) for j in levels])
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if valid is None:
        valid = np.ones(values.shape, dtype=bool)
    else:
        valid = np.asarray(valid, dtype=bool).reshape(values.shape)
    q = values.shape[1]
    chosen = np.full(q, grid.J, dtype=np.int64)
    open_ = np.ones(q, dtype=bool)
    for a, j in enumerate(levels):
        ok = open_ & valid[a]
        for b in range(a + 1, len(levels)):
            gap = np.abs(values[a] - values[b]) <= lepski_threshold(j, levels[b], grid)
            ok &= gap | ~valid[b]
        chosen[ok] = j
        open_ &= ~ok
        if not open_.any():
            break
    return chosen


class AdaptiveEstimate:
    """
    Pointwise-adaptive estimator over a family of per-level tables.

    Attributes
    ----------
    tables : dict of int -> CellFitTable
    grid : ResolutionGrid
    fallback : str
        ``'demote-level'`` replaces invalid fits by a valid level; see
        ``selection``.
    selection : {'valid-only', 'demote-after'}
        How ``'demote-level'`` works.  ``valid-only``: levels without a valid
        fit at ``x`` neither compete nor constrain the comparisons.
        ``demote-after``: select among all levels with invalid fits read as
        0, then walk down from the selected level to the first valid one.
    """

    def __init__(self, tables, grid, fallback="zero", clamp_bound=None, selection="valid-only"):
        if selection not in ("valid-only", "demote-after"):
            raise ValueError(f"unknown selection mode {selection!r}")
        self.tables = tables
        self.grid = grid
        self.fallback = fallback
        self.clamp_bound = clamp_bound
        self.selection = selection

    @property
    def d(self):
        return next(iter(self.tables.values())).d

    @property
    def pi_inv(self):
        return next(iter(self.tables.values())).pi_inv

    def level_values(self, x):
        """``(levels x points)`` array of per-level values and validity."""
        vals, oks = [], []
        for j in self.grid.levels:
            t = self.tables[j]
            v, ok = t.raw(x)
            if self.fallback == "neighbor-average":
                v = t(x)
            vals.append(v)
            oks.append(ok)
        return np.vstack(vals), np.vstack(oks)

    def evaluate(self, x):
        """
        Returns
        -------
        values : ndarray
        levels : ndarray of int
            Level whose fit produced each value.
        """
        x = _points(x, self.d)
        vals, oks = self.level_values(x)
        cols = np.arange(len(x))
        if self.fallback == "demote-level" and self.selection == "valid-only":
            # with no valid level at all the value is 0, reported at j_low
            chosen = lepski_select(vals, self.grid, valid=oks)
            rows = chosen - self.grid.j_low
            ok_at = oks[rows, cols]
            out = np.where(ok_at, vals[rows, cols], 0.0)
            levels = np.where(ok_at, chosen, self.grid.j_low)
        elif self.fallback == "demote-level":
            rows = lepski_select(vals, self.grid) - self.grid.j_low
            ok_at = oks[rows, cols]
            while not ok_at.all():
                step = ~ok_at & (rows > 0)
                if not step.any():
                    break
                rows[step] -= 1
                ok_at = oks[rows, cols]
            out = np.where(ok_at, vals[rows, cols], 0.0)
            levels = rows + self.grid.j_low
        else:
            chosen = lepski_select(vals, self.grid)
            out = vals[chosen - self.grid.j_low, cols]
            levels = chosen
        return clamp(out, self.clamp_bound), levels

    def __call__(self, x):
        return self.evaluate(x)[0]

    def levels(self, x):
        return self.evaluate(x)[1]

    @property
    def regression_counts(self):
        return {j: t.n_regressions for j, t in self.tables.items()}

    def write_level_map(self, path, x):
        """CSV of ``x1..xd, j_at`` at the given points."""
        x = _points(x, self.d)
        lv = self.levels(x)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(x.shape[1])] + ["j_at"])
            for row, j in zip(x, lv):
                w.writerow([repr(float(v)) for v in row] + [int(j)])


def fit_all_levels(sample, levels, basis, config):
    """
    Per-level tables sharing one threshold.

    The empirical rule pools the smallest eigenvalues of every cell of every
    level before thresholding.

    Returns
    -------
    tables : dict of int -> CellFitTable
    pi_inv : float
    """
    policy = config.policy
    raw = {j: fit_level(sample, j, basis, 0.0, policy.clamp, config.fallback) for j in levels}
    if policy.variant == "empirical-decile":
        pooled = np.concatenate([t.lambda_min for t in raw.values()])
        pi_inv = policy.pi_inv(lambdas=pooled)
    else:
        pi_inv = policy.pi_inv(n=sample.n)
    return {j: t.rethreshold(pi_inv) for j, t in raw.items()}, pi_inv


def adaptive_estimate(sample, grid, basis, config, scale_with_threshold=False,
                      selection="valid-only"):
    """
    Lepski-adaptive estimator over ``grid``.

    Parameters
    ----------
    sample : DesignSample
    grid : ResolutionGrid
    basis : ScalingBasis
    config : EstimatorConfig
    scale_with_threshold : bool
        Recompute ``t_n`` with ``pi_n = 1 / threshold`` and ``config.kappa``
        once the threshold is known.
    selection : str
        See :class:`AdaptiveEstimate`.

    Returns
    -------
    AdaptiveEstimate
    """
    tables, pi_inv = fit_all_levels(sample, grid.levels, basis, config)
    if scale_with_threshold:
        if pi_inv <= 0:
            raise ConfigurationError("threshold is 0; pi_n = 1/threshold is undefined")
        grid = grid.with_scale(kappa=config.kappa, pi_n=1.0 / pi_inv)
    return AdaptiveEstimate(tables, grid, config.fallback, config.policy.clamp, selection)


def single_level_grid(j, n, d=1, t_n=1.0):
    return ResolutionGrid(j, j, t_n, n, d)

