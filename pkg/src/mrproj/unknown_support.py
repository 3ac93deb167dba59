"""
Moving-grid estimator for a design whose support is unknown.

The ``2n`` sample is split in two.  The anchor half only locates the
support: a query point ``x`` is served by an anchor point within
``l_inf`` distance ``2**-j-1``, and the fit half is regressed on the cube of
side ``2**-j`` centred at that anchor.  Fits are cached per anchor, so at most
one regression per anchor point is ever performed whatever the number of
queries.
"""
import threading
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .adapt import lepski_select
from .exceptions import ConfigurationError
from .lattice import CellIndex, DesignSample, shift
from .regress import LocalFit, _eigh, _points, _singular_tol, _spectral_solve, clamp
from .scaling import design_matrix

__all__ = [
    "SplitSample",
    "AnchorCache",
    "MalteseEstimator",
    "split",
    "find_anchor",
    "maltese_estimate",
    "maltese_adaptive",
    "coverage_diagnostic",
]


@dataclass(frozen=True)
class SplitSample:
    """Disjoint halves of a ``2n`` sample: regressions use ``fit_half`` only."""

    fit_half: DesignSample
    anchor_half: DesignSample
    fit_index: np.ndarray = None
    anchor_index: np.ndarray = None

    @property
    def n(self):
        return self.fit_half.n


def split(sample, seed=None):
    """
    Random equipartition of ``sample`` (seed-deterministic).

    Raises
    ------
    ValueError
        If the sample size is odd.
    """
    if sample.n % 2:
        raise ValueError(f"sample size must be even to split, got {sample.n}")
    perm = np.random.default_rng(seed).permutation(sample.n)
    half = sample.n // 2
    a, b = np.sort(perm[:half]), np.sort(perm[half:])
    return SplitSample(sample.subset(a), sample.subset(b), a, b)


def _anchor_tree(anchor_half):
    return cKDTree(anchor_half.X) if anchor_half.n else None


class AnchorCache:
    """
    Local systems of the shifted cell, keyed by anchor index.

    Entries hold the eigen-decomposition of the Gram matrix and the moment
    vector so that any threshold can be applied afterwards.  Filling is
    guarded by a lock: every anchor is fitted at most once.
    """

    def __init__(self, j):
        self.j = int(j)
        self._entries = {}
        self._lock = threading.Lock()
        self.n_regressions = 0

    def __contains__(self, idx):
        return idx in self._entries

    def __len__(self):
        return len(self._entries)

    def __getitem__(self, idx):
        return self._entries[idx]

    def keys(self):
        return self._entries.keys()

    def lambdas(self):
        return np.array([e[3] for e in self._entries.values()])

    def fill(self, anchors, split_sample, basis):
        """Fit every anchor index in ``anchors`` not yet cached."""
        with self._lock:
            todo = sorted({int(a) for a in anchors} - set(self._entries))
            if not todo:
                return
            for idx, entry in zip(todo, _fit_anchors(todo, self.j, split_sample, basis)):
                self._entries[idx] = entry
            self.n_regressions += len(todo)


def _fit_anchors(anchors, j, split_sample, basis):
    """Eigen-systems of the shifted-cell regressions for the given anchors."""
    fit = split_sample.fit_half
    n, d = fit.n, fit.d
    p = basis.R**d
    half = 2.0 ** (-j - 1)
    side = 2.0**-j
    centres = split_sample.anchor_half.X[np.asarray(anchors)]
    tree = cKDTree(fit.X)
    near = tree.query_ball_point(centres, half, p=np.inf)
    rows, owners = [], []
    for a, idx in enumerate(near):
        idx = np.asarray(sorted(idx), dtype=np.int64)
        if idx.size:
            xt = shift(fit.X[idx], centres[a], j)
            # half-open cube, as for the fixed lattice
            keep = np.all((xt >= 0.0) & (xt < side), axis=1)
            idx = idx[keep]
        rows.append(idx)
        owners.append(np.full(idx.size, a))
    counts = np.array([r.size for r in rows])
    Q = np.zeros((len(anchors), p, p))
    b = np.zeros((len(anchors), p))
    if counts.sum():
        allidx = np.concatenate(rows)
        owner = np.concatenate(owners)
        xt = shift(fit.X[allidx], centres[owner], j)
        B = design_matrix(basis, j, np.zeros((len(allidx), d), dtype=np.int64), xt)
        np.add.at(Q, owner, B[:, :, None] * B[:, None, :])
        np.add.at(b, owner, B * fit.Y[allidx][:, None])
        Q /= n
        b /= n
        Q = 0.5 * (Q + np.swapaxes(Q, 1, 2))
    w, V = _eigh(Q)
    lam = np.where(w[:, 0] > _singular_tol(w), w[:, 0], 0.0)
    return [(w[i], V[i], b[i], float(lam[i]), int(counts[i])) for i in range(len(anchors))]


def _select_anchors(x, j, anchor_half, cache, tree=None):
    """
    Anchor index per query point, -1 where none lies in the cube around it.

    Cached anchors win.  While some query has candidates but no cached one,
    the nearest anchor of the first such query (in order) joins the cache.
    Each query then takes its nearest cached anchor.
    """
    x = _points(x, anchor_half.d)
    out = np.full(len(x), -1, dtype=np.int64)
    if anchor_half.n == 0 or len(x) == 0:
        return out
    tree = tree or _anchor_tree(anchor_half)
    # closed ball; a tiny slack keeps the boundary inclusive after rounding
    radius = 2.0 ** (-j - 1) * (1 + 1e-12)
    _, nearest = tree.query(x, k=1, p=np.inf, distance_upper_bound=radius)
    has = nearest < anchor_half.n
    chosen = sorted(cache.keys()) if cache is not None else []
    pending = has.copy()
    if chosen:
        d0, _ = cKDTree(anchor_half.X[chosen]).query(x, k=1, p=np.inf, distance_upper_bound=radius)
        pending &= ~np.isfinite(d0)
    while pending.any():
        a = int(nearest[np.argmax(pending)])
        chosen.append(a)
        pending &= np.max(np.abs(x - anchor_half.X[a]), axis=1) > radius
    if not chosen:
        return out
    chosen = np.array(sorted(set(chosen)), dtype=np.int64)
    _, k = cKDTree(anchor_half.X[chosen]).query(x[has], k=1, p=np.inf, distance_upper_bound=radius)
    out[has] = chosen[k]
    return out


def find_anchor(x, j, anchor_half, cache=None):
    """
    Anchor point for ``x`` at level ``j``.

    Among anchor points in ``x - 2**(-j-1) + 2**-j [0, 1]**d`` a cached one is
    preferred, otherwise the nearest (``l_inf``).

    Returns
    -------
    ndarray or None
        The anchor point, or None if the cube holds no anchor point.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    idx = _select_anchors(x[None, :], j, anchor_half, cache)[0]
    return None if idx < 0 else anchor_half.X[idx].copy()


class MalteseEstimator:
    """
    Moving-grid estimator at level ``j``.

    Parameters
    ----------
    split_sample : SplitSample
    j : int
    basis : ScalingBasis
    policy : ThresholdPolicy
        ``theory`` and ``density-floor`` fix the threshold up front.  The
        empirical rule uses the decile of the smallest eigenvalues of all
        anchors fitted so far, refreshed on each call.
    pi_inv : float, optional
        Explicit threshold, overriding the policy.
    fallback_value : float
        Value for points whose anchored fit is invalid.
    cache : AnchorCache, optional
        Shared cache; a fresh one by default.
    """

    def __init__(self, split_sample, j, basis, policy, pi_inv=None, fallback_value=0.0, cache=None):
        self.split = split_sample
        self.j = int(j)
        self.basis = basis
        self.policy = policy
        self._pi_inv = pi_inv
        if pi_inv is None and policy.variant != "empirical-decile":
            self._pi_inv = policy.pi_inv(n=split_sample.n)
        if self._pi_inv is not None and self._pi_inv > 1:
            raise ConfigurationError("threshold 1/pi_n must not exceed 1")
        self.fallback_value = float(fallback_value)
        self.cache = cache if cache is not None else AnchorCache(j)
        if self.cache.j != self.j:
            raise ValueError("cache level differs from estimator level")
        self._tree = _anchor_tree(split_sample.anchor_half)

    @property
    def n_regressions(self):
        return self.cache.n_regressions

    @property
    def pi_inv(self):
        if self._pi_inv is not None:
            return self._pi_inv
        lam = self.cache.lambdas()
        return self.policy.pi_inv(lambdas=lam) if lam.size else None

    def anchors(self, x):
        return _select_anchors(x, self.j, self.split.anchor_half, self.cache, self._tree)

    def evaluate(self, x):
        """
        Returns
        -------
        values : ndarray
        valid : ndarray of bool
            False where no anchor was found or its fit is invalid.
        anchors : ndarray of int
            Anchor index per point, -1 when none.
        """
        x = _points(x, self.split.fit_half.d)
        idx = self.anchors(x)
        has = idx >= 0
        self.cache.fill(np.unique(idx[has]), self.split, self.basis)
        values = np.zeros(len(x))
        valid = np.zeros(len(x), dtype=bool)
        if not has.any():
            return values, valid, idx
        pi_inv = self.pi_inv
        uniq, inv = np.unique(idx[has], return_inverse=True)
        w = np.stack([self.cache[u][0] for u in uniq])
        V = np.stack([self.cache[u][1] for u in uniq])
        b = np.stack([self.cache[u][2] for u in uniq])
        alpha, ok = _spectral_solve(w, V, b, pi_inv)
        anchors = self.split.anchor_half.X[idx[has]]
        xt = shift(x[has], anchors, self.j)
        rows = design_matrix(self.basis, self.j, np.zeros(xt.shape, dtype=np.int64), xt)
        v = np.einsum("ij,ij->i", rows, alpha[inv])
        okp = ok[inv]
        values[has] = np.where(okp, v, self.fallback_value)
        values[~has] = 0.0
        valid[has] = okp
        return values, valid, idx

    def __call__(self, x, clamp_bound=None):
        bound = clamp_bound if clamp_bound is not None else self.policy.clamp
        return clamp(self.evaluate(x)[0], bound)

    def local_fit(self, anchor_idx):
        """The cached fit of one anchor under the current threshold."""
        w, V, b, lam, npts = self.cache[anchor_idx]
        alpha, valid = _spectral_solve(w, V, b, self.pi_inv)
        d = self.split.fit_half.d
        return LocalFit(CellIndex(self.j, (0,) * d), alpha, lam, npts, bool(valid))


def maltese_estimate(x, j, split_sample, basis, policy, cache=None, pi_inv=None):
    """
    Value of the moving-grid estimator at a single point ``x``.

    Returns 0 when no anchor point lies in the cube around ``x``; reuse
    ``cache`` across calls to share regressions.
    """
    cache = cache if cache is not None else AnchorCache(j)
    est = MalteseEstimator(split_sample, j, basis, policy, pi_inv, cache=cache)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(est(x[None, :])[0])


def maltese_adaptive(x, split_sample, grid, basis, policy, pi_inv=None, clamp_bound=None):
    """
    Lepski-selected moving-grid estimate over the levels of ``grid``.

    Only levels with a valid anchored fit at a point take part in the
    comparisons there.

    Returns
    -------
    values : ndarray
    levels : ndarray of int
    estimators : dict of int -> MalteseEstimator
    """
    x = _points(x, split_sample.fit_half.d)
    ests, vals, oks = {}, [], []
    for j in grid.levels:
        ests[j] = MalteseEstimator(split_sample, j, basis, policy, pi_inv)
        v, ok, _ = ests[j].evaluate(x)
        vals.append(v)
        oks.append(ok)
    vals, oks = np.vstack(vals), np.vstack(oks)
    chosen = lepski_select(vals, grid, valid=oks)
    cols = np.arange(len(x))
    rows = chosen - grid.j_low
    ok_at = oks[rows, cols]
    out = np.where(ok_at, vals[rows, cols], 0.0)
    levels = np.where(ok_at, chosen, grid.j_low)
    bound = clamp_bound if clamp_bound is not None else policy.clamp
    return clamp(out, bound), levels, ests


def coverage_diagnostic(anchor_half, j, probe_sampler, m, rng=None):
    """
    Fraction of ``m`` probes that find an anchor point at level ``j``.

    Parameters
    ----------
    anchor_half : DesignSample
    j : int
    probe_sampler : callable ``(m, rng) -> ndarray``
        Draws probes from the design distribution.
    m : int
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if anchor_half.n == 0:
        return 0.0
    probes = _points(probe_sampler(m, np.random.default_rng(rng)), anchor_half.d)
    tree = _anchor_tree(anchor_half)
    dist, _ = tree.query(probes, k=1, p=np.inf)
    return float(np.mean(dist <= 2.0 ** (-j - 1) * (1 + 1e-12)))
