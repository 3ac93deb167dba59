"""
Benchmark-signal study of the adaptive estimator on a random design.

One study draws a piecewise-constant design density, then repeats: sample
3000 points, snap them to the ``2**-15`` grid keeping one point per node, add
Gaussian noise to the SNR-scaled signal, fit every level, choose the
eigenvalue threshold as the first decile of all smallest Gram eigenvalues,
and evaluate the Lepski estimate at the sample points.
"""
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .adapt import AdaptiveEstimate, ResolutionGrid, lepski_scale, practical_max_level
from .exceptions import ConfigurationError
from .io import atomic_write, csv_text
from .lattice import DesignSample
from .regress import EstimatorConfig, ThresholdPolicy, fit_level
from .scaling import build_basis
from .signals import benchmark_signal

__all__ = [
    "PiecewiseDensity",
    "TrialReport",
    "StudyConfig",
    "StudyResult",
    "random_density",
    "sample_design",
    "dyadic_grid",
    "scale_snr",
    "empirical_pi_n",
    "run_trial",
    "run_study",
    "write_study",
    "lpe_baseline",
    "trial_seed",
]


@dataclass(frozen=True)
class PiecewiseDensity:
    """Density ``sum_k p_k 10 1{A_k}`` with ``A_k = [k/10, (k+1)/10]``."""

    p: np.ndarray

    @property
    def n_segments(self):
        return len(self.p)

    @property
    def lower_bound(self):
        return float(self.n_segments * np.min(self.p))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        k = np.clip(np.floor(x * self.n_segments).astype(int), 0, self.n_segments - 1)
        inside = (x >= 0) & (x <= 1)
        return np.where(inside, self.n_segments * self.p[k], 0.0)

    def sample(self, n, rng):
        k = rng.choice(self.n_segments, size=n, p=self.p)
        return (k + rng.random(n)) / self.n_segments


def random_density(rng, n_segments=10, low=0.25):
    """``u_k ~ U[low, 1]`` i.i.d., ``p_k = u_k / sum(u)``."""
    rng = np.random.default_rng(rng)
    u = rng.uniform(low, 1.0, n_segments)
    return PiecewiseDensity(u / u.sum())


def dyadic_grid(grid_exp=15):
    """Nodes ``k 2**-grid_exp``, ``k = 0..2**grid_exp``."""
    return np.arange(2**grid_exp + 1) / 2.0**grid_exp


def sample_design(density, n_raw=3000, grid_exp=15, rng=None):
    """
    Draw ``n_raw`` points, snap to the nearest grid node, keep the first
    point per node.

    Returns
    -------
    DesignSample
        Design only (no responses); ``n`` is the effective sample size.
    """
    rng = np.random.default_rng(rng)
    x = density.sample(n_raw, rng)
    snapped = np.round(x * 2.0**grid_exp) / 2.0**grid_exp
    _, first = np.unique(snapped, return_index=True)
    return DesignSample(snapped[np.sort(first)])


def scale_snr(signal, grid_exp=15, sigma=1.0, snr=7.0):
    """
    Rescale ``signal`` so that its RMSE on the dyadic grid is ``snr * sigma``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    g = dyadic_grid(grid_exp)
    rms = float(np.sqrt(np.mean(np.asarray(signal(g), dtype=float) ** 2)))
    if rms == 0:
        raise ValueError("signal has zero RMSE on the grid and cannot be rescaled")
    return signal.rescaled(snr * sigma / rms)


def empirical_pi_n(tables, decile=0.1):
    """
    First-decile threshold over the smallest eigenvalues of all tables.

    Uses linear interpolation between order statistics.
    """
    tables = tables.values() if isinstance(tables, dict) else tables
    lam = [t.lambda_min for t in tables]
    pooled = np.concatenate(lam) if lam else np.zeros(0)
    if pooled.size == 0:
        raise ConfigurationError("no eigenvalues to take a decile of")
    return float(np.quantile(pooled, decile))


@dataclass
class TrialReport:
    signal: str
    trial: int
    seed: list
    n_effective: int
    rel_rmse: float
    pi_inv: float
    level_histogram: dict
    regression_counts: dict
    fixed_level_rel_rmse: dict
    seconds: float = 0.0

    def deterministic(self):
        """All fields except the wall time."""
        d = asdict(self)
        d.pop("seconds")
        return d


@dataclass(frozen=True)
class StudyConfig:
    """
    Parameters of the benchmark study.

    ``kappa`` sets ``t_n = sqrt(kappa log(n)**3)`` (``pi_n = log n`` in the
    Lepski scale) while the fit threshold follows ``policy``.
    """

    r: int = 3
    j_low: int = 3
    J: int = None
    n_raw: int = 3000
    grid_exp: int = 15
    snr: float = 7.0
    sigma: float = 1.0
    kappa: float = 0.05
    decile: float = 0.1
    fallback: str = "demote-level"
    selection: str = "valid-only"
    table_depth: int = 12

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigurationError("sigma must be >= 0")
        if not self.kappa > 0:
            raise ConfigurationError("kappa must be > 0")
        if self.n_raw < 3:
            raise ConfigurationError("n_raw must be >= 3")

    def estimator_config(self):
        return EstimatorConfig(self.r, 1, ThresholdPolicy("empirical-decile", decile=self.decile),
                               self.kappa, self.fallback)


def trial_seed(seed, trial):
    """Independent stream for ``trial`` of a study seeded with ``seed``."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(trial + 1,))


def _rel_rmse(est, truth, amplitude):
    return float(np.sqrt(np.mean((est - truth) ** 2)) / amplitude)


def run_trial(signal, density, config, seed, trial=0, basis=None, keep_points=False):
    """
    One replication of the study.

    Parameters
    ----------
    signal : SignalSpec
        Already scaled to the target SNR.
    density : PiecewiseDensity
    config : StudyConfig
    seed : int
        Study seed; the trial stream is derived from ``(seed, trial)``.

    Returns
    -------
    report : TrialReport
    points : dict of arrays or None
        ``x, y_true, y_noisy, eta_hat, j_at`` when ``keep_points``.
    """
    t0 = time.perf_counter()
    basis = basis or build_basis(config.r, config.table_depth)
    rng = np.random.default_rng(trial_seed(seed, trial))
    design = sample_design(density, config.n_raw, config.grid_exp, rng)
    x = design.X[:, 0]
    n = design.n
    y_true = signal(x)
    y = y_true + config.sigma * rng.standard_normal(n)
    sample = design.with_responses(y)
    J = config.J if config.J is not None else practical_max_level(n)
    if J < config.j_low:
        raise ConfigurationError(f"J={J} < j_low={config.j_low} for n={n}")
    levels = list(range(config.j_low, J + 1))
    raw = {j: fit_level(sample, j, basis) for j in levels}
    pi_inv = min(empirical_pi_n(raw, config.decile), 1.0)
    tables = {j: t.rethreshold(pi_inv).with_options(fallback=config.fallback) for j, t in raw.items()}
    grid = ResolutionGrid(config.j_low, J, lepski_scale(n, config.kappa, math.log(n)), n, 1,
                          config.kappa, math.log(n))
    est = AdaptiveEstimate(tables, grid, config.fallback, None, config.selection)
    eta_hat, j_at = est.evaluate(x)
    amplitude = float(np.max(np.abs(signal(dyadic_grid(config.grid_exp)))))
    fixed = {}
    for j, t in tables.items():
        v, _ = t.raw(x)
        fixed[j] = _rel_rmse(v, y_true, amplitude)
    hist = {int(j): int(c) for j, c in zip(*np.unique(j_at, return_counts=True))}
    report = TrialReport(
        signal=signal.name,
        trial=int(trial),
        seed=[int(seed), int(trial)],
        n_effective=int(n),
        rel_rmse=_rel_rmse(eta_hat, y_true, amplitude),
        pi_inv=float(pi_inv),
        level_histogram=hist,
        regression_counts={int(j): int(t.n_regressions) for j, t in tables.items()},
        fixed_level_rel_rmse={int(j): v for j, v in fixed.items()},
        seconds=time.perf_counter() - t0,
    )
    points = None
    if keep_points:
        points = {"x": x, "y_true": y_true, "y_noisy": y, "eta_hat": eta_hat, "j_at": j_at}
    return report, points


@dataclass
class StudyResult:
    signal: str
    seed: int
    config: StudyConfig
    density: PiecewiseDensity
    trials: list
    median_trial: int
    median_points: dict = field(repr=False, default=None)

    @property
    def median_rel_rmse(self):
        return float(np.median([t.rel_rmse for t in self.trials]))

    def fixed_level_medians(self):
        levels = sorted(set().union(*[t.fixed_level_rel_rmse for t in self.trials]))
        return {j: float(np.median([t.fixed_level_rel_rmse[j] for t in self.trials
                                    if j in t.fixed_level_rel_rmse])) for j in levels}

    def summary(self):
        fixed = self.fixed_level_medians()
        best = min(fixed, key=fixed.get)
        med = self.trials[self.median_trial]
        return {
            "signal": self.signal,
            "seed": self.seed,
            "reps": len(self.trials),
            "config": asdict(self.config),
            "density_p": [float(v) for v in self.density.p],
            "median_rel_rmse": self.median_rel_rmse,
            "median_trial": self.median_trial,
            "median_trial_report": med.deterministic(),
            "fixed_level_median_rel_rmse": {str(j): v for j, v in fixed.items()},
            "best_fixed_level": int(best),
            "best_fixed_median_rel_rmse": fixed[best],
        }


def run_study(signal, reps=100, config=None, seed=0, threads=1, keep_median_points=True):
    """
    Repeat :func:`run_trial` ``reps`` times under one random design density.

    Parameters
    ----------
    signal : str or SignalSpec
        Unscaled signal; it is rescaled to ``config.snr``.
    reps : int
    config : StudyConfig, optional
    seed : int
    threads : int
        Trials run concurrently on this many threads; results do not depend
        on it.

    Returns
    -------
    StudyResult
    """
    config = config or StudyConfig()
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if isinstance(signal, str):
        signal = benchmark_signal(signal)
    scaled = scale_snr(signal, config.grid_exp, 1.0, config.snr)
    density = random_density(np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,))))
    basis = build_basis(config.r, config.table_depth)

    def job(i):
        return run_trial(scaled, density, config, seed, i, basis)[0]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trials = list(pool.map(job, range(reps)))
    else:
        trials = [job(i) for i in range(reps)]
    scores = np.array([t.rel_rmse for t in trials])
    # the trial closest to the median (lower middle for even reps)
    median_idx = int(np.argsort(scores, kind="stable")[(reps - 1) // 2])
    points = None
    if keep_median_points:
        points = run_trial(scaled, density, config, seed, median_idx, basis, keep_points=True)[1]
    return StudyResult(scaled.name, seed, config, density, trials, median_idx, points)


def write_study(result, out_dir, timing=True):
    """
    Write ``trials.csv``, ``median_points.csv`` and ``summary.json``.

    With ``timing=False`` the ``seconds`` column is written as 0 so reruns are
    byte-identical.
    """
    os.makedirs(out_dir, exist_ok=True)
    rows = [[t.trial, t.n_effective, t.rel_rmse, t.seconds if timing else 0.0,
             sum(t.regression_counts.values())] for t in result.trials]
    atomic_write(os.path.join(out_dir, "trials.csv"),
                 csv_text(["trial", "n_effective", "rel_rmse", "seconds", "regressions_total"], rows))
    if result.median_points is not None:
        p = result.median_points
        prow = zip(p["x"], p["y_true"], p["y_noisy"], p["eta_hat"], p["j_at"].astype(np.int64))
        atomic_write(os.path.join(out_dir, "median_points.csv"),
                     csv_text(["x", "y_true", "y_noisy", "eta_hat", "j_at"], prow))
    atomic_write(os.path.join(out_dir, "summary.json"),
                 json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")


def _monomial_exponents(d, degree):
    import itertools

    return [e for e in itertools.product(range(degree + 1), repeat=d) if sum(e) <= degree]


def lpe_baseline(sample, eval_points, bandwidth, degree=0):
    """
    Local polynomial estimator with a box kernel.

    At each evaluation point ``x0`` the responses of the sample points with
    ``|X_i - x0|_inf <= bandwidth`` are regressed on monomials of
    ``X_i - x0`` of total degree at most ``degree``; the intercept is the
    estimate.

    Returns
    -------
    estimates : ndarray
    valid : ndarray of bool
        False where the local system is rank deficient (estimate set to 0).
    n_regressions : int
        One per evaluation point.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    if degree < 0:
        raise ValueError("degree must be >= 0")
    X = sample.X
    d = X.shape[1]
    E = np.asarray(eval_points, dtype=float)
    E = E[:, None] if E.ndim == 1 else E
    tree = cKDTree(X)
    neighbours = tree.query_ball_point(E, bandwidth, p=np.inf)
    exps = np.array(_monomial_exponents(d, degree))
    est = np.zeros(len(E))
    valid = np.zeros(len(E), dtype=bool)
    for i, idx in enumerate(neighbours):
        if len(idx) < len(exps):
            continue
        dx = (X[idx] - E[i]) / bandwidth
        A = np.prod(dx[:, None, :] ** exps[None, :, :], axis=2)
        coef, _, rank, _ = np.linalg.lstsq(A, sample.Y[idx], rcond=None)
        if rank < len(exps):
            continue
        est[i] = coef[0]
        valid[i] = True
    return est, valid, len(E)
