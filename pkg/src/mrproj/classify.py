"""
Plug-in classification on top of the moving-grid estimator.

The classifier labels ``x`` with ``1{eta_hat(x) >= 1/2}``.  Its excess risk
against the Bayes rule is estimated by Monte Carlo through
``E[|2 eta(X) - 1| 1{h(X) != h*(X)}]``, which is exactly 0 at the Bayes rule.
"""
import csv
import math
from dataclasses import dataclass

import numpy as np

from .adapt import resolution_grid
from .exceptions import ConfigurationError
from .lattice import DesignSample
from .regress import ThresholdPolicy, _points
from .unknown_support import MalteseEstimator, SplitSample, maltese_adaptive, split

__all__ = [
    "ClassificationScenario",
    "RiskReport",
    "PlugInClassifier",
    "plug_in",
    "margin_scenario",
    "bayes_classifier",
    "train_classifier",
    "excess_risk_mc",
    "risk_curve",
    "write_risk_csv",
]


@dataclass(frozen=True)
class ClassificationScenario:
    """
    Known regression function with a design sampler.

    Attributes
    ----------
    eta : callable
        ``x (q, d) -> [0, 1]``.
    sampler : callable
        ``(m, rng) -> (m, d)`` design points.
    theta : float
        Margin exponent; ``inf`` for a hard margin.
    c_star : float
        Margin constant (label only).
    s : float
        Smoothness label.
    d : int
    """

    eta: object
    sampler: object
    theta: float
    c_star: float = 1.0
    s: float = 1.0
    d: int = 1

    def draw(self, m, rng):
        """``m`` labelled pairs ``(X, Y)`` with ``Y ~ Bernoulli(eta(X))``."""
        rng = np.random.default_rng(rng)
        X = _points(self.sampler(m, rng), self.d)
        Y = (rng.random(m) < self.eta(X)).astype(float)
        return DesignSample(X, Y)

    def margin_cdf(self, t):
        """``P(0 < |2 eta(X) - 1| <= t)`` under the uniform design."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        if self.theta == 0:
            return np.zeros_like(t)
        if math.isinf(self.theta):
            return np.where(t >= 1.0, 1.0, 0.0)
        return t**self.theta

    @property
    def mean_abs_margin(self):
        """``E|2 eta(X) - 1| = theta / (theta + 1)`` under the uniform design."""
        if math.isinf(self.theta):
            return 1.0
        return self.theta / (self.theta + 1.0)


def _uniform(d):
    def sampler(m, rng):
        return rng.random((m, d))

    return sampler


def margin_scenario(theta, s=1.0, d=1, c_star=1.0):
    """
    ``eta(x) = 1/2 + sign(x1 - 1/2) |2 x1 - 1|**(1/theta) / 2``, uniform design.

    With this choice ``|2 eta - 1| = |2 x1 - 1|**(1/theta)`` so the margin
    condition holds with equality, ``P(0 < |2 eta - 1| <= t) = t**theta``.
    ``theta = inf`` is the hard margin ``eta in {0, 1}`` and ``theta = 0``
    gives ``eta = 1/2``.
    """
    if not theta >= 0:
        raise ConfigurationError("theta must be >= 0")

    def eta(x):
        x1 = _points(x, d)[:, 0]
        u = 2.0 * x1 - 1.0
        if theta == 0:
            return np.full(len(x1), 0.5)
        if math.isinf(theta):
            mag = (u != 0).astype(float)
        else:
            mag = np.abs(u) ** (1.0 / theta)
        return 0.5 + 0.5 * np.sign(u) * mag

    return ClassificationScenario(eta, _uniform(d), float(theta), c_star, s, d)


def plug_in(eta_evaluator, x):
    """Labels ``1{eta_evaluator(x) >= 1/2}``."""
    return (np.asarray(eta_evaluator(x)) >= 0.5).astype(np.int64)


class PlugInClassifier:
    """``x -> 1{eta_hat(x) >= 1/2}`` for a fitted ``eta_hat``."""

    def __init__(self, eta_hat, info=None):
        self.eta_hat = eta_hat
        self.info = info or {}

    def __call__(self, x):
        return plug_in(self.eta_hat, x)


def bayes_classifier(scenario):
    return PlugInClassifier(scenario.eta, {"kind": "bayes"})


def train_classifier(sample, j=None, grid=None, basis=None, policy=None, seed=None):
    """
    Plug-in classifier built on the moving-grid estimator clamped at 1.

    Parameters
    ----------
    sample : DesignSample or SplitSample
        ``2n`` points with 0/1 responses, split into fit and anchor halves
        unless already split.
    j : int, optional
        Fixed level.  Exactly one of ``j`` and ``grid`` is required.
    grid : ResolutionGrid, optional
        Levels for Lepski selection.
    basis : ScalingBasis
    policy : ThresholdPolicy, optional
        Defaults to the empirical-decile rule; its clamp is forced to 1.
    seed : int, optional
        Seed of the sample split.

    Raises
    ------
    ValueError
        If the responses are not binary.
    """
    fit = sample.fit_half if isinstance(sample, SplitSample) else sample
    if fit.Y is None or not np.all((fit.Y == 0) | (fit.Y == 1)):
        raise ValueError("classification needs responses in {0, 1}")
    if (j is None) == (grid is None):
        raise ConfigurationError("give exactly one of a level j or a grid")
    if basis is None:
        raise ConfigurationError("a scaling basis is required")
    policy = policy or ThresholdPolicy("empirical-decile")
    policy = ThresholdPolicy(policy.variant, policy.g_min_star, 1.0, policy.decile)
    halves = sample if isinstance(sample, SplitSample) else split(sample, seed)
    if grid is None:
        est = MalteseEstimator(halves, j, basis, policy)
        return PlugInClassifier(est, {"kind": "fixed", "j": int(j), "n": halves.n})

    def eta_hat(x):
        return maltese_adaptive(x, halves, grid, basis, policy)[0]

    return PlugInClassifier(eta_hat, {"kind": "adaptive", "levels": grid.levels, "n": halves.n})


@dataclass(frozen=True)
class RiskReport:
    estimate: float
    stderr: float
    m: int
    n: int = 0


def excess_risk_mc(classifier, scenario, m, seed=None):
    """
    Monte-Carlo excess risk ``E[|2 eta(X) - 1| 1{h(X) != h*(X)}]``.

    Raises
    ------
    ValueError
        If ``m < 1``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    X = _points(scenario.sampler(m, rng), scenario.d)
    eta = scenario.eta(X)
    bayes = (eta >= 0.5).astype(np.int64)
    loss = np.abs(2.0 * eta - 1.0) * (np.asarray(classifier(X)) != bayes)
    stderr = float(loss.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    n = getattr(classifier, "info", {}).get("n", 0)
    return RiskReport(float(loss.mean()), stderr, int(m), int(n))


def _default_level(n, s, d):
    # 2**j_s = floor(n**(1 / (2s + d)))
    return max(int(math.floor(n ** (1.0 / (2 * s + d)))).bit_length() - 1, 0)


def risk_curve(scenario, ns, reps, basis, policy=None, m=20000, seed=0, level="fixed",
               kappa=1.0, j=None, coupled=True):
    """
    Median excess risk of trained classifiers over ``reps`` draws per ``n``.

    ``n`` is the size of each half; ``2n`` points are used.  ``level`` is
    ``'fixed'`` (``j``, by default ``j_s`` from ``scenario.s``) or
    ``'adaptive'``.

    With ``coupled`` each replication draws and splits one sample of size
    ``2 max(ns)``; size ``n`` uses the first ``n`` points of each half, and
    all sizes share the probes.  The nested samples remove most of the
    between-size noise of the medians without changing their expectations.

    Returns
    -------
    list of dict
        Rows ``n, theta, s, median_excess_risk, stderr, seed_base``; ``stderr``
        is the normal-theory standard error of the median,
        ``1.2533 sd / sqrt(reps)``.
    """
    ns = [int(n) for n in ns]
    risks = {n: [] for n in ns}
    for rep in range(reps):
        if coupled:
            data_ss, split_ss, probe_ss = np.random.SeedSequence(entropy=seed, spawn_key=(rep,)).spawn(3)
            full = split(scenario.draw(2 * max(ns), np.random.default_rng(data_ss)),
                         np.random.default_rng(split_ss))
        for n in ns:
            if coupled:
                sample = SplitSample(full.fit_half.subset(np.arange(n)),
                                     full.anchor_half.subset(np.arange(n)))
                split_seed = None
            else:
                data_ss, split_ss, probe_ss = np.random.SeedSequence(
                    entropy=seed, spawn_key=(rep, n)).spawn(3)
                sample = scenario.draw(2 * n, np.random.default_rng(data_ss))
                split_seed = np.random.default_rng(split_ss)
            if level == "fixed":
                jj = _default_level(n, scenario.s, scenario.d) if j is None else j
                clf = train_classifier(sample, j=jj, basis=basis, policy=policy, seed=split_seed)
            elif level == "adaptive":
                grid = resolution_grid(n, scenario.d, basis.r, kappa=kappa)
                clf = train_classifier(sample, grid=grid, basis=basis, policy=policy, seed=split_seed)
            else:
                raise ConfigurationError(f"unknown level rule {level!r}")
            report = excess_risk_mc(clf, scenario, m, np.random.default_rng(probe_ss))
            risks[n].append(report.estimate)
    rows = []
    for n in ns:
        r = np.array(risks[n])
        rows.append({
            "n": n,
            "theta": scenario.theta,
            "s": scenario.s,
            "median_excess_risk": float(np.median(r)),
            "stderr": float(1.2533 * r.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0,
            "seed_base": int(seed),
        })
    return rows


def write_risk_csv(rows, path):
    fields = ["n", "theta", "s", "median_excess_risk", "stderr", "seed_base"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] if not isinstance(row[k], float) else repr(row[k]) for k in fields})
