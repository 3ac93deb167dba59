"""
Finite-sample tail bounds of the fixed-level and moving-grid estimators.

Every bound is evaluated through its logarithm, so that exponents of order
``-1e4`` do not underflow before the terms are combined.  The ``log_*``
functions return the raw logarithm; the plain functions return the raw value
(possibly above 1) and :func:`clip` maps it to a probability.

Monte-Carlo helpers estimate the matching deviation frequencies for the Haar
estimator on a uniform design, which must stay below the bounds.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import ConfigurationError, PreconditionError
from .lattice import DesignSample
from .regress import fit_level
from .scaling import build_basis

__all__ = [
    "BoundParams",
    "lambda_tail",
    "log_lambda_tail",
    "deviation_bound",
    "log_deviation_bound",
    "maltese_deviation_bound",
    "log_maltese_deviation_bound",
    "eig_tail",
    "log_eig_tail",
    "validity_floor",
    "clip",
    "deviation_frequency",
    "eig_frequency",
]


@dataclass(frozen=True)
class BoundParams:
    """
    Arguments shared by the bounds.

    Attributes
    ----------
    n, j, d, r : int
    pi_n : float
        ``1 / pi_n`` is the eigenvalue threshold; ``pi_n >= 1``.
    mu_max : float
        Upper bound of the design density.
    noise : {'bounded', 'gaussian'}
    K : float
        Noise bound (``bounded``).
    sigma : float
        Noise level (``gaussian``).
    s, M : float
        Smoothness and radius of the regression function class.
    """

    n: int
    j: int
    d: int = 1
    r: int = 1
    pi_n: float = 2.0
    mu_max: float = 1.0
    noise: str = "bounded"
    K: float = 1.0
    sigma: float = 1.0
    s: float = 1.0
    M: float = 1.0

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.r < 1 or self.j < 0:
            raise ConfigurationError("n, d, r must be positive and j >= 0")
        if not self.pi_n >= 1:
            raise ConfigurationError("pi_n must be >= 1 (threshold 1/pi_n <= 1)")
        for name in ("mu_max", "K", "sigma", "s", "M"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.noise not in ("bounded", "gaussian"):
            raise ConfigurationError(f"unknown noise model {self.noise!r}")

    @property
    def R(self):
        return 2 * self.r - 1

    @property
    def scale(self):
        """``2**(jd/2)``."""
        return 2.0 ** (self.j * self.d / 2.0)


def clip(p):
    """Report a raw bound as a probability."""
    return float(np.clip(p, 0.0, 1.0))


def log_lambda_tail(delta, params):
    """Logarithm of the noise-plus-remainder tail ``Lambda(delta)``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    p = params
    n, mu, a = p.n, p.mu_max, p.scale
    if p.noise == "bounded":
        return math.log(2.0) - n * delta**2 / (18.0 * p.K**2 * mu + 4.0 * p.K * a * delta)
    v = mu + a * delta
    gauss = (math.log(2.0 * p.sigma) + 0.5 * math.log(v) - math.log(delta * math.sqrt(2.0 * math.pi * n))
             - n * delta**2 / (p.sigma**2 * v))
    bern = math.log(2.0) - n * delta**2 / (2.0 * mu + 4.0 / 3.0 * a * delta)
    return float(logsumexp([min(gauss, 0.0), bern]))


def lambda_tail(delta, params):
    """
    ``Lambda(delta)``.

    Bounded noise: ``2 exp(-n delta**2 / (18 K**2 mu_max + 4 K 2**(jd/2) delta))``.
    Gaussian noise: ``min(1, 2 sigma sqrt(mu_max + 2**(jd/2) delta) /
    (delta sqrt(2 pi n)) exp(-n delta**2 / (sigma**2 (mu_max + 2**(jd/2) delta))))``
    plus ``2 exp(-n delta**2 / (2 mu_max + 4/3 2**(jd/2) delta))``.
    """
    return math.exp(log_lambda_tail(delta, params))


def validity_floor(params):
    """``2 M 2**(-js) max(1, 3 pi_n R**d mu_max)``; deviation bounds need ``delta`` above it."""
    p = params
    return 2.0 * p.M * 2.0 ** (-p.j * p.s) * max(1.0, 3.0 * p.pi_n * p.R**p.d * p.mu_max)


def _log_eig_exponent(t, params):
    p = params
    R2 = float(p.R) ** (2 * p.d)
    return -p.n * 2.0 ** (-p.j * p.d) * t**2 / (2.0 * p.mu_max * R2**2 + 4.0 / 3.0 * R2 * t)


def log_eig_tail(t, params):
    """Logarithm of :func:`eig_tail`."""
    if not t > 0:
        raise ValueError("t must be positive")
    R2 = float(params.R) ** (2 * params.d)
    return math.log(2.0 * R2) + _log_eig_exponent(t, params)


def eig_tail(t, params):
    """
    Bound on ``P(lambda_min(Q_H) <= t)``:
    ``2 R**(2d) exp(-n 2**(-jd) t**2 / (2 mu_max R**(4d) + 4/3 R**(2d) t))``.

    Valid for ``0 < t <= g_min / 2``; ``g_min`` is not computable here and is
    left to the caller.
    """
    return math.exp(log_eig_tail(t, params))


def _log_deviation(delta, params, lead):
    p = params
    floor = validity_floor(p)
    if not delta > floor:
        raise PreconditionError(
            f"delta={delta!r} must exceed the validity floor 2 M 2^(-js) max(1, 3 pi_n R^d mu_max) = {floor!r}")
    Rd = float(p.R) ** p.d
    terms = [math.log(Rd) + log_lambda_tail(delta / p.scale / (2.0 * p.pi_n * Rd), p)]
    if delta <= p.M:
        terms.append(math.log(lead * Rd**2) + _log_eig_exponent(1.0 / p.pi_n, p))
    return float(logsumexp(terms))


def log_deviation_bound(delta, params):
    return _log_deviation(delta, params, 2.0)


def deviation_bound(delta, params):
    """
    Bound on ``P(|eta(x) - eta_j(x)| >= delta)`` for the fixed-level estimator.

    ``2 R**(2d) exp(-n 2**(-jd) pi_n**-2 / (2 mu_max R**(4d) + 4/3 R**(2d) / pi_n)) 1{delta <= M}``
    ``+ R**d Lambda(delta 2**(-jd/2) / (2 pi_n R**d))``.

    Raises
    ------
    PreconditionError
        If ``delta`` does not exceed :func:`validity_floor`.
    """
    return math.exp(log_deviation_bound(delta, params))


def log_maltese_deviation_bound(delta, params):
    return _log_deviation(delta, params, 3.0)


def maltese_deviation_bound(delta, params):
    """As :func:`deviation_bound` with leading coefficient ``3 R**(2d)``."""
    return math.exp(log_maltese_deviation_bound(delta, params))


def _haar_setup(params, x):
    if params.r != 1 or params.d != 1:
        raise ConfigurationError("Monte-Carlo helpers cover the Haar case with d = 1")
    return build_basis(1), np.atleast_1d(np.asarray(x, dtype=float))


def _noise(params, rng, n):
    if params.noise == "bounded":
        return rng.uniform(-params.K, params.K, n)
    return params.sigma * rng.standard_normal(n)


def deviation_frequency(params, deltas, eta, x=0.5, reps=200, seed=0):
    """
    Empirical ``P(|eta(x) - eta_j(x)| >= delta)`` for the Haar estimator.

    Uniform design on ``[0, 1]``, threshold ``1 / pi_n``, invalid fits read
    as 0; bounded noise is uniform on ``[-K, K]``.

    Returns
    -------
    ndarray
        One frequency per entry of ``deltas``.
    """
    basis, x = _haar_setup(params, x)
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    truth = np.asarray(eta(x), dtype=float)
    hits = np.zeros(len(deltas))
    for rep in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(rep,)))
        X = rng.random(params.n)
        Y = eta(X) + _noise(params, rng, params.n)
        table = fit_level(DesignSample(X, Y), params.j, basis, 1.0 / params.pi_n)
        err = float(np.abs(truth - table(x))[0])
        hits += err >= deltas
    return hits / reps


def eig_frequency(params, ts, x=0.5, reps=200, seed=0):
    """Empirical ``P(lambda_min(Q_H) <= t)`` of the Haar cell containing ``x``."""
    basis, x = _haar_setup(params, x)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    m = int(min(math.floor(x[0] * 2**params.j), 2**params.j - 1))
    hits = np.zeros(len(ts))
    for rep in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(rep,)))
        X = rng.random(params.n)
        # Haar: Q_H = 2**j #{X_i in H} / n
        lam = 2.0**params.j * np.count_nonzero(np.floor(X * 2**params.j) == m) / params.n
        hits += lam <= ts
    return hits / reps
