"""Spectral regularization of the fixed-point equation on a diagonal model.

Two families replace the per-mode factor ``mu`` of the linear step operator:

* cut-off ``A_n``: keep ``mu`` when ``mu <= 1 - 1/n``, drop the mode otherwise;
* power damping ``B_n``: use ``mu - mu**n``.

Both are contractive, so ``phi = T_reg phi + z_eps`` has a unique solution
even for noisy data. All norms here are the Euclidean norm of the mode
coefficients.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.fft import dst

from .errors import InvalidArgument

__all__ = [
    "RegularizationConfig",
    "NoisyData",
    "ErrorSplit",
    "smooth_data",
    "noisy_samples",
    "regularized_factors",
    "apply_regularized",
    "regularized_fixed_point",
    "error_split",
    "mu_n",
    "threshold_eigenvalue",
    "objective",
    "optimal_n",
    "tradeoff_rows",
    "write_tradeoff_csv",
]

STRATEGIES = ("cutoff", "power")


def _default_G(p):
    return lambda lam: (1.0 - np.asarray(lam, dtype=float)) ** (-p)


@dataclass(frozen=True)
class RegularizationConfig:
    """Strategy, parameter ``n`` and the source-condition data ``(G, M)``.

    ``G`` defaults to ``(1 - lambda)^(-p)``.
    """

    strategy: str = "cutoff"
    n: int = 2
    p: float = 1.0
    G: Callable | None = None
    M: float = 1.0
    epsilon: float = 0.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidArgument(f"strategy must be one of {STRATEGIES}")
        if self.n < 2:
            raise InvalidArgument("n must be >= 2")
        if self.epsilon < 0:
            raise InvalidArgument("epsilon must be >= 0")
        if self.M < 0:
            raise InvalidArgument("M must be >= 0")
        if self.G is None:
            if self.p <= 0:
                raise InvalidArgument("p must be positive")
            object.__setattr__(self, "G", _default_G(self.p))
        lam = np.concatenate([np.linspace(0.0, 0.9, 10), 1 - 10.0 ** -np.arange(2, 13)])
        vals = np.asarray(self.G(lam), dtype=float)
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0) or np.any(np.diff(vals) <= 0):
            raise InvalidArgument("G must be positive, finite and increasing on [0, 1)")

    def with_n(self, n):
        return RegularizationConfig(self.strategy, n, self.p, self.G, self.M, self.epsilon)


@dataclass(frozen=True, eq=False)
class NoisyData:
    """Samples of a trace at the interior points ``x_i = i pi / m``, ``i = 1..m-1``."""

    values: np.ndarray
    epsilon: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise InvalidArgument("epsilon must be >= 0")

    @property
    def grid(self):
        m = len(self.values) + 1
        return np.pi * np.arange(1, m) / m


def noisy_samples(f, m, epsilon, rng):
    """``f`` sampled on the interior grid plus uniform noise in ``[-epsilon, epsilon]``."""
    x = np.pi * np.arange(1, m) / m
    return NoisyData(f(x) + rng.uniform(-epsilon, epsilon, size=m - 1), epsilon)


def smooth_data(samples, r, s):
    """Truncated sine projection of noisy samples.

    Coefficients of ``sum_j c_j sin(j x)`` come from a type-I DST; modes
    above ``N = ceil(epsilon^(-1/r))`` are dropped. With ``epsilon = 0``
    every resolvable mode is kept.
    """
    if not r > s > 0:
        raise InvalidArgument("need r > s > 0")
    y = np.asarray(samples.values, dtype=float)
    m = len(y) + 1
    c = dst(y, type=1) / m
    if samples.epsilon > 0:
        N = math.ceil(samples.epsilon ** (-1.0 / r))
        c = c[: min(N, len(c))]
    return c


def _gaps_mu(model):
    return model.mu_gaps, model.mus


def regularized_factors(model, config):
    """Per-mode regularized factor ``mu~`` and ``1 - mu~`` (computed without cancellation)."""
    gap, mu = _gaps_mu(model)
    if config.strategy == "cutoff":
        keep = gap >= 1.0 / config.n
        return np.where(keep, mu, 0.0), np.where(keep, gap, 1.0)
    mu_n_pow = model.mu_power(config.n)
    return mu - mu_n_pow, gap + mu_n_pow


def apply_regularized(model, config, phi):
    phi = np.asarray(phi, dtype=float)
    return regularized_factors(model, config)[0] * phi


def regularized_fixed_point(model, config, z_eps):
    """Mode-wise solution ``z_j / (1 - mu~_j)`` of ``phi = T_reg phi + z_eps``."""
    return np.asarray(z_eps, dtype=float) / regularized_factors(model, config)[1]


def mu_n(n):
    """Maximizer ``n^(1/(1-n))`` of ``lambda - lambda^n`` on [0, 1]."""
    return math.exp(math.log(n) / (1 - n))


def threshold_eigenvalue(model, config):
    """``Lambda(n)`` (cut-off) or ``Upsilon(n)`` (power); 0 when no mode is below the threshold."""
    gap, mu = _gaps_mu(model)
    if config.strategy == "cutoff":
        below = gap >= 1.0 / config.n
    else:
        below = mu < mu_n(config.n)
    return float(mu[below].max()) if below.any() else 0.0


@dataclass(frozen=True)
class ErrorSplit:
    approx_term: float
    noise_term: float
    threshold: float

    @property
    def total(self):
        return self.approx_term + self.noise_term


def error_split(model, config, phi_bar, epsilon=None):
    """Approximation and noise parts of the regularized error.

    ``approx_term = |(I - T_reg)^-1 (T_reg - T) phi_bar|`` and
    ``noise_term = epsilon * max_j (1 - mu~_j)^-1``.
    """
    eps = config.epsilon if epsilon is None else epsilon
    phi_bar = np.asarray(phi_bar, dtype=float)
    mt, gt = regularized_factors(model, config)
    approx = np.linalg.norm((mt - model.mus) / gt * phi_bar)
    noise = eps * float(np.max(1.0 / gt))
    return ErrorSplit(float(approx), noise, threshold_eigenvalue(model, config))


def objective(model, config, phi_bar_norm=0.0):
    """Parameter-choice objective for one ``n``.

    Cut-off: ``M / G(1 - 1/n) + eps / (1 - Lambda(n))``.
    Power: ``mu(n)^n |phi_bar| / (1 + mu(n)^n - mu(n)) + M / G(mu(n))
    + eps / (1 + Upsilon^n - Upsilon)``.
    """
    n, M, eps, G = config.n, config.M, config.epsilon, config.G
    t = threshold_eigenvalue(model, config)
    if config.strategy == "cutoff":
        return float(M / G(1 - 1 / n) + eps / (1 - t))
    m = mu_n(n)
    mn = m**n
    return float(mn * phi_bar_norm / (1 + mn - m) + M / G(m) + eps / (1 + t**n - t))


def optimal_n(model, config, phi_bar_norm=0.0, n_max=200):
    """Exhaustive scan of ``n = 2..n_max``; ties go to the smaller ``n``.

    Returns ``(n_opt, objective values indexed from n = 2)``.
    """
    if n_max < 2:
        raise InvalidArgument("n_max must be >= 2")
    if config.M <= 0 or config.epsilon <= 0:
        raise InvalidArgument("optimal n needs M > 0 and epsilon > 0")
    vals = np.array([objective(model, config.with_n(n), phi_bar_norm) for n in range(2, n_max + 1)])
    return int(np.argmin(vals)) + 2, vals


def tradeoff_rows(model, config, phi_bar, noise, n_values):
    """Rows ``(n, approx, noise, total, true_error, objective)`` for a noisy fixed-point problem.

    ``noise`` is the perturbation added to ``z = (1 - mu) phi_bar``.
    """
    phi_bar = np.asarray(phi_bar, dtype=float)
    z_eps = model.mu_gaps * phi_bar + np.asarray(noise, dtype=float)
    eps = float(np.linalg.norm(noise))
    rows = []
    for n in n_values:
        cfg = config.with_n(n)
        sp = error_split(model, cfg, phi_bar, eps)
        err = float(np.linalg.norm(regularized_fixed_point(model, cfg, z_eps) - phi_bar))
        rows.append((n, sp.approx_term, sp.noise_term, sp.total, err, objective(model, cfg, np.linalg.norm(phi_bar))))
    return rows


def write_tradeoff_csv(rows, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["n", "approx_term", "noise_term", "total", "true_error", "objective"])
        for row in rows:
            out.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
