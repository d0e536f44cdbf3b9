"""Diagonal models of the linear step operator on special domains.

On a strip-like square the sine modes diagonalize the step operator; on the
annulus the modes sin(j theta), cos(j theta) do. Each mode is damped by a
fixed factor ``mu_j`` per sweep. Because ``mu_j`` approaches 1 exponentially
fast in ``j``, the model stores ``log(1 - lambda_j)`` alongside ``lambda_j``:
for the square ``tanh(2 j pi)`` already rounds to 1.0 for ``j >= 3``.

Square model: the tabulated value is ``lambda_j = tanh(2 j pi)`` and one
sweep multiplies mode ``j`` by ``mu_j = lambda_j**2``.

Annulus model: the tabulated quotient simplifies to
``lambda_j = ((1 - q) / (1 + q))**2`` with ``q = r0**(2 j)``. This is already
the damping factor of one sweep, so ``mu_j = lambda_j`` there. (A direct
calculation with data on the outer circle r = 1 and reconstruction on the
inner circle r = r0 gives exactly this per-sweep factor.)
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "SpectralModel",
    "square_eigenvalue",
    "annulus_eigenvalue",
    "rect_step_eigenvalue",
    "spectral_iterate",
    "error_bound",
    "WeightedBound",
    "sobolev_norm",
    "hadamard_solution",
    "hadamard_datum",
    "hadamard_table",
    "first_mode_power_check",
    "write_eigenvalue_csv",
    "write_decay_csv",
]


def _check_modes(j):
    j = np.asarray(j)
    if np.any(j < 1) or np.any(j != np.floor(j)):
        raise InvalidArgument("mode index must be an integer >= 1")
    return j.astype(float)


def _square_log_gap(j):
    # log(1 - tanh(2 j pi)) = log 2 - 4 j pi - log1p(exp(-4 j pi))
    return np.log(2.0) - 4 * np.pi * j - np.log1p(np.exp(-4 * np.pi * j))


def _annulus_log_gap(j, r0):
    # 1 - ((1-q)/(1+q))^2 = 4 q / (1+q)^2
    log_q = 2 * j * math.log(r0)
    return np.log(4.0) + log_q - 2 * np.log1p(np.exp(log_q))


def square_eigenvalue(j):
    """``tanh(2 j pi)`` evaluated as ``(1 - e^{-4 j pi}) / (1 + e^{-4 j pi})``."""
    j = _check_modes(j)
    e = np.exp(-4 * np.pi * j)
    out = (1 - e) / (1 + e)
    return float(out) if out.ndim == 0 else out


def annulus_eigenvalue(j, r0):
    """Quotient of the annulus formula in its factored form ``((1-q)/(1+q))^2``, ``q = r0^(2j)``."""
    if not 0 < r0 < 1:
        raise InvalidArgument("r0 must lie in (0, 1)")
    j = _check_modes(j)
    q = np.exp(2 * j * math.log(r0))
    out = ((1 - q) / (1 + q)) ** 2
    return float(out) if out.ndim == 0 else out


def rect_step_eigenvalue(j, height, width=1.0):
    """Per-sweep factor ``tanh(j pi H / L)^2`` of mode ``sin(j pi x / L)``.

    Rectangle of width L and height H with data on the bottom side,
    reconstruction on the top side and homogeneous Dirichlet conditions on
    the lateral sides.
    """
    j = _check_modes(j)
    if height <= 0 or width <= 0:
        raise InvalidArgument("rectangle sides must be positive")
    out = np.tanh(j * np.pi * height / width) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Mode table of a diagonal model.

    ``lambdas`` and ``log_gaps = log(1 - lambdas)`` are indexed by mode
    ``j = 1..J_max``; ``power`` relates them to the per-sweep factor
    ``mu = lambda**power``.
    """

    kind: str
    lambdas: np.ndarray
    log_gaps: np.ndarray
    power: int = 1
    r0: float | None = None

    def __post_init__(self):
        lam = np.asarray(self.lambdas)
        if lam.ndim != 1 or len(lam) == 0:
            raise InvalidArgument("need at least one mode")
        if np.any(lam < 0) or np.any(self.log_gaps > 0) or np.any(np.isnan(self.log_gaps)):
            raise InvalidArgument("eigenvalues must lie in [0, 1)")

    @classmethod
    def square(cls, J_max=64):
        j = np.arange(1, J_max + 1, dtype=float)
        return cls("square", square_eigenvalue(j), _square_log_gap(j), power=2)

    @classmethod
    def annulus(cls, r0, J_max=64):
        j = np.arange(1, J_max + 1, dtype=float)
        return cls(f"annulus(r0={r0:g})", annulus_eigenvalue(j, r0), _annulus_log_gap(j, r0), 1, r0)

    @classmethod
    def from_eigenvalues(cls, eigenvalues, kind="discrete"):
        """Model whose per-sweep factors are the given (e.g. FEM audit) eigenvalues.

        Values are sorted increasingly. Values that round to 1 or above
        cannot be told apart from 1 and get the gap ``2**-53``.
        """
        mu = np.sort(np.asarray(eigenvalues, dtype=float))
        if np.any(mu < -1e-12) or np.any(mu > 1 + 1e-10):
            raise InvalidArgument("eigenvalues of a non-expansive positive operator lie in [0, 1]")
        mu = np.clip(mu, 0.0, None)
        gap = np.maximum(1.0 - mu, 2.0**-53)
        return cls(kind, np.minimum(mu, 1 - gap), np.log(gap), 1)

    @property
    def J_max(self):
        return len(self.lambdas)

    @property
    def modes(self):
        return np.arange(1, self.J_max + 1)

    @property
    def mus(self):
        return self.lambdas**self.power

    @property
    def mu_log_gaps(self):
        """``log(1 - mu_j)``, accurate where ``mu_j`` rounds to 1."""
        if self.power == 1:
            return np.array(self.log_gaps)
        g = np.exp(self.log_gaps)
        tiny = g < 1e-8
        out = self.log_gaps + math.log(self.power)
        gb = g[~tiny]
        out[~tiny] = np.log(-np.expm1(self.power * np.log1p(-gb)))
        return out

    @property
    def mu_gaps(self):
        return np.exp(self.mu_log_gaps)

    def mu_power(self, k):
        """``mu_j ** k`` without rounding ``mu_j`` to 1 first."""
        return np.exp(k * np.log1p(-self.mu_gaps))


def _modes(model, v, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (model.J_max,):
        raise InvalidArgument(f"{name} needs {model.J_max} mode coefficients, got shape {v.shape}")
    return v


def spectral_iterate(model, phi0, z, k):
    """Mode-wise closed form of ``k`` sweeps of ``phi -> mu phi + z``."""
    phi0 = _modes(model, phi0, "phi0")
    z = _modes(model, z, "z")
    if k < 0:
        raise InvalidArgument("k must be >= 0")
    g = model.mu_gaps
    log_mu = np.log1p(-g)
    mu_k = np.exp(k * log_mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        geo = np.where(g > 0, -np.expm1(k * log_mu) / g, float(k))
    return mu_k * phi0 + geo * z


@dataclass(frozen=True)
class WeightedBound:
    head: float
    tail: float

    @property
    def total(self):
        return self.head + self.tail


def error_bound(model, eps0, k, weights=None, J=None, M=None):
    """Upper bound on ``|eps_k|^2`` in the periodic H^{-1/2} norm.

    Without weights: ``sum_j j^-1 (mu_j^k eps0_j)^2``. With nondecreasing
    positive weights ``c_j`` and a split index ``J`` the two-term bound
    ``mu_J^{2k} (c_J/c_1)^2 |eps0|^2 + M / c_J^2`` is returned as a
    :class:`WeightedBound`; ``M`` defaults to ``sum_j j^-1 c_j^2 eps0_j^2``.
    """
    eps0 = _modes(model, eps0, "eps0")
    j = model.modes
    mu_k = model.mu_power(k)
    if weights is None:
        return float(np.sum((mu_k * eps0) ** 2 / j))
    c = np.asarray(weights, dtype=float)
    if c.shape != eps0.shape:
        raise InvalidArgument("one weight per mode required")
    if np.any(c <= 0) or np.any(np.diff(c) < 0):
        raise InvalidArgument("weights must be positive and nondecreasing")
    if J is None or not 1 <= J <= model.J_max:
        raise InvalidArgument("split index J must lie in 1..J_max")
    if M is None:
        M = float(np.sum(c**2 * eps0**2 / j))
    norm2 = float(np.sum(eps0**2 / j))
    head = float(mu_k[J - 1] ** 2 * (c[J - 1] / c[0]) ** 2 * norm2)
    return WeightedBound(head, float(M / c[J - 1] ** 2))


def sobolev_norm(v, s):
    """``(sum_j (1 + j^2)^s v_j^2)^(1/2)`` for coefficients ``v_1, v_2, ...``."""
    v = np.asarray(v, dtype=float)
    j = np.arange(1, len(v) + 1)
    scale = float(np.max(np.abs(v), initial=0.0))
    if scale == 0.0:
        return 0.0
    # scaled to avoid underflow/overflow when squaring
    return scale * float(np.sqrt(np.sum((1.0 + j**2) ** s * (v / scale) ** 2)))


def hadamard_solution(k, x, y):
    """``(pi k)^-2 sinh(pi k y) sin(pi k x)``: Cauchy data tend to zero, the solution does not."""
    if k < 1:
        raise InvalidArgument("k must be >= 1")
    a = np.pi * k
    return np.sinh(a * np.asarray(y)) * np.sin(a * np.asarray(x)) / a**2


def hadamard_datum(k, x):
    """Neumann datum ``(pi k)^-1 sin(pi k x)`` on y = 0 matching :func:`hadamard_solution`."""
    if k < 1:
        raise InvalidArgument("k must be >= 1")
    return np.sin(np.pi * k * np.asarray(x)) / (np.pi * k)


# 2520 = lcm(1..10): the grid contains every maximizer x = 1/(2k), k <= 10
HADAMARD_GRID = np.arange(2 * 2520 + 1) / (2 * 2520)


def hadamard_table(ks=range(1, 11), y=0.5, grid=HADAMARD_GRID):
    """Rows ``(k, data_sup, data_sup_exact, u_sup, u_sup_exact, ratio)``.

    Sups are taken over ``grid`` and compared with the closed forms
    ``(pi k)^-1`` and ``(pi k)^-2 sinh(pi k y)``.
    """
    rows = []
    for k in ks:
        d = float(np.max(np.abs(hadamard_datum(k, grid))))
        u = float(np.max(np.abs(hadamard_solution(k, grid, y))))
        a = np.pi * k
        rows.append((int(k), d, 1 / a, u, math.sinh(a * y) / a**2, u / d))
    return rows


def first_mode_power_check(k=100_000, quoted=0.061):
    """Recompute the first square-mode power after ``k`` sweeps.

    Returns both readings of the exponent: ``lambda_1^(2k)`` (the literal
    expression) and ``lambda_1^(4k) = mu_1^(2k)`` (squared-norm decay under
    ``mu_1 = lambda_1^2``), together with the quoted value.
    """
    g = math.exp(float(_square_log_gap(1.0)))
    log_lam = math.log1p(-g)
    p2, p4 = math.exp(2 * k * log_lam), math.exp(4 * k * log_lam)
    return {
        "k": k,
        "lambda_1": square_eigenvalue(1),
        "lambda_1_pow_2k": p2,
        "lambda_1_pow_4k": p4,
        "quoted": quoted,
        "discrepancy_2k": p2 - quoted,
        "discrepancy_4k": p4 - quoted,
        "closest_reading": "4k" if abs(p4 - quoted) < abs(p2 - quoted) else "2k",
    }


def write_eigenvalue_csv(models, path):
    """One row per mode: ``j`` then ``lambda_j``, ``log(1-lambda_j)`` and ``mu_j`` per model."""
    models = list(models)
    J = min(m.J_max for m in models)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        head = ["j"]
        for m in models:
            head += [f"lambda[{m.kind}]", f"log_gap[{m.kind}]", f"mu[{m.kind}]"]
        out.writerow(head)
        for i in range(J):
            row = [i + 1]
            for m in models:
                row += [repr(float(m.lambdas[i])), repr(float(m.log_gaps[i])), repr(float(m.mus[i]))]
            out.writerow(row)


def write_decay_csv(rows, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["k", "bound", "actual"])
        for k, b, a in rows:
            out.writerow([k, repr(float(b)), repr(float(a))])
