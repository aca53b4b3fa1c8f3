"""Cox-Ingersoll-Ross intensity process.

The instantaneous fraud intensity lambda follows the mean-reverting
square-root diffusion

    d lambda_t = kappa * (theta - lambda_t) dt + sigma * sqrt(lambda_t) dB_t

with kappa, theta, sigma > 0. This module provides the conditional moments,
exact path simulation through the noncentral chi-square transition law, and
the affine coefficients (gamma, A, B) behind the closed-form probability
that an event arrives within a horizon Delta:

    P(one event in (t, t+Delta]) = 1 - exp(A(Delta) - B(Delta) * lambda_t)

    gamma    = sqrt(kappa^2 + 2*sigma^2)
    B(Delta) = 2*(exp(gamma*Delta) - 1)
               / (2*gamma + (gamma+kappa)*(exp(gamma*Delta) - 1))
    A(Delta) = (2*kappa*theta/sigma^2)
               * log( 2*gamma*exp((kappa+gamma)*Delta/2)
                      / (2*gamma + (gamma+kappa)*(exp(gamma*Delta) - 1)) )
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DomainError

__all__ = [
    "CirParams",
    "IntensityPath",
    "AffineCoefficients",
    "cir_mean",
    "cir_variance",
    "simulate_path",
    "simulate_mc_batch",
    "affine_coefficients",
    "fraud_probability",
]

# Below 2*sigma^2/kappa^2 = _SMALL_SIGMA_EPS the direct log formula for A
# cancels catastrophically in float64; switch to its sigma->0 limit
# A = theta*(B - Delta), whose relative error is O(sigma^2/kappa^2) there.
_SMALL_SIGMA_EPS = 1e-6


def _require_finite_scalar(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class CirParams:
    """Parameters of the intensity SDE.

    kappa: mean-reversion rate (1/time), theta: long-run mean intensity,
    sigma: volatility coefficient. All strictly positive.
    """

    kappa: float
    theta: float
    sigma: float

    def __post_init__(self) -> None:
        for name in ("kappa", "theta", "sigma"):
            value = _require_finite_scalar(name, getattr(self, name))
            if value <= 0.0:
                raise DomainError(f"{name} must be > 0, got {value}")
            object.__setattr__(self, name, value)

    @property
    def feller_holds(self) -> bool:
        """True iff 2*kappa*theta > sigma^2, guaranteeing strictly positive paths.

        Advisory only: parameters violating it are still valid, the process
        merely has a positive probability of touching zero.
        """
        return 2.0 * self.kappa * self.theta > self.sigma * self.sigma


@dataclass(frozen=True)
class IntensityPath:
    """A uniformly sampled intensity trajectory."""

    t0: float
    dt: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise DomainError("path values must be a nonempty 1-d array")
        if not np.all(np.isfinite(values)):
            raise DomainError("path values must be finite")
        if not self.dt > 0.0:
            raise DomainError(f"dt must be > 0, got {self.dt}")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    def write_csv(self, path: str | Path) -> None:
        """Write the path as a two-column CSV with header ``t,lambda``."""
        data = np.column_stack([self.times, self.values])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header="t,lambda", comments="")


@dataclass(frozen=True)
class AffineCoefficients:
    """Coefficients of log P(no event over the horizon) = A - B * lambda."""

    a_coef: float
    b_coef: float
    gamma: float
    horizon: float


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def cir_mean(params: CirParams, lambda0: float, t: float) -> float:
    """Conditional mean E(lambda_t | lambda_0) = e^{-kappa t} lambda_0 + theta (1 - e^{-kappa t})."""
    lambda0 = _require_finite_scalar("lambda0", lambda0)
    t = _require_finite_scalar("t", t)
    if t < 0.0:
        raise DomainError(f"t must be >= 0, got {t}")
    if lambda0 < 0.0:
        raise DomainError(f"lambda0 must be >= 0, got {lambda0}")
    decay = math.exp(-params.kappa * t)
    return decay * lambda0 - params.theta * math.expm1(-params.kappa * t)


def cir_variance(params: CirParams, lambda0: float, t: float) -> float:
    """Conditional variance of lambda_t given lambda_0.

    V = (sigma^2/kappa) * lambda_0 * (e^{-kappa t} - e^{-2 kappa t})
        + (theta sigma^2 / 2 kappa) * (1 - e^{-kappa t})^2
    """
    lambda0 = _require_finite_scalar("lambda0", lambda0)
    t = _require_finite_scalar("t", t)
    if t < 0.0:
        raise DomainError(f"t must be >= 0, got {t}")
    if lambda0 < 0.0:
        raise DomainError(f"lambda0 must be >= 0, got {lambda0}")
    kappa, theta, sigma = params.kappa, params.theta, params.sigma
    decay = math.exp(-kappa * t)
    one_minus = -math.expm1(-kappa * t)
    s2 = sigma * sigma
    return (s2 / kappa) * lambda0 * (decay - decay * decay) + (theta * s2 / (2.0 * kappa)) * one_minus * one_minus


def simulate_path(
    params: CirParams,
    lambda0: float,
    dt: float,
    n_steps: int,
    seed,
    method: str = "exact",
) -> IntensityPath:
    """Simulate one intensity path of ``n_steps`` transitions starting at ``lambda0``.

    ``method="exact"`` samples each transition from the noncentral
    chi-square law (nonnegative by construction); ``method="euler"`` is the
    full-truncation Euler-Maruyama scheme kept for cross-checks and may
    produce negative values. Deterministic given the seed.
    """
    lambda0 = _require_finite_scalar("lambda0", lambda0)
    if lambda0 < 0.0:
        raise DomainError(f"lambda0 must be >= 0, got {lambda0}")
    if not dt > 0.0:
        raise DomainError(f"dt must be > 0, got {dt}")
    n_steps = int(n_steps)
    if n_steps < 1:
        raise DomainError(f"n_steps must be >= 1, got {n_steps}")
    rng = _as_rng(seed)
    if method == "exact":
        values = _kernels.cir_exact_path(
            rng, lambda0, params.kappa, params.theta, params.sigma, dt, n_steps
        )
    elif method == "euler":
        values = _kernels.cir_euler_path(
            rng, lambda0, params.kappa, params.theta, params.sigma, dt, n_steps
        )
    else:
        raise DomainError(f"unknown method {method!r}")
    return IntensityPath(t0=0.0, dt=dt, values=values)


def simulate_mc_batch(
    params: CirParams,
    lambda0: float,
    dt: float,
    n_steps: int,
    n_paths: int,
    seed,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact-sampled batch: per-path trapezoid integral of lambda and terminal value.

    Returns ``(integrals, terminals)``, each of shape ``(n_paths,)``. This is
    the raw material for Monte-Carlo checks of the closed-form probability
    (``1 - mean(exp(-integrals))``) and of the conditional moments.
    """
    lambda0 = _require_finite_scalar("lambda0", lambda0)
    if lambda0 < 0.0:
        raise DomainError(f"lambda0 must be >= 0, got {lambda0}")
    if not dt > 0.0:
        raise DomainError(f"dt must be > 0, got {dt}")
    if int(n_steps) < 1 or int(n_paths) < 1:
        raise DomainError("n_steps and n_paths must be >= 1")
    rng = _as_rng(seed)
    return _kernels.cir_mc_batch(
        rng, lambda0, params.kappa, params.theta, params.sigma, dt, int(n_steps), int(n_paths)
    )


def affine_coefficients(params: CirParams, horizon: float) -> AffineCoefficients:
    """Compute gamma, A(horizon) and B(horizon) of the no-event log-probability.

    Evaluated in the overflow-safe form using q = exp(-gamma*horizon):

        B = 2*(1-q) / (2*gamma*q + (gamma+kappa)*(1-q))
        A = (2*kappa*theta/sigma^2)
            * (log(2*gamma) + (kappa-gamma)*horizon/2
               - log(2*gamma*q + (gamma+kappa)*(1-q)))

    For sigma^2 << kappa^2 the log difference in A loses all significance in
    float64, so the deterministic-intensity limit A = theta*(B - horizon) is
    used instead (see ``_SMALL_SIGMA_EPS``).
    """
    horizon = _require_finite_scalar("horizon", horizon)
    if horizon < 0.0:
        raise DomainError(f"horizon must be >= 0, got {horizon}")
    kappa, theta, sigma = params.kappa, params.theta, params.sigma
    gamma = math.sqrt(kappa * kappa + 2.0 * sigma * sigma)
    if horizon == 0.0:
        return AffineCoefficients(a_coef=0.0, b_coef=0.0, gamma=gamma, horizon=0.0)

    q = math.exp(-gamma * horizon)
    one_minus = -math.expm1(-gamma * horizon)
    denom = 2.0 * gamma * q + (gamma + kappa) * one_minus
    b_coef = 2.0 * one_minus / denom

    eps = 2.0 * sigma * sigma / (kappa * kappa)
    if eps < _SMALL_SIGMA_EPS:
        a_coef = theta * (b_coef - horizon)
    else:
        log_bracket = math.log(2.0 * gamma) + 0.5 * (kappa - gamma) * horizon - math.log(denom)
        a_coef = (2.0 * kappa * theta / (sigma * sigma)) * log_bracket

    # The sign conventions A <= 0 <= B are what keep the probability inside
    # [0, 1]; they hold analytically, so any numerical escape is flagged
    # loudly rather than silently trusted.
    if a_coef > 0.0:
        if a_coef < 1e-12:
            a_coef = 0.0
        else:
            warnings.warn(
                f"A({horizon}) = {a_coef} > 0 for params {params}; "
                "event probability may leave [0, 1]",
                RuntimeWarning,
                stacklevel=2,
            )
    if b_coef < 0.0:
        warnings.warn(
            f"B({horizon}) = {b_coef} < 0 for params {params}; "
            "event probability may leave [0, 1]",
            RuntimeWarning,
            stacklevel=2,
        )
    return AffineCoefficients(a_coef=a_coef, b_coef=b_coef, gamma=gamma, horizon=horizon)


def fraud_probability(params: CirParams, lambda_t: float, horizon: float) -> float:
    """Probability of an event on the next transaction within ``horizon``.

    Evaluates 1 - exp(A - B*lambda_t) and clamps into [0, 1]: filtered
    intensity estimates can be negative before shift correction, and the
    clamp is monotone so downstream rankings are unaffected.
    """
    lambda_t = _require_finite_scalar("lambda_t", lambda_t)
    coefs = affine_coefficients(params, horizon)
    p = -math.expm1(coefs.a_coef - coefs.b_coef * lambda_t)
    return min(max(p, 0.0), 1.0)
