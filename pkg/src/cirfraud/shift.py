"""Correction pipeline for negative filtered intensities.

Quasi-maximum-likelihood filtering can produce negative intensity estimates.
The fix: translate the filtered sequence by a positive constant alpha (the
99th percentile of its empirical distribution, escalated when that is not
enough to clear zero), reinterpret the shifted sequence S_t = lam_t + alpha
as a square-root diffusion with long-run mean theta* = theta + alpha and an
effective volatility sigma*, and refresh (kappa, theta*, sigma*) by ordinary
least squares on the discretized dynamics

    (S_{t+1} - S_t)/sqrt(S_t) = kappa*theta**dt/sqrt(S_t) - kappa*sqrt(S_t)*dt + sigma**xi_t

with sigma* estimated as sd(residuals)/sqrt(dt). The refreshed triple is the
one used in the closed-form event probability, evaluated at S instead of lam.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cir import CirParams
from .errors import DegenerateRegressionError, DomainError

__all__ = [
    "ShiftedPath",
    "OlsEstimate",
    "ShiftCorrection",
    "choose_alpha",
    "shift_path",
    "ols_reestimate",
    "corrected_prediction_params",
]

#: Margin added above -min(values) when the percentile alone cannot make the
#: shifted sequence strictly positive.
_POSITIVITY_MARGIN = 1e-6


@dataclass(frozen=True)
class ShiftedPath:
    """A filtered intensity sequence translated by a positive constant.

    ``first_differences`` come from the unshifted source: the translation
    leaves increments unchanged by definition (dS = d lam), and computing
    them from the source keeps them bitwise identical to the original ones
    instead of re-rounding through ``values``.
    """

    alpha_shift: float
    values: np.ndarray = field(repr=False)
    source: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if not self.alpha_shift > 0.0:
            raise DomainError(f"alpha_shift must be > 0, got {self.alpha_shift}")
        values = np.asarray(self.values, dtype=float)
        source = np.asarray(self.source, dtype=float)
        if values.shape != source.shape or values.ndim != 1 or values.size == 0:
            raise DomainError("values and source must be matching nonempty 1-d arrays")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "source", source)

    @property
    def first_differences(self) -> np.ndarray:
        return np.diff(self.source)


@dataclass(frozen=True)
class OlsEstimate:
    """Least-squares refresh of the drift and diffusion parameters."""

    kappa_hat: float
    theta_star_hat: float
    sigma_star_hat: float
    residual_sd: float


@dataclass(frozen=True)
class ShiftCorrection:
    """Parameters to use for prediction, plus the shift that produced them.

    When no correction was needed, ``alpha_shift`` is 0 and ``params`` are
    the calibrated ones untouched. Event probabilities are then evaluated at
    the filtered intensity plus ``alpha_shift``.
    """

    params: CirParams
    alpha_shift: float
    n_negative: int
    ols: OlsEstimate | None = None

    def to_json_dict(self) -> dict:
        return {
            "alpha_shift": self.alpha_shift,
            "theta_star": self.params.theta,
            "sigma_star": self.params.sigma,
            "kappa_refit": self.params.kappa,
            "n_negative": self.n_negative,
        }


def _as_sequence(filtered) -> np.ndarray:
    arr = np.asarray(filtered, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError("filtered sequence must be a nonempty 1-d array")
    if not np.all(np.isfinite(arr)):
        raise DomainError("filtered sequence contains non-finite values")
    return arr


def choose_alpha(filtered) -> float:
    """Shift amount: nearest-rank 99th percentile of the filtered values.

    Escalated to -min + margin whenever the percentile alone would leave the
    shifted sequence touching zero, so min(values + alpha) > 0 always holds;
    the result is strictly positive even for an all-zero input.
    """
    arr = _as_sequence(filtered)
    ordered = np.sort(arr)
    rank = math.ceil(0.99 * arr.size)  # 1-based nearest rank
    pctl = float(ordered[rank - 1])
    floor = -float(arr.min()) + _POSITIVITY_MARGIN
    return max(pctl, floor, _POSITIVITY_MARGIN)


def shift_path(filtered, alpha: float) -> ShiftedPath:
    """Translate the sequence by ``alpha`` > 0."""
    arr = _as_sequence(filtered)
    if not alpha > 0.0:
        raise DomainError(f"alpha must be > 0, got {alpha}")
    return ShiftedPath(alpha_shift=float(alpha), values=arr + alpha, source=arr.copy())


def ols_reestimate(shifted, dt: float) -> OlsEstimate:
    """Refresh (kappa, theta*, sigma*) from a strictly positive sequence.

    Accepts a :class:`ShiftedPath` (increments taken from its exact
    ``first_differences``) or any positive 1-d sequence.
    """
    if not dt > 0.0:
        raise DomainError(f"dt must be > 0, got {dt}")
    if isinstance(shifted, ShiftedPath):
        values = shifted.values
        increments = shifted.first_differences
    else:
        values = _as_sequence(shifted)
        increments = np.diff(values)
    if values.size < 3:
        raise DomainError(f"need at least 3 values, got {values.size}")
    if np.any(values <= 0.0):
        raise DomainError("all values must be > 0 for the sqrt transform")

    root = np.sqrt(values[:-1])
    response = increments / root
    design = np.column_stack([dt / root, -root * dt])  # coefficients: kappa*theta*, kappa
    if float(np.ptp(values[:-1])) == 0.0:
        raise DegenerateRegressionError("constant path: regressors are collinear")
    coefs, _, rank, _ = np.linalg.lstsq(design, response, rcond=None)
    if rank < 2:
        raise DegenerateRegressionError("rank-deficient regression design")
    kappa_theta, kappa = float(coefs[0]), float(coefs[1])
    residuals = response - design @ coefs
    residual_sd = float(np.std(residuals, ddof=2)) if residuals.size > 2 else 0.0
    theta_star = kappa_theta / kappa if kappa != 0.0 else math.inf
    return OlsEstimate(
        kappa_hat=kappa,
        theta_star_hat=theta_star,
        sigma_star_hat=residual_sd / math.sqrt(dt),
        residual_sd=residual_sd,
    )


#: Floor keeping the refreshed volatility a valid (strictly positive) CIR
#: parameter when the OLS residuals vanish.
_SIGMA_FLOOR = 1e-12


def corrected_prediction_params(raw: CirParams, filtered, dt: float) -> ShiftCorrection:
    """Parameters to plug into the event-probability formula after filtering.

    Pass-through when the filtered sequence is already strictly positive.
    Otherwise shift by :func:`choose_alpha`, refresh parameters by OLS on
    the shifted path, and guard each estimate: a non-finite or non-positive
    OLS value falls back to the corresponding raw parameter (kappa, sigma)
    or to the shifted-path mean (theta*), keeping the result a valid
    parameter triple on badly behaved inputs.
    """
    arr = _as_sequence(filtered)
    n_negative = int(np.sum(arr < 0.0))
    if float(arr.min()) > 0.0:
        return ShiftCorrection(params=raw, alpha_shift=0.0, n_negative=0, ols=None)

    alpha = choose_alpha(arr)
    shifted = shift_path(arr, alpha)
    est = ols_reestimate(shifted, dt)

    kappa = est.kappa_hat if math.isfinite(est.kappa_hat) and est.kappa_hat > 0.0 else raw.kappa
    theta = (
        est.theta_star_hat
        if math.isfinite(est.theta_star_hat) and est.theta_star_hat > 0.0
        else float(np.mean(shifted.values))
    )
    sigma = (
        est.sigma_star_hat
        if math.isfinite(est.sigma_star_hat) and est.sigma_star_hat > _SIGMA_FLOOR
        else max(raw.sigma, _SIGMA_FLOOR)
    )
    return ShiftCorrection(
        params=CirParams(kappa=kappa, theta=theta, sigma=sigma),
        alpha_shift=alpha,
        n_negative=n_negative,
        ols=est,
    )
