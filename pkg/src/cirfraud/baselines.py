"""Comparison models: Poisson intensity fits, the naive constant, and the
lag-1 risk-score random walk.

The Poisson family treats training fraud events as a (possibly
inhomogeneous) Poisson process on the transaction-index clock and predicts
the next transaction through 1 - exp(-integral of the fitted rate). The
polynomial intensities lambda(t) = a + b t (+ c t^2) are fitted by full
maximum likelihood with the rate constrained to stay above a small floor
over the training span, using the same deterministic multi-start simplex
contract as the state-space calibrator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError, InsufficientDataError

__all__ = [
    "PolyIntensity",
    "RATE_FLOOR",
    "fit_homogeneous",
    "fit_poly_intensity",
    "nhpp_loglik",
    "poisson_predict",
    "naive_predict",
    "score_predict",
]

#: Lower bound enforced on the fitted rate over the training span.
RATE_FLOOR = 1e-12

_NM_OPTIONS = {"xatol": 1e-8, "fatol": 1e-8, "maxiter": 2000, "disp": False}


@dataclass(frozen=True)
class PolyIntensity:
    """Polynomial event rate lambda(t) = coeffs[0] + coeffs[1]*t + coeffs[2]*t^2.

    ``is_fallback`` marks the floor-rate constant returned when there were
    no events to fit.
    """

    coeffs: tuple
    is_fallback: bool = False

    def __post_init__(self) -> None:
        coeffs = tuple(float(c) for c in self.coeffs)
        if not 1 <= len(coeffs) <= 3:
            raise DomainError(f"coeffs must have length 1..3, got {len(coeffs)}")
        if not all(math.isfinite(c) for c in coeffs):
            raise DomainError("coeffs must be finite")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def rate(self, t):
        """Evaluate lambda(t); accepts scalars or arrays."""
        t = np.asarray(t, dtype=float)
        out = np.full_like(t, self.coeffs[0])
        if len(self.coeffs) > 1:
            out = out + self.coeffs[1] * t
        if len(self.coeffs) > 2:
            out = out + self.coeffs[2] * t * t
        return out if out.ndim else float(out)

    def integral(self, t0: float, t1: float) -> float:
        """Closed-form integral of the rate over [t0, t1]."""
        a = self.coeffs[0]
        b = self.coeffs[1] if len(self.coeffs) > 1 else 0.0
        c = self.coeffs[2] if len(self.coeffs) > 2 else 0.0
        return (
            a * (t1 - t0)
            + 0.5 * b * (t1 * t1 - t0 * t0)
            + (c / 3.0) * (t1 * t1 * t1 - t0 * t0 * t0)
        )

    def min_on(self, lo: float, hi: float) -> float:
        """Minimum of the rate over [lo, hi] (endpoints plus interior vertex)."""
        candidates = [self.rate(lo), self.rate(hi)]
        if len(self.coeffs) > 2 and self.coeffs[2] != 0.0:
            vertex = -self.coeffs[1] / (2.0 * self.coeffs[2])
            if lo < vertex < hi:
                candidates.append(self.rate(vertex))
        return min(candidates)


def _validate_events(event_times, span: float) -> np.ndarray:
    if not span > 0.0:
        raise DomainError(f"span must be > 0, got {span}")
    times = np.asarray(event_times, dtype=float)
    if times.ndim != 1:
        raise DomainError("event_times must be 1-d")
    if times.size and (not np.all(np.isfinite(times)) or times.min() < 0.0 or times.max() > span):
        raise DomainError("event_times must be finite and inside [0, span]")
    return times


def fit_homogeneous(event_times, span: float) -> float:
    """Constant-rate MLE: number of events divided by the observation span."""
    times = _validate_events(event_times, span)
    return times.size / span


def nhpp_loglik(intensity: PolyIntensity, event_times, span: float) -> float:
    """Inhomogeneous-Poisson log-likelihood sum(log lambda(t_i)) - integral."""
    times = _validate_events(event_times, span)
    rates = np.maximum(np.atleast_1d(intensity.rate(times)), RATE_FLOOR)
    return float(np.sum(np.log(rates)) - intensity.integral(0.0, span))


def _penalized_negloglik(coeffs: np.ndarray, times: np.ndarray, span: float) -> float:
    intensity = PolyIntensity(tuple(coeffs))
    min_rate = intensity.min_on(0.0, span)
    if min_rate < RATE_FLOOR:
        return 1e12 * (1.0 + (RATE_FLOOR - min_rate))
    rates = intensity.rate(times) if times.size else np.array([])
    if times.size and np.any(rates <= 0.0):
        return 1e12
    integral = intensity.integral(0.0, span)
    loglik = float(np.sum(np.log(rates)) - integral) if times.size else -integral
    if not math.isfinite(loglik):
        return 1e12
    return -loglik


def _fit_degree(times: np.ndarray, span: float, starts: list[np.ndarray]) -> PolyIntensity:
    best = None
    for x0 in starts:
        res = minimize(
            _penalized_negloglik,
            x0,
            args=(times, span),
            method="Nelder-Mead",
            options=_NM_OPTIONS,
        )
        if best is None or res.fun < best.fun:
            best = res
    fitted = PolyIntensity(tuple(best.x))
    if fitted.min_on(0.0, span) < RATE_FLOOR:
        # Penalty kept the search feasible from the warm start, so this only
        # triggers on pathological inputs; fall back to that start.
        fitted = PolyIntensity(tuple(starts[0]))
    return fitted


def fit_poly_intensity(event_times, span: float, degree: int) -> PolyIntensity:
    """Maximum-likelihood polynomial intensity of degree 1 or 2.

    The homogeneous MLE (and, for degree 2, the fitted linear model) is
    always among the starting points, so the fitted likelihood never falls
    below the nested model's. With no events the rate floor is returned as
    a degree-0 fallback.
    """
    if degree not in (1, 2):
        raise DomainError(f"degree must be 1 or 2, got {degree}")
    times = _validate_events(event_times, span)
    if times.size == 0:
        return PolyIntensity((RATE_FLOOR,), is_fallback=True)

    lam = times.size / span
    if degree == 1:
        starts = [
            np.array([lam, 0.0]),
            np.array([1.5 * lam, -lam / span]),
            np.array([0.5 * lam, lam / span]),
            np.array([2.0 * lam, -1.8 * lam / span]),
            np.array([0.1 * lam, 1.8 * lam / span]),
        ]
        return _fit_degree(times, span, starts)

    linear = fit_poly_intensity(event_times, span, 1)
    starts = [
        np.array([linear.coeffs[0], linear.coeffs[1], 0.0]),
        np.array([lam, 0.0, 0.0]),
        np.array([1.5 * lam, 0.0, -0.5 * lam / (span * span)]),
        np.array([0.5 * lam, 0.0, 0.5 * lam / (span * span)]),
        np.array([2.0 * lam, -2.0 * lam / span, lam / (span * span)]),
    ]
    return _fit_degree(times, span, starts)


def poisson_predict(intensity, t: float, horizon: float) -> float:
    """Event probability over (t, t+horizon] for a deterministic rate.

    ``intensity`` may be a :class:`PolyIntensity` or a bare constant rate.
    The closed-form integral is floored at zero so polynomial extrapolation
    beyond the fitted span cannot produce a negative exposure.
    """
    if horizon < 0.0:
        raise DomainError(f"horizon must be >= 0, got {horizon}")
    if isinstance(intensity, PolyIntensity):
        exposure = intensity.integral(t, t + horizon)
    else:
        exposure = float(intensity) * horizon
    return -math.expm1(-max(exposure, 0.0))


def naive_predict(train_labels) -> float:
    """Training-set fraud proportion, used as one constant test probability."""
    labels = np.asarray(train_labels, dtype=float)
    if labels.size == 0:
        raise InsufficientDataError("training labels must be nonempty")
    return float(labels.mean())


def score_predict(risk_scores, last_train_score: float) -> np.ndarray:
    """Lag-1 random-walk forecast of the risk scores.

    The prediction for test transaction i is the score observed at i-1; the
    first test transaction inherits the last training score.
    """
    scores = np.asarray(risk_scores, dtype=float)
    if scores.size == 0:
        raise InsufficientDataError("risk_scores must be nonempty")
    return np.concatenate([[float(last_train_score)], scores[:-1]])
