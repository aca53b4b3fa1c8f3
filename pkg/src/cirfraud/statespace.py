"""State-space form of the intensity model and its Kalman-filter calibration.

Discretizing the intensity SDE over a step dt gives a stationary AR(1) state
equation

    lam_t = alpha + beta * lam_{t-1} + eps_t,   eps_t ~ N(0, eta_t^2)
    alpha = theta * (1 - e^{-kappa dt}),  beta = e^{-kappa dt}
    eta_t^2 = theta sigma^2 (1-beta)^2 / (2 kappa) + sigma^2 (beta - beta^2)/kappa * lam_{t-1}

while the log no-event probability observed on each transaction obeys the
affine measurement equation

    y_t = a + b * lam_t + noise,   a = A(dt), b = -B(dt),  noise ~ N(0, w^2).

The filter alternates forecast and update steps and the four parameters
(kappa, theta, sigma, w) are estimated by maximizing the prediction-error
log-likelihood l = -1/2 sum log(psi_t) - 1/2 sum e_t^2/psi_t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .cir import CirParams, affine_coefficients
from .errors import (
    DegenerateDataError,
    DegenerateModelError,
    DomainError,
    InsufficientDataError,
    SingularUpdateError,
)

__all__ = [
    "StateTransition",
    "MeasurementModel",
    "FilterState",
    "FilterStep",
    "OptConfig",
    "CalibrationResult",
    "make_state_transition",
    "make_measurement_model",
    "predict",
    "update",
    "filter_series",
    "calibrate",
    "y_from_risk_scores",
    "DEFAULT_INIT",
]

#: Risk scores are clamped below 1 - this margin before taking log(1 - r).
_SCORE_CLAMP = 1e-9

#: Minimum series length accepted by the calibrator.
_MIN_CALIBRATION_OBS = 20


@dataclass(frozen=True)
class StateTransition:
    """AR(1) coefficients of the discretized intensity."""

    alpha: float
    beta: float
    eta_sq_base: float
    eta_sq_slope: float

    def eta_sq(self, lam_prev: float) -> float:
        """State-noise variance at the previous intensity, floored at zero."""
        return self.eta_sq_base + self.eta_sq_slope * max(lam_prev, 0.0)


@dataclass(frozen=True)
class MeasurementModel:
    """Affine observation y = a_obs + b_obs * lam + noise, sd(noise) = w."""

    a_obs: float
    b_obs: float
    w: float

    def __post_init__(self) -> None:
        if not self.b_obs < 0.0:
            raise DegenerateModelError(
                f"measurement slope must be negative, got {self.b_obs}"
            )
        if self.w < 0.0 or not math.isfinite(self.w):
            raise DomainError(f"w must be >= 0 and finite, got {self.w}")


@dataclass(frozen=True)
class FilterState:
    """Filtered intensity estimate, its variance, and the step counter."""

    lambda_filtered: float
    variance: float
    t_index: int = 0

    def __post_init__(self) -> None:
        if self.variance < 0.0:
            raise DomainError(f"variance must be >= 0, got {self.variance}")


#: Diffuse prior used throughout: zero starting intensity with variance 10
#: to absorb the uncertainty about the unknown initial state.
DEFAULT_INIT = FilterState(lambda_filtered=0.0, variance=10.0, t_index=0)


@dataclass(frozen=True)
class FilterStep:
    """One forecast/update cycle of the filter."""

    predicted_lambda: float
    predicted_variance: float
    innovation: float
    innovation_variance: float
    gain: float
    updated: FilterState


def make_state_transition(params: CirParams, dt: float) -> StateTransition:
    """AR(1) coefficients for a step of length ``dt``."""
    if not dt > 0.0:
        raise DomainError(f"dt must be > 0, got {dt}")
    kappa, theta, sigma = params.kappa, params.theta, params.sigma
    beta = math.exp(-kappa * dt)
    one_minus = -math.expm1(-kappa * dt)
    s2 = sigma * sigma
    return StateTransition(
        alpha=theta * one_minus,
        beta=beta,
        eta_sq_base=theta * s2 * one_minus * one_minus / (2.0 * kappa),
        eta_sq_slope=s2 * (beta - beta * beta) / kappa,
    )


def make_measurement_model(params: CirParams, horizon: float, w: float) -> MeasurementModel:
    """Observation coefficients a = A(horizon), b = -B(horizon), noise sd ``w``.

    A zero horizon would give b = 0 and an uninformative observation, which
    is rejected as degenerate.
    """
    if not horizon > 0.0:
        raise DegenerateModelError(
            f"measurement horizon must be > 0, got {horizon}"
        )
    coefs = affine_coefficients(params, horizon)
    return MeasurementModel(a_obs=coefs.a_coef, b_obs=-coefs.b_coef, w=w)


def predict(state: FilterState, trans: StateTransition) -> tuple[float, float]:
    """Forecast step: propagate the filtered state one step ahead.

    Returns (lam_{t|t-1}, v_{t|t-1}) with the state-noise variance evaluated
    at the filtered intensity, floored at zero so the variance stays valid
    when the estimate dips negative.
    """
    lam_pred = trans.alpha + trans.beta * state.lambda_filtered
    v_pred = trans.beta * trans.beta * state.variance + trans.eta_sq(state.lambda_filtered)
    return lam_pred, v_pred


def update(
    predicted: tuple[float, float],
    y_obs: float,
    meas: MeasurementModel,
    t_index: int = 0,
) -> FilterStep:
    """Measurement update from one observation of the log no-event probability."""
    lam_pred, v_pred = predicted
    if v_pred < 0.0:
        raise DomainError(f"predicted variance must be >= 0, got {v_pred}")
    a, b, w = meas.a_obs, meas.b_obs, meas.w
    psi = w * w + b * b * v_pred
    if psi <= 0.0:
        raise SingularUpdateError(
            "innovation variance is zero (w = 0 and predicted variance = 0)"
        )
    innovation = y_obs - a - b * lam_pred
    gain = b * v_pred / psi
    lam_filt = lam_pred + gain * innovation
    # (1 - Kb) v equals v * w^2 / psi >= 0; clear rounding dust below zero.
    v_filt = max((1.0 - gain * b) * v_pred, 0.0)
    return FilterStep(
        predicted_lambda=lam_pred,
        predicted_variance=v_pred,
        innovation=innovation,
        innovation_variance=psi,
        gain=gain,
        updated=FilterState(lambda_filtered=lam_filt, variance=v_filt, t_index=t_index),
    )


def _validate_y(y_series) -> np.ndarray:
    # y values are log no-event probabilities, nominally <= 0; positive
    # values are tolerated because the Gaussian measurement noise produces
    # them legitimately in simulation studies.
    y = np.asarray(y_series, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise InsufficientDataError("y_series must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(y)):
        raise DomainError("y_series contains non-finite values")
    return y


def filter_series(
    y_series,
    params: CirParams,
    w: float,
    dt: float,
    init: FilterState | None = None,
) -> tuple[list[FilterStep], float]:
    """Run the filter over a series of log no-event probabilities.

    Returns one :class:`FilterStep` per observation and the prediction-error
    log-likelihood (additive constants omitted). Resuming from the last
    step's ``updated`` state reproduces the batch run exactly.
    """
    y = _validate_y(y_series)
    if w < 0.0 or not math.isfinite(w):
        raise DomainError(f"w must be >= 0 and finite, got {w}")
    init = DEFAULT_INIT if init is None else init
    trans = make_state_transition(params, dt)
    meas = make_measurement_model(params, dt, w)
    out = _kernels.kf_filter_trace(
        y,
        meas.a_obs,
        meas.b_obs,
        w * w,
        trans.alpha,
        trans.beta,
        trans.eta_sq_base,
        trans.eta_sq_slope,
        init.lambda_filtered,
        init.variance,
    )
    lam_pred, v_pred, innov, psi, gain, lam_filt, v_filt, loglik = out
    if not np.all(psi > 0.0):
        raise SingularUpdateError("innovation variance hit zero during filtering")
    steps = [
        FilterStep(
            predicted_lambda=lam_pred[i],
            predicted_variance=v_pred[i],
            innovation=innov[i],
            innovation_variance=psi[i],
            gain=gain[i],
            updated=FilterState(
                lambda_filtered=lam_filt[i],
                variance=v_filt[i],
                t_index=init.t_index + i + 1,
            ),
        )
        for i in range(y.size)
    ]
    return steps, float(loglik)


def write_filter_trace_csv(path, y_series, steps: list[FilterStep], t0: int = 1) -> None:
    """Persist a filter trace as CSV (t, y, lambda_pred, lambda_filt, v_filt, innovation)."""
    y = np.asarray(y_series, dtype=float)
    rows = np.column_stack(
        [
            np.arange(t0, t0 + y.size, dtype=float),
            y,
            [s.predicted_lambda for s in steps],
            [s.updated.lambda_filtered for s in steps],
            [s.updated.variance for s in steps],
            [s.innovation for s in steps],
        ]
    )
    np.savetxt(
        path,
        rows,
        fmt="%.17g",
        delimiter=",",
        header="t,y,lambda_pred,lambda_filt,v_filt,innovation",
        comments="",
    )


@dataclass(frozen=True)
class OptConfig:
    """Deterministic settings for the simplex search.

    ``fix_w`` pins the measurement noise instead of estimating it (useful
    for diagnostics; ``fix_w=0`` exposes degenerate data immediately).
    """

    n_starts: int = 5
    max_iter: int = 2000
    xatol: float = 1e-8
    fatol: float = 1e-8
    fix_w: float | None = None


@dataclass(frozen=True)
class CalibrationResult:
    """Outcome of quasi-maximum-likelihood calibration."""

    params: CirParams
    w: float
    log_likelihood: float
    converged: bool
    n_iterations: int
    n_obs: int
    starts: tuple = field(default=(), repr=False)

    def to_json_dict(self) -> dict:
        return {
            "kappa": self.params.kappa,
            "theta": self.params.theta,
            "sigma": self.params.sigma,
            "w": self.w,
            "loglik": self.log_likelihood,
            "converged": self.converged,
            "n_obs": self.n_obs,
        }


# Box constraints (in log space) keeping the simplex out of the absurd
# corners where the quasi-likelihood of a short series goes flat: rates
# above 20/step or volatilities outside [1e-6, 10] have no meaning on a
# per-transaction clock.
_LOG_LO = np.log(np.array([1e-4, 1e-8, 1e-6, 1e-8]))
_LOG_HI = np.log(np.array([20.0, 10.0, 10.0, 10.0]))


def _neg_loglik_factory(y: np.ndarray, dt: float, init: FilterState, fix_w: float | None):
    lam0 = init.lambda_filtered
    v0 = init.variance
    n_free = 3 if fix_w is not None else 4
    lo = _LOG_LO[:n_free]
    hi = _LOG_HI[:n_free]

    def neg_loglik(x: np.ndarray) -> float:
        if np.any(x < lo) or np.any(x > hi):
            return 1e12
        kappa = math.exp(x[0])
        theta = math.exp(x[1])
        sigma = math.exp(x[2])
        w = fix_w if fix_w is not None else math.exp(x[3])
        beta = math.exp(-kappa * dt)
        one_minus = -math.expm1(-kappa * dt)
        s2 = sigma * sigma
        alpha = theta * one_minus
        eta0 = theta * s2 * one_minus * one_minus / (2.0 * kappa)
        eta1 = s2 * (beta - beta * beta) / kappa
        coefs = affine_coefficients(CirParams(kappa, theta, sigma), dt)
        ll = _kernels.kf_loglik(
            y, coefs.a_coef, -coefs.b_coef, w * w, alpha, beta, eta0, eta1, lam0, v0
        )
        if not math.isfinite(ll):
            return 1e12
        return -ll

    return neg_loglik


def _starting_points(y: np.ndarray, dt: float, config: OptConfig) -> list[np.ndarray]:
    """Deterministic multi-start grid anchored on crude data scales.

    For small rates y ~ -lam*dt, so -mean(y)/dt anchors theta; std(y)
    anchors the measurement noise. Volatility starts are expressed through
    the Feller ratio sigma^2 / (2 kappa theta).
    """
    theta_anchor = max(float(np.mean(-y)) / dt, 1e-8)
    w_anchor = max(float(np.std(y)), 1e-8)
    grid = [
        (0.5, theta_anchor, 0.50, 0.5 * w_anchor),
        (0.05, theta_anchor, 0.80, 1.0 * w_anchor),
        (1.0, theta_anchor, 0.50, 0.25 * w_anchor),
        (0.15, 2.0 * theta_anchor, 1.00, 1.0 * w_anchor),
        (0.25, max(theta_anchor / 3.0, 1e-8), 0.40, 2.0 * w_anchor),
    ]
    starts = []
    for kappa, theta, feller_frac, w in grid[: config.n_starts]:
        sigma = math.sqrt(feller_frac * 2.0 * kappa * theta)
        point = [math.log(kappa), math.log(theta), math.log(sigma)]
        if config.fix_w is None:
            point.append(math.log(w))
        starts.append(np.array(point))
    return starts


def calibrate(
    y_series,
    dt: float,
    init: FilterState | None = None,
    opt_config: OptConfig | None = None,
) -> CalibrationResult:
    """Estimate (kappa, theta, sigma, w) by maximizing the filter likelihood.

    Positivity is enforced through log-reparameterization and the search is
    a deterministic multi-start Nelder-Mead simplex; non-convergence is
    reported through the ``converged`` flag rather than raised.
    """
    y = _validate_y(y_series)
    if y.size < _MIN_CALIBRATION_OBS:
        raise InsufficientDataError(
            f"calibration needs at least {_MIN_CALIBRATION_OBS} observations, got {y.size}"
        )
    if float(np.ptp(y)) == 0.0:
        raise DegenerateDataError("y_series is constant; parameters are not identifiable")
    if not dt > 0.0:
        raise DomainError(f"dt must be > 0, got {dt}")
    init = DEFAULT_INIT if init is None else init
    config = opt_config or OptConfig()
    if config.fix_w is not None and config.fix_w < 0.0:
        raise DomainError(f"fix_w must be >= 0, got {config.fix_w}")

    objective = _neg_loglik_factory(y, dt, init, config.fix_w)
    best = None
    start_summaries = []
    for x0 in _starting_points(y, dt, config):
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "xatol": config.xatol,
                "fatol": config.fatol,
                "maxiter": config.max_iter,
                "disp": False,
            },
        )
        start_summaries.append((float(res.fun), int(res.nit), bool(res.success)))
        if best is None or res.fun < best.fun:
            best = res
    assert best is not None

    kappa, theta, sigma = (math.exp(v) for v in best.x[:3])
    w = config.fix_w if config.fix_w is not None else math.exp(best.x[3])
    loglik = -float(best.fun)
    converged = bool(best.success) and math.isfinite(loglik) and loglik > -1e11
    return CalibrationResult(
        params=CirParams(kappa, theta, sigma),
        w=w,
        log_likelihood=loglik,
        converged=converged,
        n_iterations=int(best.nit),
        n_obs=int(y.size),
        starts=tuple(start_summaries),
    )


def y_from_risk_scores(risk_scores) -> np.ndarray:
    """Map per-transaction risk scores r in [0, 1) to y = log(1 - r).

    Scores are clamped into [0, 1 - 1e-9] first so a score of exactly 1
    cannot produce log(0).
    """
    r = np.asarray(risk_scores, dtype=float)
    if r.size == 0:
        raise InsufficientDataError("risk_scores must be nonempty")
    if not np.all(np.isfinite(r)):
        raise DomainError("risk_scores contain non-finite values")
    clamped = np.clip(r, 0.0, 1.0 - _SCORE_CLAMP)
    return np.log1p(-clamped)
