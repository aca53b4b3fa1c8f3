"""Hot numerical kernels: exact CIR transition sampling and the Kalman recursion.

Each kernel is written as a plain scalar loop over numpy float64 values and
compiled with numba when that backend is active (see ``_backend``). The
``*_py`` and ``*_jit`` twins of every kernel consume the shared
``numpy.random.Generator`` through the same calls in the same order, so both
backends produce bitwise-identical output.

Transition law used by the exact samplers: conditionally on lam_prev, the
intensity after a step dt equals c * W with

    c  = sigma^2 * (1 - exp(-kappa*dt)) / (4*kappa)
    W ~ noncentral chi-square(df = 4*kappa*theta/sigma^2,
                              nonc = lam_prev * exp(-kappa*dt) / c)

which reproduces the conditional mean exp(-kappa*dt)*lam_prev +
theta*(1-exp(-kappa*dt)) and the matching conditional variance, and never
leaves [0, inf).
"""

from __future__ import annotations

import math

import numpy as np

from ._backend import ACTIVE, jit_if_available

_NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# CIR samplers
# ---------------------------------------------------------------------------

def _cir_exact_path(rng, lam0, kappa, theta, sigma, dt, n_steps):
    """Exact transition sampling of one intensity path; returns n_steps+1 values."""
    q = math.exp(-kappa * dt)
    c = -sigma * sigma * math.expm1(-kappa * dt) / (4.0 * kappa)
    df = 4.0 * kappa * theta / (sigma * sigma)
    out = np.empty(n_steps + 1)
    out[0] = lam0
    lam = lam0
    for i in range(1, n_steps + 1):
        lam = c * rng.noncentral_chisquare(df, lam * q / c)
        out[i] = lam
    return out


def _cir_euler_path(rng, lam0, kappa, theta, sigma, dt, n_steps):
    """Full-truncation Euler-Maruyama path; cross-check scheme, may go negative."""
    sqdt = math.sqrt(dt)
    out = np.empty(n_steps + 1)
    out[0] = lam0
    lam = lam0
    for i in range(1, n_steps + 1):
        pos = lam if lam > 0.0 else 0.0
        lam = lam + kappa * (theta - pos) * dt + sigma * math.sqrt(pos) * sqdt * rng.standard_normal()
        out[i] = lam
    return out


def _cir_mc_batch(rng, lam0, kappa, theta, sigma, dt, n_steps, n_paths):
    """Per-path trapezoid integral of the intensity and its terminal value.

    Paths all start at lam0 and use exact transitions; draws are consumed
    path-major so results are independent of n_paths for a path prefix.
    """
    q = math.exp(-kappa * dt)
    c = -sigma * sigma * math.expm1(-kappa * dt) / (4.0 * kappa)
    df = 4.0 * kappa * theta / (sigma * sigma)
    integrals = np.empty(n_paths)
    terminals = np.empty(n_paths)
    for p in range(n_paths):
        lam = lam0
        acc = 0.0
        for i in range(n_steps):
            nxt = c * rng.noncentral_chisquare(df, lam * q / c)
            acc += 0.5 * (lam + nxt) * dt
            lam = nxt
        integrals[p] = acc
        terminals[p] = lam
    return integrals, terminals


# ---------------------------------------------------------------------------
# Kalman recursion
# ---------------------------------------------------------------------------

def _kf_filter_trace(y, a, b, w2, alpha, beta, eta0, eta1, lam0, v0):
    """Full filter pass; returns every intermediate plus the log-likelihood.

    State:        lam_t = alpha + beta*lam_{t-1} + eps,  Var eps = eta0 + eta1*max(lam,0)
    Measurement:  y_t   = a + b*lam_t + noise,           Var noise = w2
    Log-likelihood is the prediction-error form -0.5*sum(log psi + e^2/psi).
    """
    n = y.shape[0]
    lam_pred = np.empty(n)
    v_pred = np.empty(n)
    innov = np.empty(n)
    psi = np.empty(n)
    gain = np.empty(n)
    lam_filt = np.empty(n)
    v_filt = np.empty(n)
    lam = lam0
    v = v0
    ll = 0.0
    for t in range(n):
        lp = alpha + beta * lam
        floored = lam if lam > 0.0 else 0.0
        vp = beta * beta * v + eta0 + eta1 * floored
        e = y[t] - a - b * lp
        ps = w2 + b * b * vp
        k = b * vp / ps
        lam = lp + k * e
        v = (1.0 - k * b) * vp
        if v < 0.0:  # (1-Kb)*vp equals vp*w2/ps >= 0; clear rounding dust
            v = 0.0
        ll += -0.5 * math.log(ps) - 0.5 * e * e / ps
        lam_pred[t] = lp
        v_pred[t] = vp
        innov[t] = e
        psi[t] = ps
        gain[t] = k
        lam_filt[t] = lam
        v_filt[t] = v
    return lam_pred, v_pred, innov, psi, gain, lam_filt, v_filt, ll


def _kf_loglik(y, a, b, w2, alpha, beta, eta0, eta1, lam0, v0):
    """Prediction-error log-likelihood only; lean loop for the calibrator."""
    n = y.shape[0]
    lam = lam0
    v = v0
    ll = 0.0
    for t in range(n):
        lp = alpha + beta * lam
        floored = lam if lam > 0.0 else 0.0
        vp = beta * beta * v + eta0 + eta1 * floored
        e = y[t] - a - b * lp
        ps = w2 + b * b * vp
        if not (ps > 0.0 and math.isfinite(ps)):
            return _NEG_INF
        k = b * vp / ps
        lam = lp + k * e
        v = (1.0 - k * b) * vp
        if v < 0.0:
            v = 0.0
        ll += -0.5 * math.log(ps) - 0.5 * e * e / ps
    return ll


# ---------------------------------------------------------------------------
# Backend binding
# ---------------------------------------------------------------------------

cir_exact_path_py = _cir_exact_path
cir_euler_path_py = _cir_euler_path
cir_mc_batch_py = _cir_mc_batch
kf_filter_trace_py = _kf_filter_trace
kf_loglik_py = _kf_loglik

cir_exact_path_jit = jit_if_available(_cir_exact_path)
cir_euler_path_jit = jit_if_available(_cir_euler_path)
cir_mc_batch_jit = jit_if_available(_cir_mc_batch)
kf_filter_trace_jit = jit_if_available(_kf_filter_trace)
kf_loglik_jit = jit_if_available(_kf_loglik)

if ACTIVE == "numba":
    cir_exact_path = cir_exact_path_jit
    cir_euler_path = cir_euler_path_jit
    cir_mc_batch = cir_mc_batch_jit
    kf_filter_trace = kf_filter_trace_jit
    kf_loglik = kf_loglik_jit
else:
    cir_exact_path = cir_exact_path_py
    cir_euler_path = cir_euler_path_py
    cir_mc_batch = cir_mc_batch_py
    kf_filter_trace = kf_filter_trace_py
    kf_loglik = kf_loglik_py
