"""Synthetic transaction cohorts.

Stands in for the proprietary transaction data: each client gets a simulated
intensity path, per-transaction fraud labels drawn as Bernoulli(1 -
exp(-lambda_i)) after scaling the path so the expected fraud proportion hits
the requested target, and risk scores built from a logit mixture of the
label signal and Gaussian noise, with the mixing weight solved per client so
the realized point-biserial correlation matches the requested level.

Clients are binned by their *realized* fraud proportion into imbalance
groups; clients that draw zero or only fraud labels are recycled. All
randomness flows from one root seed through spawned generators, so a cohort
is a deterministic function of its configuration.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from . import _kernels
from .cir import CirParams
from .errors import CohortError, DomainError, GenerationError

__all__ = [
    "TransactionSeries",
    "CohortConfig",
    "Cohort",
    "ClientDraw",
    "generate_client",
    "generate_cohort",
    "save_cohort",
    "load_cohort",
    "point_biserial",
]

#: Upper clamp keeping risk scores strictly below 1.
_SCORE_CEIL = 1.0 - 1e-9

#: Logit intercept / scale of the score model; the intercept keeps the score
#: distribution small and right-skewed (median well under 0.05).
_SCORE_LOGIT_LOC = -4.0
_SCORE_LOGIT_SCALE = 0.8

#: Largest label bump (in logits) the correlation solver may use; scores of
#: fraud transactions saturate well below 1 at this bound.
_MAX_LABEL_BUMP = 30.0

#: Default share of the scores' non-label variance that tracks the latent
#: intensity (the serial component a per-transaction risk estimate carries).
DEFAULT_INTENSITY_WEIGHT = 0.55

_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TransactionSeries:
    """Ordered per-client stream of timestamps, risk scores, and labels."""

    client_id: str
    timestamps: np.ndarray = field(repr=False)
    risk_scores: np.ndarray = field(repr=False)
    labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=float)
        rs = np.asarray(self.risk_scores, dtype=float)
        if ts.ndim != 1 or ts.size == 0:
            raise DomainError("timestamps must be a nonempty 1-d array")
        if rs.shape != ts.shape:
            raise DomainError("risk_scores must match timestamps in length")
        if np.any(np.diff(ts) <= 0.0):
            raise DomainError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(rs)) or rs.min() < 0.0 or rs.max() >= 1.0:
            raise DomainError("risk scores must lie in [0, 1)")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "risk_scores", rs)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != ts.shape:
                raise DomainError("labels must match timestamps in length")
            if not np.all((lab == 0) | (lab == 1)):
                raise DomainError("labels must be 0 or 1")
            object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return self.timestamps.size

    def slice(self, start: int, stop: int) -> "TransactionSeries":
        """Order-preserving sub-series over [start, stop)."""
        return TransactionSeries(
            client_id=self.client_id,
            timestamps=self.timestamps[start:stop],
            risk_scores=self.risk_scores[start:stop],
            labels=None if self.labels is None else self.labels[start:stop],
        )


#: Fraud-proportion bin upper bounds of the seven imbalance groups.
DEFAULT_GROUP_BOUNDARIES = (0.004, 0.006, 0.01, 0.05, 0.08, 0.1, 0.15)


@dataclass(frozen=True)
class CohortConfig:
    """Settings for cohort generation."""

    n_clients_per_group: int = 200
    group_boundaries: tuple = DEFAULT_GROUP_BOUNDARIES
    n_tx_range: tuple = (800, 2000)
    kappa_range: tuple = (0.05, 0.15)
    feller_frac_range: tuple = (0.7, 0.95)
    theta_base: float = 0.03
    rho_target: float = 0.8
    intensity_weight: float = DEFAULT_INTENSITY_WEIGHT
    seed: int = 0
    max_attempts_factor: int = 80

    def __post_init__(self) -> None:
        bounds = tuple(float(b) for b in self.group_boundaries)
        if len(bounds) == 0 or any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
            raise DomainError("group boundaries must be strictly increasing")
        if bounds[0] <= 0.0 or bounds[-1] > 0.15:
            raise DomainError("group boundaries must lie within (0, 0.15]")
        object.__setattr__(self, "group_boundaries", bounds)
        if self.n_clients_per_group < 1:
            raise DomainError("n_clients_per_group must be >= 1")
        lo, hi = self.n_tx_range
        if lo < 50 or hi < lo:
            raise DomainError("n_tx_range must satisfy 50 <= lo <= hi")
        if not 0.0 <= self.rho_target <= 0.95:
            raise DomainError("rho_target must be in [0, 0.95]")
        klo, khi = self.kappa_range
        if not 0.0 < klo <= khi:
            raise DomainError("kappa_range must be positive and ordered")
        # Fractions above 1 violate the strict-positivity condition on
        # purpose: they give bursty paths touching zero, which the exact
        # sampler handles.
        flo, fhi = self.feller_frac_range
        if not 0.0 < flo <= fhi <= 4.0:
            raise DomainError("feller_frac_range must lie in (0, 4]")
        if not self.theta_base > 0.0:
            raise DomainError("theta_base must be > 0")
        if not 0.0 <= self.intensity_weight <= 1.0:
            raise DomainError("intensity_weight must be in [0, 1]")

    @property
    def n_groups(self) -> int:
        return len(self.group_boundaries)


@dataclass(frozen=True)
class ClientDraw:
    """A generated client plus the ground truth behind it."""

    series: TransactionSeries
    true_params: CirParams
    scale: float
    realized_prop: float
    realized_rho: float
    n_fraud: int


@dataclass(frozen=True)
class Cohort:
    """Clients grouped by realized fraud proportion, with generation metadata."""

    groups: dict  # group number (1-based) -> list[TransactionSeries]
    manifest: dict  # client_id -> metadata dict
    config: CohortConfig

    def all_clients(self):
        for g in sorted(self.groups):
            yield from self.groups[g]


def point_biserial(scores, labels) -> float:
    """Pearson correlation between a continuous score and a 0/1 label."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.std() == 0.0 or labels.std() == 0.0:
        return float("nan")
    return float(np.corrcoef(scores, labels)[0, 1])


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _solve_scale(path: np.ndarray, target_prop: float) -> float:
    """Scale s such that mean(1 - exp(-s * path)) equals target_prop."""

    def excess(s: float) -> float:
        return float(np.mean(-np.expm1(-s * path))) - target_prop

    hi = 1.0
    for _ in range(200):
        if excess(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise GenerationError(
            f"cannot reach fraud proportion {target_prop}: intensity path too degenerate"
        )
    return brentq(excess, 0.0, hi, xtol=1e-14, rtol=1e-12)


def _standardize(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    if sd == 0.0:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def _scores_for_labels(
    labels: np.ndarray,
    intensity: np.ndarray,
    noise: np.ndarray,
    rho_target: float,
    intensity_weight: float,
) -> tuple[np.ndarray, float]:
    """Risk scores hitting the requested label correlation on this sample.

    Scores are expit of a logit mixture: a smooth background that tracks the
    latent intensity (a per-transaction risk estimate follows the client's
    current risk level, which is what gives scores their serial structure)
    plus centered white noise, and a bounded bump on fraud transactions:

        z = loc + scale * (u * intensity~ + sqrt(1-u^2) * noise)
                + bump * (labels - mean(labels))

    The bump size is solved so the realized point-biserial correlation
    equals rho_target; expit saturation keeps even bumped scores well below
    1. ``rho_target == 0`` demands scores independent of the labels, so both
    signal channels are switched off (the intensity is label information
    too, through the thinning).
    """
    if rho_target == 0.0:
        z = _SCORE_LOGIT_LOC + _SCORE_LOGIT_SCALE * noise
        return np.minimum(expit(z), _SCORE_CEIL), 0.0

    u = intensity_weight
    background = u * _standardize(intensity) + np.sqrt(max(1.0 - u * u, 0.0)) * noise
    centered_labels = labels - labels.mean()

    def scores_at(bump: float) -> np.ndarray:
        z = _SCORE_LOGIT_LOC + _SCORE_LOGIT_SCALE * background + bump * centered_labels
        return np.minimum(expit(z), _SCORE_CEIL)

    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        return scores_at(0.0), 0.0

    def gap(bump: float) -> float:
        return point_biserial(scores_at(bump), labels) - rho_target

    if gap(_MAX_LABEL_BUMP) <= 0.0 or gap(0.0) >= 0.0:
        raise GenerationError(
            f"target correlation {rho_target} unreachable for this label draw"
        )
    bump = brentq(gap, 0.0, _MAX_LABEL_BUMP, xtol=1e-9)
    return scores_at(bump), bump


def _draw_client(
    params: CirParams,
    n_tx: int,
    target_prop: float,
    rho_target: float,
    rng: np.random.Generator,
    client_id: str,
    intensity_weight: float = DEFAULT_INTENSITY_WEIGHT,
) -> ClientDraw:
    path = _kernels.cir_exact_path(
        rng, params.theta, params.kappa, params.theta, params.sigma, 1.0, n_tx - 1
    )
    scale = _solve_scale(path, target_prop)
    probs = -np.expm1(-scale * path)
    labels = (rng.random(n_tx) < probs).astype(np.int64)
    noise = rng.standard_normal(n_tx)
    scores, _ = _scores_for_labels(labels, scale * path, noise, rho_target, intensity_weight)
    series = TransactionSeries(
        client_id=client_id,
        timestamps=np.arange(n_tx, dtype=float),
        risk_scores=scores,
        labels=labels,
    )
    true_params = CirParams(
        kappa=params.kappa,
        theta=scale * params.theta,
        sigma=np.sqrt(scale) * params.sigma,
    )
    return ClientDraw(
        series=series,
        true_params=true_params,
        scale=scale,
        realized_prop=float(labels.mean()),
        realized_rho=point_biserial(scores, labels),
        n_fraud=int(labels.sum()),
    )


def generate_client(
    params: CirParams,
    n_tx: int,
    target_prop: float,
    rho_target: float,
    seed,
    client_id: str = "client-0",
    intensity_weight: float = DEFAULT_INTENSITY_WEIGHT,
) -> TransactionSeries:
    """One synthetic client: intensity-driven labels plus correlated scores."""
    if n_tx < 50:
        raise DomainError(f"n_tx must be >= 50, got {n_tx}")
    if not 0.0 < target_prop < 0.5:
        raise DomainError(f"target_prop must be in (0, 0.5), got {target_prop}")
    if not 0.0 <= rho_target <= 0.95:
        raise DomainError(f"rho_target must be in [0, 0.95], got {rho_target}")
    if not 0.0 <= intensity_weight <= 1.0:
        raise DomainError(f"intensity_weight must be in [0, 1], got {intensity_weight}")
    rng = _as_rng(seed)
    return _draw_client(
        params, int(n_tx), target_prop, rho_target, rng, client_id, intensity_weight
    ).series


def generate_cohort(config: CohortConfig) -> Cohort:
    """Fill every imbalance group with clients binned by realized proportion.

    Each attempt targets the emptiest group's bin midpoint; the drawn client
    lands in whichever bin its realized fraud proportion actually falls
    into. Clients with no fraud labels, only fraud labels, or a proportion
    beyond the last boundary are discarded and redrawn.
    """
    bounds = config.group_boundaries
    n_groups = config.n_groups
    quota = config.n_clients_per_group
    groups: dict[int, list[TransactionSeries]] = {g: [] for g in range(1, n_groups + 1)}
    manifest: dict[str, dict] = {}
    root = np.random.SeedSequence(config.seed)
    max_attempts = config.max_attempts_factor * quota * n_groups

    for attempt in range(max_attempts):
        unfilled = [g for g in range(1, n_groups + 1) if len(groups[g]) < quota]
        if not unfilled:
            break
        target_group = min(unfilled, key=lambda g: (len(groups[g]), g))
        lo = bounds[target_group - 2] if target_group > 1 else 0.0
        hi = bounds[target_group - 1]
        target_prop = 0.5 * (lo + hi)

        rng = np.random.default_rng(root.spawn(1)[0])
        kappa = rng.uniform(*config.kappa_range)
        feller_frac = rng.uniform(*config.feller_frac_range)
        theta = config.theta_base
        params = CirParams(kappa, theta, np.sqrt(feller_frac * 2.0 * kappa * theta))
        n_tx = int(rng.integers(config.n_tx_range[0], config.n_tx_range[1] + 1))
        try:
            draw = _draw_client(
                params, n_tx, target_prop, config.rho_target, rng, "pending",
                config.intensity_weight,
            )
        except GenerationError:
            continue
        if draw.n_fraud == 0 or draw.n_fraud == n_tx:
            continue
        idx = int(np.searchsorted(bounds, draw.realized_prop, side="left")) + 1
        if idx > n_groups or len(groups[idx]) >= quota:
            continue
        client_id = f"g{idx}-c{len(groups[idx]):04d}"
        series = TransactionSeries(
            client_id=client_id,
            timestamps=draw.series.timestamps,
            risk_scores=draw.series.risk_scores,
            labels=draw.series.labels,
        )
        groups[idx].append(series)
        manifest[client_id] = {
            "group": idx,
            "kappa": draw.true_params.kappa,
            "theta": draw.true_params.theta,
            "sigma": draw.true_params.sigma,
            "scale": draw.scale,
            "target_prop": target_prop,
            "realized_prop": draw.realized_prop,
            "rho_target": config.rho_target,
            "realized_rho": draw.realized_rho,
            "n_tx": n_tx,
            "attempt": attempt,
        }
    else:
        short = {g: quota - len(groups[g]) for g in groups if len(groups[g]) < quota}
        raise CohortError(f"could not fill groups {short} within {max_attempts} attempts")

    return Cohort(groups=groups, manifest=manifest, config=config)


def save_cohort(cohort: Cohort, out_dir) -> None:
    """Persist one ``t,risk_score,label`` CSV per client plus a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for series in cohort.all_clients():
        rows = np.column_stack(
            [series.timestamps, series.risk_scores, series.labels.astype(float)]
        )
        np.savetxt(
            out / f"{series.client_id}.csv",
            rows,
            fmt=["%.17g", "%.17g", "%d"],
            delimiter=",",
            header="t,risk_score,label",
            comments="",
        )
    doc = {
        "schema_version": _SCHEMA_VERSION,
        "config": asdict(cohort.config),
        "clients": cohort.manifest,
    }
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_cohort(in_dir) -> Cohort:
    """Load a cohort saved by :func:`save_cohort`."""
    src = Path(in_dir)
    manifest_path = src / "manifest.json"
    if not manifest_path.exists():
        raise CohortError(f"no manifest.json under {src}")
    doc = json.loads(manifest_path.read_text())
    if doc.get("schema_version") != _SCHEMA_VERSION:
        raise CohortError(f"unsupported cohort schema: {doc.get('schema_version')!r}")
    cfg_raw = doc["config"]
    config = CohortConfig(
        **{
            **cfg_raw,
            "group_boundaries": tuple(cfg_raw["group_boundaries"]),
            "n_tx_range": tuple(cfg_raw["n_tx_range"]),
            "kappa_range": tuple(cfg_raw["kappa_range"]),
            "feller_frac_range": tuple(cfg_raw["feller_frac_range"]),
        }
    )
    groups: dict[int, list[TransactionSeries]] = {
        g: [] for g in range(1, config.n_groups + 1)
    }
    for client_id, meta in sorted(doc["clients"].items()):
        data = np.loadtxt(src / f"{client_id}.csv", delimiter=",", skiprows=1, ndmin=2)
        series = TransactionSeries(
            client_id=client_id,
            timestamps=data[:, 0],
            risk_scores=data[:, 1],
            labels=data[:, 2].astype(np.int64),
        )
        groups[int(meta["group"])].append(series)
    return Cohort(groups=groups, manifest=doc["clients"], config=config)
