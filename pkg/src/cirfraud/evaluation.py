"""Evaluation protocol: chronological splits, rolling predictions, ranking
metrics, and per-group median aggregation.

Every client is split 80/20 in transaction order, each model is fitted on
the training prefix and scores the test suffix one transaction ahead, and
the per-client ROC-AUC / average precision are summarized by their median
inside each imbalance group. The filter-based model follows the rolling
loop: predict the next transaction from the current filtered state, then
absorb that transaction's risk score into the filter; labels never enter.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import (
    fit_homogeneous,
    fit_poly_intensity,
    naive_predict,
    nhpp_loglik,
    poisson_predict,
    score_predict,
)
from .cir import fraud_probability
from .errors import (
    CirFraudError,
    CohortError,
    DomainError,
    InsufficientDataError,
    UndefinedMetricError,
)
from .shift import ShiftCorrection, corrected_prediction_params
from .statespace import (
    CalibrationResult,
    FilterState,
    calibrate,
    filter_series,
    make_measurement_model,
    make_state_transition,
    predict as kf_predict,
    update as kf_update,
    y_from_risk_scores,
)
from .synth import Cohort, TransactionSeries

__all__ = [
    "SplitSeries",
    "ExperimentConfig",
    "ExperimentReport",
    "KfFitted",
    "MODEL_NAMES",
    "chronological_split",
    "fit_kf",
    "rolling_kf_predictions",
    "roc_auc",
    "average_precision",
    "run_experiment",
    "write_report_files",
]

MODEL_NAMES = (
    "HomoPoisson",
    "LinearPoisson",
    "QuadraticPoisson",
    "NaiveApproach",
    "ScoreApproach",
    "KFApproach",
)


@dataclass(frozen=True)
class SplitSeries:
    """Chronological train prefix and test suffix of one client."""

    train: TransactionSeries
    test: TransactionSeries


def chronological_split(series: TransactionSeries, frac: float = 0.8) -> SplitSeries:
    """Order-preserving split at floor(frac * n)."""
    n = len(series)
    if n < 5:
        raise InsufficientDataError(f"series too short to split: {n} < 5")
    k = int(np.floor(frac * n))
    if k <= 0:
        raise DomainError(f"train split is empty for frac={frac}")
    if k >= n:
        raise DomainError(f"test split is empty for frac={frac}")
    return SplitSeries(train=series.slice(0, k), test=series.slice(k, n))


# ---------------------------------------------------------------------------
# Ranking metrics
# ---------------------------------------------------------------------------

def _validate_scored(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1 or scores.size == 0:
        raise DomainError("scores and labels must be matching nonempty 1-d arrays")
    if not np.all(np.isfinite(scores)):
        raise DomainError("scores must be finite")
    if not np.all((labels == 0) | (labels == 1)):
        raise DomainError("labels must be 0 or 1")
    return scores, labels.astype(bool)


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties replaced by the group mean rank."""
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    mean_rank = ends - (counts - 1) * 0.5
    return mean_rank[inverse]


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    scores, positive = _validate_scored(scores, labels)
    n_pos = int(positive.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("roc_auc needs both classes present")
    ranks = _midranks(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Step-wise area under the precision-recall curve, ties grouped.

    AP = sum_k (R_k - R_{k-1}) * P_k over descending distinct scores.
    """
    scores, positive = _validate_scored(scores, labels)
    n_pos = int(positive.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average_precision needs at least one positive")
    uniq, inverse = np.unique(scores, return_inverse=True)
    pos_per_score = np.bincount(inverse, weights=positive.astype(float))
    tot_per_score = np.bincount(inverse).astype(float)
    # Descending thresholds; sequential accumulation keeps the value exactly
    # reproducible by threshold-enumeration checks.
    ap = 0.0
    tp = 0.0
    seen = 0.0
    prev_recall = 0.0
    for j in range(uniq.size - 1, -1, -1):
        tp += pos_per_score[j]
        seen += tot_per_score[j]
        recall = tp / n_pos
        precision = tp / seen
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return float(ap)


# ---------------------------------------------------------------------------
# Fitted filter model and the rolling prediction loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KfFitted:
    """Everything the rolling loop needs: calibration, shift correction, and
    the filter state at the end of the training window."""

    calibration: CalibrationResult
    correction: ShiftCorrection
    end_state: FilterState
    train_filtered: np.ndarray = field(repr=False)
    dt: float = 1.0
    horizon: float = 1.0


def fit_kf(train: TransactionSeries, dt: float = 1.0, horizon: float = 1.0) -> KfFitted:
    """Calibrate on the training scores and prepare the shift correction."""
    y = y_from_risk_scores(train.risk_scores)
    calibration = calibrate(y, dt=dt)
    steps, _ = filter_series(y, calibration.params, calibration.w, dt=dt)
    filtered = np.array([s.updated.lambda_filtered for s in steps])
    correction = corrected_prediction_params(calibration.params, filtered, dt=dt)
    return KfFitted(
        calibration=calibration,
        correction=correction,
        end_state=steps[-1].updated,
        train_filtered=filtered,
        dt=dt,
        horizon=horizon,
    )


def rolling_kf_predictions(split: SplitSeries, fitted: KfFitted) -> list[tuple[float, int]]:
    """Score each test transaction from the state filtered through its
    predecessor, then absorb its risk score.

    Returns (probability, label) pairs; labels are never fed to the filter.
    """
    test = split.test
    if test.labels is None:
        raise DomainError("test series carries no labels to pair with predictions")
    calibration = fitted.calibration
    trans = make_state_transition(calibration.params, fitted.dt)
    meas = make_measurement_model(calibration.params, fitted.dt, calibration.w)
    y_test = y_from_risk_scores(test.risk_scores)
    state = fitted.end_state
    out: list[tuple[float, int]] = []
    for i in range(len(test)):
        lam = state.lambda_filtered + fitted.correction.alpha_shift
        prob = fraud_probability(fitted.correction.params, lam, fitted.horizon)
        out.append((prob, int(test.labels[i])))
        step = kf_update(kf_predict(state, trans), y_test[i], meas, t_index=state.t_index + 1)
        state = step.updated
    return out


# ---------------------------------------------------------------------------
# Per-client model scoring
# ---------------------------------------------------------------------------

def _train_event_times(train: TransactionSeries) -> tuple[np.ndarray, float]:
    if train.labels is None:
        raise DomainError("Poisson baselines need labelled training data")
    times = np.flatnonzero(train.labels).astype(float)
    return times, float(len(train))


def _score_homo(split: SplitSeries, config) -> np.ndarray:
    times, span = _train_event_times(split.train)
    rate = fit_homogeneous(times, span)
    n_train, n_test = len(split.train), len(split.test)
    return np.array(
        [poisson_predict(rate, float(n_train + i), config.horizon) for i in range(n_test)]
    )


def _score_poly(split: SplitSeries, config, degree: int) -> np.ndarray:
    times, span = _train_event_times(split.train)
    intensity = fit_poly_intensity(times, span, degree)
    n_train, n_test = len(split.train), len(split.test)
    return np.array(
        [poisson_predict(intensity, float(n_train + i), config.horizon) for i in range(n_test)]
    )


def _score_naive(split: SplitSeries, config) -> np.ndarray:
    p = naive_predict(split.train.labels)
    return np.full(len(split.test), p)


def _score_scores(split: SplitSeries, config) -> np.ndarray:
    return score_predict(split.test.risk_scores, split.train.risk_scores[-1])


def _score_kf(split: SplitSeries, config) -> np.ndarray:
    fitted = fit_kf(split.train, dt=config.dt, horizon=config.horizon)
    return np.array([p for p, _ in rolling_kf_predictions(split, fitted)])


_SCORERS = {
    "HomoPoisson": _score_homo,
    "LinearPoisson": lambda split, config: _score_poly(split, config, 1),
    "QuadraticPoisson": lambda split, config: _score_poly(split, config, 2),
    "NaiveApproach": _score_naive,
    "ScoreApproach": _score_scores,
    "KFApproach": _score_kf,
}


def serialize_baseline_fit(model: str, split: SplitSeries) -> dict:
    """Per-client JSON payload for a fitted Poisson-family baseline."""
    times, span = _train_event_times(split.train)
    if model == "HomoPoisson":
        rate = fit_homogeneous(times, span)
        loglik = float(times.size * np.log(max(rate, 1e-300)) - rate * span) if times.size else -0.0
        return {"model": model, "coeffs": [rate], "loglik": loglik}
    degree = {"LinearPoisson": 1, "QuadraticPoisson": 2}[model]
    intensity = fit_poly_intensity(times, span, degree)
    return {
        "model": model,
        "coeffs": list(intensity.coeffs),
        "loglik": nhpp_loglik(intensity, times, span),
    }


# ---------------------------------------------------------------------------
# Experiment runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    models: tuple = MODEL_NAMES
    train_frac: float = 0.8
    dt: float = 1.0
    horizon: float = 1.0

    def __post_init__(self) -> None:
        unknown = [m for m in self.models if m not in MODEL_NAMES]
        if unknown:
            raise DomainError(f"unknown models: {unknown}; valid: {list(MODEL_NAMES)}")
        if not self.models:
            raise DomainError("at least one model is required")
        object.__setattr__(self, "models", tuple(self.models))

    def digest(self) -> str:
        payload = json.dumps(
            {
                "models": list(self.models),
                "train_frac": self.train_frac,
                "dt": self.dt,
                "horizon": self.horizon,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ExperimentReport:
    """Per-client metrics, per-group medians, and run metadata."""

    per_client: dict
    per_group: dict
    metadata: dict

    def median(self, group: int, model: str, metric: str) -> float | None:
        return self.per_group[group][model][f"median_{metric}"]

    def to_json_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "per_group": {str(g): v for g, v in self.per_group.items()},
            "per_client": self.per_client,
        }

    def metric_table_csv(self, metric: str) -> str:
        """Rows = models, columns = groups; empty cell when undefined."""
        groups = sorted(self.per_group)
        lines = ["model," + ",".join(f"group{g}" for g in groups)]
        for model in self.metadata["models"]:
            cells = []
            for g in groups:
                value = self.per_group[g][model][f"median_{metric}"]
                cells.append("" if value is None else f"{value:.6f}")
            lines.append(model + "," + ",".join(cells))
        return "\n".join(lines) + "\n"

    def plot_points_csv(self, metric: str) -> str:
        """Long-format line data: one row per (group, model)."""
        lines = ["group,model,median_" + metric]
        for g in sorted(self.per_group):
            for model in self.metadata["models"]:
                value = self.per_group[g][model][f"median_{metric}"]
                if value is not None:
                    lines.append(f"{g},{model},{value:.6f}")
        return "\n".join(lines) + "\n"


def _evaluate_client(series: TransactionSeries, config: ExperimentConfig) -> dict:
    split = chronological_split(series, config.train_frac)
    results: dict[str, dict] = {}
    for model in config.models:
        entry: dict = {"auc": None, "ap": None, "error": None}
        try:
            scores = _SCORERS[model](split, config)
            labels = split.test.labels
            try:
                entry["auc"] = roc_auc(scores, labels)
            except UndefinedMetricError:
                pass
            try:
                entry["ap"] = average_precision(scores, labels)
            except UndefinedMetricError:
                pass
        except CirFraudError as exc:
            entry["error"] = f"{type(exc).__name__}: {exc}"
        results[model] = entry
    return results


def run_experiment(
    cohort: Cohort,
    models=None,
    config: ExperimentConfig | None = None,
    workers: int = 1,
) -> ExperimentReport:
    """Fit every model per client, compute both metrics, aggregate medians.

    Clients whose test window is single-class are excluded from the affected
    metric's median and counted in the group summary; per-client model
    failures are recorded, never fatal. Per-client work is independent, so
    ``workers > 1`` fans it out over processes; results are keyed by client,
    making the report deterministic given the cohort and configuration
    regardless of scheduling.
    """
    if config is None:
        config = ExperimentConfig(models=tuple(models) if models else MODEL_NAMES)
    elif models is not None:
        config = ExperimentConfig(
            models=tuple(models), train_frac=config.train_frac, dt=config.dt, horizon=config.horizon
        )

    all_series = list(cohort.all_clients())
    if workers > 1 and len(all_series) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(
                zip(
                    (s.client_id for s in all_series),
                    pool.map(_evaluate_client, all_series, [config] * len(all_series), chunksize=8),
                )
            )
    else:
        results = {s.client_id: _evaluate_client(s, config) for s in all_series}

    per_client: dict[str, dict] = {}
    per_group: dict[int, dict] = {}
    for group in sorted(cohort.groups):
        clients = cohort.groups[group]
        if not clients:
            raise CohortError(f"group {group} is empty")
        group_rows: dict[str, dict] = {}
        client_results = []
        for series in clients:
            result = results[series.client_id]
            per_client[series.client_id] = result
            client_results.append(result)
        any_evaluable = False
        for model in config.models:
            aucs = [r[model]["auc"] for r in client_results if r[model]["auc"] is not None]
            aps = [r[model]["ap"] for r in client_results if r[model]["ap"] is not None]
            n_failed = sum(1 for r in client_results if r[model]["error"] is not None)
            group_rows[model] = {
                "median_auc": float(np.median(aucs)) if aucs else None,
                "median_ap": float(np.median(aps)) if aps else None,
                "n_auc": len(aucs),
                "n_ap": len(aps),
                "n_failed": n_failed,
                "n_clients": len(clients),
            }
            if aucs or aps:
                any_evaluable = True
        if not any_evaluable:
            raise CohortError(f"group {group} has no evaluable clients")
        per_group[group] = group_rows

    metadata = {
        "models": list(config.models),
        "train_frac": config.train_frac,
        "dt": config.dt,
        "horizon": config.horizon,
        "config_hash": config.digest(),
        "cohort_seed": cohort.config.seed,
        "n_clients": sum(len(v) for v in cohort.groups.values()),
    }
    return ExperimentReport(per_client=per_client, per_group=per_group, metadata=metadata)


def write_report_files(report: ExperimentReport, out_dir) -> None:
    """Emit report.json, the two median tables, and the plot-point CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    (out / "table_auc.csv").write_text(report.metric_table_csv("auc"))
    (out / "table_ap.csv").write_text(report.metric_table_csv("ap"))
    (out / "plot_points_auc.csv").write_text(report.plot_points_csv("auc"))
    (out / "plot_points_ap.csv").write_text(report.plot_points_csv("ap"))


def load_report(path) -> ExperimentReport:
    """Read back a report.json written by :func:`write_report_files`."""
    doc = json.loads(Path(path).read_text())
    return ExperimentReport(
        per_client=doc["per_client"],
        per_group={int(g): v for g, v in doc["per_group"].items()},
        metadata=doc["metadata"],
    )
