"""Unsupervised fraud scoring on imbalanced transaction streams.

A mean-reverting square-root (CIR) stochastic intensity drives per-client
fraud arrivals; a Kalman filter tracks the latent intensity from
per-transaction risk scores and yields closed-form next-transaction fraud
probabilities. The package also ships baseline intensity models, a
synthetic cohort generator, and the evaluation harness comparing them.
"""

from ._backend import active_backend
from .cir import (
    AffineCoefficients,
    CirParams,
    IntensityPath,
    affine_coefficients,
    cir_mean,
    cir_variance,
    fraud_probability,
    simulate_mc_batch,
    simulate_path,
)
from .evaluation import (
    ExperimentConfig,
    ExperimentReport,
    KfFitted,
    MODEL_NAMES,
    SplitSeries,
    average_precision,
    chronological_split,
    fit_kf,
    roc_auc,
    rolling_kf_predictions,
    run_experiment,
    write_report_files,
)
from .baselines import (
    PolyIntensity,
    fit_homogeneous,
    fit_poly_intensity,
    naive_predict,
    poisson_predict,
    score_predict,
)
from .shift import (
    OlsEstimate,
    ShiftCorrection,
    ShiftedPath,
    choose_alpha,
    corrected_prediction_params,
    ols_reestimate,
    shift_path,
)
from .statespace import (
    CalibrationResult,
    FilterState,
    FilterStep,
    MeasurementModel,
    OptConfig,
    StateTransition,
    calibrate,
    filter_series,
    make_measurement_model,
    make_state_transition,
    predict,
    update,
    y_from_risk_scores,
)
from .synth import (
    Cohort,
    CohortConfig,
    TransactionSeries,
    generate_client,
    generate_cohort,
    load_cohort,
    point_biserial,
    save_cohort,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "active_backend",
    # cir
    "CirParams",
    "IntensityPath",
    "AffineCoefficients",
    "cir_mean",
    "cir_variance",
    "simulate_path",
    "simulate_mc_batch",
    "affine_coefficients",
    "fraud_probability",
    # statespace
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
    # shift
    "ShiftedPath",
    "OlsEstimate",
    "ShiftCorrection",
    "choose_alpha",
    "shift_path",
    "ols_reestimate",
    "corrected_prediction_params",
    # baselines
    "PolyIntensity",
    "fit_homogeneous",
    "fit_poly_intensity",
    "poisson_predict",
    "naive_predict",
    "score_predict",
    # synth
    "TransactionSeries",
    "CohortConfig",
    "Cohort",
    "generate_client",
    "generate_cohort",
    "save_cohort",
    "load_cohort",
    "point_biserial",
    # evaluation
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
