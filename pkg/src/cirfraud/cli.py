"""Command-line driver.

Subcommands: simulate | generate | calibrate | experiment | report.
Shared flags: --seed, --dt, --horizon, --out, --config (JSON file whose keys
pre-fill the subcommand's options; unknown keys are rejected). Exit codes:
0 ok, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cir import CirParams, simulate_path
from .errors import DataError, NumericalError
from .evaluation import (
    ExperimentConfig,
    MODEL_NAMES,
    load_report,
    run_experiment,
    write_report_files,
)
from .shift import corrected_prediction_params
from .statespace import FilterState, calibrate, filter_series, y_from_risk_scores
from .synth import CohortConfig, generate_cohort, load_cohort, save_cohort

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class UsageError(Exception):
    """Bad command-line usage detected after argparse."""


#: Intensity path parameter sets written by `simulate` when no override is
#: given: a base configuration and three one-parameter variations.
SIMULATE_SETS = (
    ("base", CirParams(kappa=0.4, theta=0.03, sigma=0.1), 0.04),
    ("high_mean", CirParams(kappa=0.4, theta=0.08, sigma=0.1), 0.04),
    ("fast_reversion", CirParams(kappa=2.0, theta=0.03, sigma=0.1), 0.04),
    ("low_vol", CirParams(kappa=0.4, theta=0.03, sigma=0.002), 0.04),
)


def _add_shared(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=None, help="root random seed")
    sub.add_argument("--dt", type=float, default=None, help="time step")
    sub.add_argument("--horizon", type=float, default=None, help="prediction horizon")
    sub.add_argument("--out", type=str, default=None, help="output directory")
    sub.add_argument("--config", type=str, default=None, help="JSON RunConfig file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cirfraud",
        description="Stochastic-intensity fraud scoring: simulation, synthetic cohorts, "
        "Kalman calibration, and the model-comparison experiment.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write intensity path CSVs")
    _add_shared(p)
    p.add_argument("--n", type=int, default=None, help="number of steps (default 10000)")

    p = sub.add_parser("generate", help="generate a synthetic cohort directory")
    _add_shared(p)
    p.add_argument("--clients", type=int, default=None, help="clients per group (default 200)")
    p.add_argument("--rho", type=float, default=None, help="score-label correlation target")
    p.add_argument("--tx-min", type=int, default=None, help="min transactions per client")
    p.add_argument("--tx-max", type=int, default=None, help="max transactions per client")
    p.add_argument(
        "--boundaries", type=str, default=None,
        help="comma-separated group upper bounds (default Table of seven bins)",
    )

    p = sub.add_parser("calibrate", help="calibrate each client of a cohort")
    _add_shared(p)
    p.add_argument("--cohort", type=str, required=True, help="cohort directory")
    p.add_argument("--init-lambda", type=float, default=None, help="initial intensity (default 0)")
    p.add_argument("--init-variance", type=float, default=None, help="initial variance (default 10)")

    p = sub.add_parser("experiment", help="run the full model-comparison protocol")
    _add_shared(p)
    p.add_argument("--cohort", type=str, required=True, help="cohort directory")
    p.add_argument("--models", type=str, default=None, help="comma-separated model names")
    p.add_argument("--frac", type=float, default=None, help="train fraction (default 0.8)")
    p.add_argument("--workers", type=int, default=None, help="parallel client workers (default 1)")

    p = sub.add_parser("report", help="re-emit tables and plot data from a report JSON")
    _add_shared(p)
    p.add_argument("--report", type=str, required=True, help="path to report.json")

    return parser


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """Resolve options as CLI flag > config file > built-in default."""
    file_values: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        try:
            file_values = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_values, dict):
            raise UsageError("config file must contain a JSON object")
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    merged = {}
    for key, default in defaults.items():
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            merged[key] = cli_value
        elif key in file_values:
            merged[key] = file_values[key]
        else:
            merged[key] = default
    return merged


def _cmd_simulate(args: argparse.Namespace) -> int:
    opts = _merge_config(args, {"seed": 0, "dt": 0.01, "n": 10000, "out": "simulated"})
    if opts["n"] < 1:
        raise UsageError(f"--n must be >= 1, got {opts['n']}")
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    for i, (name, params, lam0) in enumerate(SIMULATE_SETS):
        path = simulate_path(params, lam0, opts["dt"], opts["n"], seed=opts["seed"] + i)
        path.write_csv(out / f"path_{name}.csv")
    print(f"wrote {len(SIMULATE_SETS)} intensity paths to {out}")
    return EXIT_OK


def _cmd_generate(args: argparse.Namespace) -> int:
    defaults = {
        "seed": 0,
        "out": "cohort",
        "clients": 200,
        "rho": 0.8,
        "tx_min": 400,
        "tx_max": 1200,
        "boundaries": None,
    }
    opts = _merge_config(args, defaults)
    kwargs = dict(
        n_clients_per_group=opts["clients"],
        rho_target=opts["rho"],
        n_tx_range=(opts["tx_min"], opts["tx_max"]),
        seed=opts["seed"],
    )
    if opts["boundaries"]:
        raw = opts["boundaries"]
        bounds = tuple(float(b) for b in raw.split(",")) if isinstance(raw, str) else tuple(raw)
        kwargs["group_boundaries"] = bounds
    cohort = generate_cohort(CohortConfig(**kwargs))
    save_cohort(cohort, opts["out"])
    n = sum(len(v) for v in cohort.groups.values())
    print(f"wrote cohort of {n} clients in {len(cohort.groups)} groups to {opts['out']}")
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    defaults = {
        "seed": 0,
        "dt": 1.0,
        "out": "calibrated",
        "init_lambda": 0.0,
        "init_variance": 10.0,
    }
    opts = _merge_config(args, defaults)
    cohort = load_cohort(args.cohort)
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    init = FilterState(opts["init_lambda"], opts["init_variance"], 0)
    n_ok = 0
    n_fail = 0
    for series in cohort.all_clients():
        try:
            y = y_from_risk_scores(series.risk_scores)
            result = calibrate(y, dt=opts["dt"], init=init)
            steps, _ = filter_series(y, result.params, result.w, dt=opts["dt"], init=init)
            filtered = [s.updated.lambda_filtered for s in steps]
            correction = corrected_prediction_params(result.params, filtered, dt=opts["dt"])
        except Exception as exc:  # per-client isolation: log and continue
            print(f"calibration failed for {series.client_id}: {exc}", file=sys.stderr)
            n_fail += 1
            continue
        doc = result.to_json_dict()
        doc["shift"] = correction.to_json_dict()
        (out / f"{series.client_id}.params.json").write_text(json.dumps(doc, indent=2))
        n_ok += 1
    print(f"calibrated {n_ok} clients ({n_fail} failures) into {out}")
    return EXIT_OK


def _cmd_experiment(args: argparse.Namespace) -> int:
    defaults = {
        "seed": 0,
        "dt": 1.0,
        "horizon": 1.0,
        "out": "experiment",
        "models": None,
        "frac": 0.8,
        "workers": 1,
    }
    opts = _merge_config(args, defaults)
    cohort = load_cohort(args.cohort)
    models = MODEL_NAMES
    if opts["models"]:
        raw = opts["models"]
        models = tuple(m.strip() for m in raw.split(",")) if isinstance(raw, str) else tuple(raw)
    config = ExperimentConfig(
        models=models, train_frac=opts["frac"], dt=opts["dt"], horizon=opts["horizon"]
    )
    report = run_experiment(cohort, config=config, workers=opts["workers"])
    write_report_files(report, opts["out"])
    print(f"wrote experiment report for {len(models)} models to {opts['out']}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    opts = _merge_config(args, {"out": "report_tables"})
    path = Path(args.report)
    if not path.exists():
        raise DataError(f"report not found: {path}")
    report = load_report(path)
    write_report_files(report, opts["out"])
    print(f"re-emitted report tables to {opts['out']}")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "generate": _cmd_generate,
    "calibrate": _cmd_calibrate,
    "experiment": _cmd_experiment,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
