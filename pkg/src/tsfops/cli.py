"""Command-line interface: one subcommand per pipeline stage plus the full
pipeline and standalone inference.

Boolean flags accept true/false/t/f. Exit codes: 0 success, 1 stage
failure (run id still printed), 2 usage error.
"""

from __future__ import annotations

import sys

import click

from . import tracking
from .core import CoreError, Resolution
from .etl import EtlError, run_etl
from .eval import EvalError
from .hpo import HpoError
from .ingest import CsvFormat, CsvLayout, IngestError, load_raw_data
from .models import ModelError
from .pipeline import (
    ConfigError,
    PipelineError,
    _etl_options,
    _run_eval_stage,
    _run_search_stage,
    _run_train_stage,
    _stage_params,
    ETL_KEYS,
    EVAL_KEYS,
    LOAD_KEYS,
    SEARCH_KEYS,
    TRAIN_KEYS,
    canonicalize_config,
    run_inference,
    run_pipeline,
    truth_checker,
)
from .tracking import Store, TrackingError

STAGE_ERRORS = (
    CoreError, IngestError, EtlError, ModelError, EvalError, HpoError,
    PipelineError, TrackingError, ConfigError, OSError,
)


class BoolParam(click.ParamType):
    name = "bool"

    def convert(self, value, param, ctx):
        try:
            return truth_checker(value)
        except ConfigError:
            self.fail(f"{value!r} is not one of true/false/t/f", param, ctx)


BOOL = BoolParam()


@click.group()
def cli():
    """Codeless time-series forecasting pipelines."""


def _config_options(f):
    """Shared pipeline config flags; names mirror the config schema keys."""
    opts = [
        click.option("--experiment-name", required=True),
        click.option("--series-csv", default=None),
        click.option("--day-first", type=BOOL, default=False),
        click.option("--multiple", type=BOOL, default=False),
        click.option("--resolution", type=int, default=None),
        click.option("--year-range", default=None),
        click.option("--time-covs", type=BOOL, default=False),
        click.option("--country", default="PT"),
        click.option("--holidays-csv", default=None),
        click.option("--std-dev", type=float, default=4.5),
        click.option("--rmv-outliers", type=BOOL, default=True),
        click.option("--non-negative", type=BOOL, default=False),
        click.option("--l-interpolation", type=BOOL, default=False),
        click.option("--a", type=float, default=0.3),
        click.option("--wncutoff", type=float, default=0.000694),
        click.option("--ycutoff", type=float, default=3.0),
        click.option("--ydcutoff", type=float, default=30.0),
        click.option("--min-non-nan-interval", type=int, default=24),
        click.option("--allow-long-gaps", type=BOOL, default=False),
        click.option("--cut-date-val", default=None),
        click.option("--cut-date-test", default=None),
        click.option("--test-end-date", default=None),
        click.option("--scale", type=BOOL, default=True),
        click.option("--model", default=None),
        click.option("--hyperparams-file", default=None),
        click.option("--hyperparams-entrypoint", default=None),
        click.option("--loss-function", default="mape"),
        click.option("--opt-test", type=BOOL, default=False),
        click.option("--grid-search", type=BOOL, default=False),
        click.option("--n-trials", type=int, default=100),
        click.option("--refit-with-val", type=BOOL, default=False),
        click.option("--ignore-previous-runs", type=BOOL, default=True),
        click.option("--forecast-horizon", type=int, default=24),
        click.option("--stride", type=int, default=None),
        click.option("--retrain", type=BOOL, default=False),
        click.option("--m-mase", type=int, default=1),
        click.option("--evaluate-all-ts", type=BOOL, default=True),
        click.option("--eval-series", default=None),
        click.option("--seed", type=int, default=0),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _kw_to_config(kwargs: dict) -> dict:
    return {k: v for k, v in kwargs.items() if v is not None}


def _fail(run_id, exc) -> None:
    if run_id:
        click.echo(run_id)
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@cli.command("exp-pipeline")
@_config_options
def exp_pipeline(**kwargs):
    """Run load -> etl -> train/search -> eval as one tracked pipeline."""
    store = Store()
    try:
        parent = run_pipeline(store, _kw_to_config(kwargs))
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    except STAGE_ERRORS as exc:
        runs = tracking.query_runs(store, stage="pipeline", status="FAILED")
        _fail(runs[-1].run_id if runs else None, exc)
    click.echo(parent.run_id)


@cli.command("load-raw-data")
@click.option("--experiment-name", required=True)
@click.option("--series-csv", required=True)
@click.option("--day-first", type=BOOL, default=False)
@click.option("--multiple", type=BOOL, default=False)
@click.option("--resolution", type=int, required=True)
def load_raw_data_cmd(experiment_name, series_csv, day_first, multiple, resolution):
    """Validate a raw CSV and store it as a canonical dataset artifact."""
    store = Store()
    fmt = CsvFormat(
        CsvLayout.MULTIPLE_WIDE if multiple else CsvLayout.SINGLE_LONG, day_first
    )
    params = {
        "series_csv": str(series_csv), "day_first": str(day_first),
        "multiple": str(multiple), "resolution": str(resolution),
    }
    try:
        _, run = load_raw_data(
            series_csv, fmt, Resolution(resolution), store, experiment_name,
            multiple=multiple, run_params=params,
        )
    except STAGE_ERRORS as exc:
        _fail(None, exc)
    click.echo(run.run_id)


def _stage_config(kwargs: dict, upstream=None, fill: dict | None = None) -> dict:
    """Canonicalize flags for a standalone stage command.

    Keys not given on the command line are inherited from the upstream
    run's recorded params; `fill` supplies placeholders for schema keys
    irrelevant to this stage."""
    from .pipeline import CONFIG_SCHEMA

    raw = _kw_to_config(kwargs)
    if upstream is not None:
        for k, v in upstream.params.items():
            if k in CONFIG_SCHEMA and k not in raw:
                raw[k] = v
    for k, v in (fill or {}).items():
        raw.setdefault(k, v)
    if isinstance(raw.get("hyperparams"), str):
        import json

        raw["hyperparams"] = json.loads(raw["hyperparams"])
    return canonicalize_config(raw)


def _upstream(store, experiment, run_id, stage):
    run = tracking.load_run(store, experiment, run_id)
    if run.stage != stage:
        raise click.UsageError(f"run {run_id} is a {run.stage} run, expected {stage}")
    return run


@cli.command("etl")
@_config_options
@click.option("--load-run-id", required=True)
def etl_cmd(load_run_id, **kwargs):
    """Outlier removal, gap imputation, optional calendar covariates."""
    store = Store()
    try:
        upstream = _upstream(store, kwargs["experiment_name"], load_run_id, "load")
        config = _stage_config(
            kwargs, upstream,
            fill={"model": "seasonal_naive",
                  "cut_date_val": "21000101", "cut_date_test": "21000102"},
        )
        _, _, run = run_etl(
            store, config["experiment_name"], upstream, _etl_options(config),
            holidays_file=config["holidays_csv"],
            run_params=_stage_params(config, ETL_KEYS),
        )
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    except STAGE_ERRORS as exc:
        _fail(None, exc)
    click.echo(run.run_id)


@cli.command("train")
@_config_options
@click.option("--etl-run-id", required=True)
def train_cmd(etl_run_id, **kwargs):
    """Fit a model with fixed hyperparameters and save the artifact."""
    store = Store()
    try:
        upstream = _upstream(store, kwargs["experiment_name"], etl_run_id, "etl")
        config = _stage_config(kwargs, upstream)
        run = _run_train_stage(store, config["experiment_name"], config, upstream, None)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    except STAGE_ERRORS as exc:
        _fail(None, exc)
    click.echo(run.run_id)


@cli.command("optuna-search")
@_config_options
@click.option("--etl-run-id", required=True)
def optuna_search_cmd(etl_run_id, **kwargs):
    """Hyperparameter search over a grid; saves the refit best model."""
    store = Store()
    try:
        upstream = _upstream(store, kwargs["experiment_name"], etl_run_id, "etl")
        config = _stage_config(kwargs, upstream)
        run = _run_search_stage(store, config["experiment_name"], config, upstream, None)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    except STAGE_ERRORS as exc:
        _fail(None, exc)
    click.echo(run.run_id)


@cli.command("eval")
@_config_options
@click.option("--etl-run-id", required=True)
@click.option("--model-run-id", required=True)
def eval_cmd(etl_run_id, model_run_id, **kwargs):
    """Backtest a trained model over the test segment and print metrics."""
    store = Store()
    try:
        experiment = kwargs["experiment_name"]
        etl_run = _upstream(store, experiment, etl_run_id, "etl")
        model_run = tracking.load_run(store, experiment, model_run_id)
        config = _stage_config(kwargs, model_run)
        if model_run.stage not in ("train", "optuna_search"):
            raise click.UsageError(f"run {model_run_id} has no model artifact")
        report, run = _run_eval_stage(store, experiment, config, etl_run, model_run, None)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    except STAGE_ERRORS as exc:
        _fail(None, exc)
    click.echo(run.run_id)
    for name, value in sorted(report.averaged.items()):
        click.echo(f"{name}: {value}")


@cli.command("inference")
@click.option("--experiment-name", default="inference")
@click.option("--model-dir", required=True)
@click.option("--series-csv", required=True)
@click.option("--forecast-horizon", type=int, default=960)
@click.option("--roll-size", type=int, default=96)
@click.option("--resolution", type=int, default=60)
@click.option("--day-first", type=BOOL, default=False)
def inference_cmd(experiment_name, model_dir, series_csv, forecast_horizon,
                  roll_size, resolution, day_first):
    """Forecast forward from the end of a series with a saved model."""
    store = Store()
    try:
        _, run = run_inference(
            store, experiment_name, model_dir, series_csv,
            forecast_horizon=forecast_horizon, roll_size=roll_size,
            resolution=resolution, day_first=day_first,
        )
    except STAGE_ERRORS as exc:
        _fail(None, exc)
    click.echo(run.run_id)


if __name__ == "__main__":  # pragma: no cover
    cli()
