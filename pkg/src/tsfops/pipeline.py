"""Sequential orchestration of the pipeline stages with resume.

A pipeline run is a parent tracking run with one child run per executed
stage (load -> etl -> train or optuna_search -> eval). With resume
enabled (``ignore_previous_runs`` false), a stage whose resume-relevant
parameters exactly match a previously FINISHED run is skipped and that
run's artifacts are reused, so an interrupted pipeline can be restarted
without recomputation.
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import tracking
from .core import DatasetKind, Resolution, SplitSpec, TimeSeriesDataset
from .etl import EtlOptions, run_etl
from .eval import BacktestOptions, backtest, compute_metrics, evaluate, forecast_plot_csv
from .hpo import (
    HyperparameterGrid,
    HpoError,
    compute_param_importance,
    importance_csv,
    parse_grid_config,
    run_search,
    trials_to_csv,
)
from .ingest import CsvFormat, CsvLayout, load_raw_data, parse_wide_csv
from .models import ModelSpec, fit, load_model, predict, save_model, split
from .tracking import Store


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    pass


def truth_checker(value) -> bool:
    """Accepts booleans and the CLI spellings true/false/t/f (any case)."""
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in ("true", "t", "1", "yes"):
        return True
    if v in ("false", "f", "0", "no"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _year_range(value) -> Optional[tuple[int, int]]:
    if value in (None, "", "None"):
        return None
    parts = str(value).split("-")
    years = [int(p) for p in parts]
    return (min(years), max(years))


# key -> (parser, default); REQUIRED means the key must be provided
REQUIRED = object()

CONFIG_SCHEMA: dict[str, tuple[Callable, object]] = {
    "experiment_name": (str, REQUIRED),
    "series_csv": (str, REQUIRED),
    "day_first": (truth_checker, False),
    "multiple": (truth_checker, False),
    "resolution": (int, REQUIRED),
    "year_range": (_year_range, None),
    "time_covs": (truth_checker, False),
    "country": (str, "PT"),
    "holidays_csv": (str, None),
    "std_dev": (float, 4.5),
    "rmv_outliers": (truth_checker, True),
    "non_negative": (truth_checker, False),
    "l_interpolation": (truth_checker, False),
    "a": (float, 0.3),
    "wncutoff": (float, 0.000694),
    "ycutoff": (float, 3.0),
    "ydcutoff": (float, 30.0),
    "min_non_nan_interval": (int, 24),
    "allow_long_gaps": (truth_checker, False),
    "cut_date_val": (str, REQUIRED),
    "cut_date_test": (str, REQUIRED),
    "test_end_date": (str, None),
    "scale": (truth_checker, True),
    "model": (str, REQUIRED),
    "hyperparams": (dict, None),  # inline grid/values for the model
    "hyperparams_file": (str, None),
    "hyperparams_entrypoint": (str, None),
    "loss_function": (str, "mape"),
    "opt_test": (truth_checker, False),
    "grid_search": (truth_checker, False),
    "n_trials": (int, 100),
    "refit_with_val": (truth_checker, False),
    "ignore_previous_runs": (truth_checker, True),
    "forecast_horizon": (int, 24),
    "stride": (int, None),
    "retrain": (truth_checker, False),
    "m_mase": (int, 1),
    "evaluate_all_ts": (truth_checker, True),
    "eval_series": (str, None),
    "seed": (int, 0),
}


def canonicalize_config(raw: dict) -> dict:
    """Validate and normalize a pipeline config; unknown keys rejected."""
    unknown = set(raw) - set(CONFIG_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    config = {}
    for key, (parser, default) in CONFIG_SCHEMA.items():
        if key in raw and raw[key] is not None and raw[key] != "None":
            value = raw[key]
            if parser is dict:
                if not isinstance(value, dict):
                    raise ConfigError(f"{key} must be a mapping")
                config[key] = value
            else:
                try:
                    config[key] = parser(value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc
        elif default is REQUIRED:
            raise ConfigError(f"missing required config key: {key}")
        else:
            config[key] = default
    if config["model"] not in ("seasonal_naive", "linear_ar", "mlp"):
        raise ConfigError(f"unknown model kind: {config['model']}")
    if config["hyperparams"] is None and config["hyperparams_file"] is None:
        config["hyperparams"] = {}
    return config


def _grid_for(config: dict) -> HyperparameterGrid:
    if config["hyperparams_file"]:
        if not config["hyperparams_entrypoint"]:
            raise ConfigError("hyperparams_file requires hyperparams_entrypoint")
        return parse_grid_config(
            Path(config["hyperparams_file"]).read_text(encoding="utf-8"),
            config["hyperparams_entrypoint"],
        )
    entries = config["hyperparams"] or {}
    name = config["hyperparams_entrypoint"] or "inline"
    return parse_grid_config({name: entries} if entries else {name: {"_": None}}, name)


def _etl_options(config: dict) -> EtlOptions:
    return EtlOptions(
        year_range=config["year_range"],
        std_dev=config["std_dev"],
        rmv_outliers=config["rmv_outliers"],
        l_interpolation=config["l_interpolation"],
        a=config["a"],
        wncutoff=config["wncutoff"],
        ycutoff=config["ycutoff"],
        ydcutoff=config["ydcutoff"],
        max_gap=config["min_non_nan_interval"],
        country=config["country"],
        time_covs=config["time_covs"],
        non_negative=config["non_negative"],
        allow_long_gaps=config["allow_long_gaps"],
    )


def _stage_params(config: dict, keys: list[str]) -> dict:
    out = {}
    for k in keys:
        v = config[k]
        if k == "hyperparams" and config["hyperparams_file"] is None:
            v = json.dumps(v, sort_keys=True)
        out[k] = str(v).lower() if isinstance(v, bool) else str(v)
    return out


LOAD_KEYS = ["series_csv", "day_first", "multiple", "resolution"]
ETL_KEYS = LOAD_KEYS + [
    "year_range", "std_dev", "rmv_outliers", "non_negative", "l_interpolation",
    "a", "wncutoff", "ycutoff", "ydcutoff", "min_non_nan_interval", "country",
    "time_covs", "allow_long_gaps", "holidays_csv",
]
TRAIN_KEYS = ETL_KEYS + [
    "cut_date_val", "cut_date_test", "test_end_date", "scale", "model",
    "hyperparams", "hyperparams_file", "hyperparams_entrypoint", "seed",
]
SEARCH_KEYS = TRAIN_KEYS + [
    "loss_function", "grid_search", "n_trials", "forecast_horizon", "refit_with_val",
    "evaluate_all_ts", "eval_series",
]
EVAL_KEYS = TRAIN_KEYS + [
    "opt_test", "forecast_horizon", "stride", "retrain", "m_mase",
    "evaluate_all_ts", "eval_series", "loss_function", "grid_search", "n_trials",
]


def _find_resumable(store, config, experiment, stage, keys):
    if config["ignore_previous_runs"]:
        return None
    return tracking.find_matching_run(
        store, experiment, stage, _stage_params(config, keys)
    )


def _load_etl_outputs(store: Store, etl_run) -> tuple[TimeSeriesDataset, Optional[TimeSeriesDataset]]:
    resolution = Resolution(int(etl_run.params["resolution"]))
    multiple = etl_run.params.get("multiple", "false") == "true"
    series = parse_wide_csv(
        tracking.artifact_path(store, etl_run, "series.csv").read_text(encoding="utf-8"),
        day_first=False, resolution=resolution, multiple=multiple,
    )
    covariates = None
    if "future_covariates.csv" in etl_run.artifacts:
        covariates = parse_wide_csv(
            tracking.artifact_path(store, etl_run, "future_covariates.csv").read_text(
                encoding="utf-8"
            ),
            day_first=False, resolution=resolution, multiple=multiple,
            kind=DatasetKind.FUTURE_COVARIATES,
        )
    return series, covariates


def _split_spec(config: dict) -> SplitSpec:
    return SplitSpec.from_strings(
        config["cut_date_val"], config["cut_date_test"], config["test_end_date"]
    )


def _validation_objective(
    config: dict,
    dataset: TimeSeriesDataset,
    covariates: Optional[TimeSeriesDataset],
    split_spec: SplitSpec,
) -> Callable[[dict], tuple[float, dict]]:
    """Loss on the validation segment for one hyperparameter config."""
    loss_name = config["loss_function"]
    horizon = config["forecast_horizon"]
    train_ds, val_ds, _ = split(dataset, split_spec)
    val_start = min(c.timestamps[0] for c in val_ds.components if len(c))
    val_end = max(c.timestamps[-1] for c in val_ds.components if len(c))
    options = BacktestOptions(forecast_horizon=horizon, m_mase=config["m_mase"])

    def objective(hp: dict) -> tuple[float, dict]:
        hp = {k: v for k, v in hp.items() if v is not None and k != "_"}
        model = fit(ModelSpec(config["model"], hp), train_ds, covariates, config["scale"])
        losses = []
        metrics_acc: dict[str, list] = {}
        for comp in dataset.components:
            fc = backtest(model, comp, val_start, val_end, options, covariates)
            actual = val_ds.component(comp.id)
            lookup = dict(zip(fc.timestamps, fc.values))
            pairs = [
                (a, lookup[t]) for t, a in zip(actual.timestamps, actual.values)
                if t in lookup and a is not None
            ]
            train_vals = np.array(
                [v for v in train_ds.component(comp.id).values if v is not None]
            )
            m = compute_metrics(
                np.array([a for a, _ in pairs]), np.array([f for _, f in pairs]),
                train_vals, config["m_mase"],
            )
            if m.get(loss_name) is None:
                raise HpoError(f"loss {loss_name} undefined on validation segment")
            losses.append(m[loss_name])
            for k, v in m.items():
                if v is not None:
                    metrics_acc.setdefault(k, []).append(v)
        avg_metrics = {k: float(np.mean(v)) for k, v in metrics_acc.items()}
        return float(np.mean(losses)), avg_metrics

    return objective


def _save_model_artifact(store: Store, run, model) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        d = save_model(model, Path(tmp) / "model")
        for f in sorted(d.iterdir()):
            tracking.log_artifact_file(store, run, f"model/{f.name}", f)


def _load_model_artifact(store: Store, run):
    base = tracking.artifact_path(store, run, "model/spec.json").parent
    return load_model(base)


def _run_train_stage(store, experiment, config, etl_run, parent_run_id):
    run = tracking.start_run(
        store, experiment, "train", parent_run_id,
        params=_stage_params(config, TRAIN_KEYS),
    )
    try:
        dataset, covariates = _load_etl_outputs(store, etl_run)
        grid = _grid_for(config)
        if grid.varying():
            raise ConfigError(
                f"train stage requires fixed hyperparameters; varying: {grid.varying()}"
            )
        hp = {k: v for k, v in grid.fixed().items() if v is not None and k != "_"}
        train_ds, _, _ = split(dataset, _split_spec(config))
        model = fit(ModelSpec(config["model"], hp), train_ds, covariates, config["scale"])
        _save_model_artifact(store, run, model)
        return tracking.end_run(store, run, "FINISHED")
    except Exception as exc:
        tracking.log_param(store, run, "error", str(exc))
        tracking.end_run(store, run, "FAILED")
        raise


def _run_search_stage(store, experiment, config, etl_run, parent_run_id):
    run = tracking.start_run(
        store, experiment, "optuna_search", parent_run_id,
        params=_stage_params(config, SEARCH_KEYS),
    )
    try:
        dataset, covariates = _load_etl_outputs(store, etl_run)
        split_spec = _split_spec(config)
        grid = _grid_for(config)
        objective = _validation_objective(config, dataset, covariates, split_spec)
        result = run_search(
            grid,
            objective,
            mode="grid" if config["grid_search"] else "tpe",
            n_trials=config["n_trials"],
            loss_function=config["loss_function"],
            seed=config["seed"],
        )
        name = config["hyperparams_entrypoint"] or "trials"
        tracking.log_artifact_text(store, run, f"{name}.csv", trials_to_csv(result.trials))
        tracking.log_metric(store, run, "best_loss", result.best.loss)
        tracking.log_params(
            store, run,
            {f"best.{k}": v for k, v in result.best.config.items()},
        )
        try:
            importances = compute_param_importance(result.trials, seed=config["seed"])
            tracking.log_artifact_text(
                store, run, "param_importance.csv", importance_csv(importances)
            )
        except HpoError:
            pass  # too few trials or nothing varying

        train_ds, val_ds, _ = split(dataset, split_spec)
        refit_ds = dataset if config["refit_with_val"] else train_ds
        if config["refit_with_val"]:
            # train + validation, excluding test
            from .core import dataset_range, slice_by_dates

            start, _ = dataset_range(dataset)
            refit_ds = slice_by_dates(
                dataset, start, split_spec.cut_date_test - dataset.resolution.delta
            )
        best_hp = {k: v for k, v in result.best.config.items() if v is not None and k != "_"}
        model = fit(ModelSpec(config["model"], best_hp), refit_ds, covariates, config["scale"])
        _save_model_artifact(store, run, model)
        return tracking.end_run(store, run, "FINISHED")
    except Exception as exc:
        tracking.log_param(store, run, "error", str(exc))
        tracking.end_run(store, run, "FAILED")
        raise


def _run_eval_stage(store, experiment, config, etl_run, model_run, parent_run_id):
    dataset, covariates = _load_etl_outputs(store, etl_run)
    model = _load_model_artifact(store, model_run)
    options = BacktestOptions(
        forecast_horizon=config["forecast_horizon"],
        stride=config["stride"],
        retrain=config["retrain"],
        m_mase=config["m_mase"],
    )
    report, run = evaluate(
        model, dataset, _split_spec(config), options,
        evaluate_all_ts=config["evaluate_all_ts"],
        eval_series=config["eval_series"],
        covariates=covariates,
        store=store, experiment=experiment, parent_run_id=parent_run_id,
        run_params=_stage_params(config, EVAL_KEYS),
    )
    return report, run


def prepare_pipeline(store: Store, raw_config: dict):
    """Validate the config and open the parent pipeline run."""
    config = canonicalize_config(raw_config)
    experiment = tracking.create_experiment(store, config["experiment_name"])
    parent = tracking.start_run(
        store, experiment, "pipeline",
        params={k: str(v) for k, v in config.items()},
    )
    return config, parent


def execute_pipeline(store: Store, config: dict, parent):
    """Run the stages as children of an already-open parent run."""
    experiment = config["experiment_name"]
    try:
        load_run = _find_resumable(store, config, experiment, "load", LOAD_KEYS)
        if load_run is None:
            _, load_run = load_raw_data(
                config["series_csv"],
                CsvFormat(
                    CsvLayout.MULTIPLE_WIDE if config["multiple"] else CsvLayout.SINGLE_LONG,
                    config["day_first"],
                ),
                Resolution(config["resolution"]),
                store, experiment,
                multiple=config["multiple"],
                parent_run_id=parent.run_id,
                run_params=_stage_params(config, LOAD_KEYS),
            )

        etl_run = _find_resumable(store, config, experiment, "etl", ETL_KEYS)
        if etl_run is None:
            _, _, etl_run = run_etl(
                store, experiment, load_run, _etl_options(config),
                holidays_file=config["holidays_csv"],
                parent_run_id=parent.run_id,
                run_params=_stage_params(config, ETL_KEYS),
            )

        if config["opt_test"]:
            model_run = _find_resumable(
                store, config, experiment, "optuna_search", SEARCH_KEYS
            )
            if model_run is None:
                model_run = _run_search_stage(
                    store, experiment, config, etl_run, parent.run_id
                )
        else:
            model_run = _find_resumable(store, config, experiment, "train", TRAIN_KEYS)
            if model_run is None:
                model_run = _run_train_stage(
                    store, experiment, config, etl_run, parent.run_id
                )

        eval_run = _find_resumable(store, config, experiment, "eval", EVAL_KEYS)
        if eval_run is None:
            _, eval_run = _run_eval_stage(
                store, experiment, config, etl_run, model_run, parent.run_id
            )

        tracking.log_params(store, parent, {
            "load_run": load_run.run_id,
            "etl_run": etl_run.run_id,
            "model_run": model_run.run_id,
            "eval_run": eval_run.run_id,
        })
        return tracking.end_run(store, parent, "FINISHED")
    except Exception as exc:
        tracking.log_param(store, parent, "error", str(exc))
        tracking.end_run(store, parent, "FAILED")
        raise


def run_pipeline(store: Store, raw_config: dict):
    """Full pipeline: load -> etl -> train/search -> eval as child runs."""
    config, parent = prepare_pipeline(store, raw_config)
    return execute_pipeline(store, config, parent)


def run_inference(
    store: Store,
    experiment: str,
    model_dir: str | Path,
    series_csv: str | Path,
    forecast_horizon: int = 960,
    roll_size: int = 96,
    resolution: Optional[int] = None,
    day_first: bool = False,
    parent_run_id: Optional[str] = None,
):
    """Forecast forward from the end of a series with a saved model.

    Returns (forecast component, run record)."""
    from .ingest import parse_single_csv, read_source

    tracking.create_experiment(store, experiment)
    run = tracking.start_run(
        store, experiment, "inference", parent_run_id,
        params={
            "model_dir": str(model_dir),
            "series_csv": str(series_csv),
            "forecast_horizon": str(forecast_horizon),
            "roll_size": str(roll_size),
        },
    )
    try:
        model = load_model(model_dir)
        text = read_source(series_csv)
        res = Resolution(resolution) if resolution else Resolution(60)
        ds = parse_single_csv(text, day_first, res)
        comp = ds.components[0]
        if comp.n_missing:
            raise PipelineError("inference series contains missing values")
        forecast = predict(model, comp, forecast_horizon, roll_size=roll_size)
        lines = ["timestamp,forecast"] + [
            f"{t.strftime('%Y-%m-%d %H:%M:%S')},{v!r}"
            for t, v in zip(forecast.timestamps, forecast.values)
        ]
        tracking.log_artifact_text(store, run, "forecast.csv", "\n".join(lines) + "\n")
        run = tracking.end_run(store, run, "FINISHED")
        return forecast, run
    except Exception as exc:
        tracking.log_param(store, run, "error", str(exc))
        tracking.end_run(store, run, "FAILED")
        raise
