"""Backtesting and metric computation.

A backtest forecasts fixed-length blocks over the test period, each block
produced only from actual history strictly before its start. Blocks are
stitched into one forecast series; with a stride smaller than the horizon
blocks overlap and the later block wins on overlapped steps.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional

import numpy as np

from .core import SeriesComponent, SplitSpec, TimeSeriesDataset, slice_by_dates
from .models import ModelError, TrainedModel, fit, predict, split

METRIC_NAMES = ("mae", "rmse", "nrmse_minmax", "nrmse_mean", "mape", "smape", "mase")


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class BacktestOptions:
    forecast_horizon: int
    stride: Optional[int] = None  # default: forecast_horizon
    retrain: bool = False
    m_mase: int = 1

    def __post_init__(self) -> None:
        if self.forecast_horizon < 1:
            raise EvalError("forecast_horizon must be >= 1")
        if self.stride is not None and self.stride < 1:
            raise EvalError("stride must be >= 1")

    @property
    def effective_stride(self) -> int:
        return self.stride if self.stride is not None else self.forecast_horizon


@dataclass(frozen=True)
class EvaluationReport:
    per_series: dict  # series id -> {metric -> value or None}
    averaged: dict  # metric -> mean over series where defined
    undefined_counts: dict  # metric -> number of series where undefined
    forecasts: dict  # series id -> stitched SeriesComponent
    actuals: dict  # series id -> SeriesComponent over the test range


def naive_insample_mae(train_values: np.ndarray, m: int) -> float:
    """In-sample MAE of the m-step seasonal naive forecast (MASE scale)."""
    if len(train_values) <= m:
        return float("nan")
    return float(np.mean(np.abs(train_values[m:] - train_values[:-m])))


def compute_metrics(
    actual: np.ndarray,
    forecast: np.ndarray,
    train_series: Optional[np.ndarray] = None,
    m_mase: int = 1,
) -> dict:
    """All six metric families; undefined metrics come back as None.

    MAPE/sMAPE are reported in percent. MASE scales by the in-sample MAE
    of the m-step naive forecast on the training series.
    """
    actual = np.asarray(actual, dtype=float)
    forecast = np.asarray(forecast, dtype=float)
    if actual.shape != forecast.shape or actual.size == 0:
        raise EvalError("actual and forecast must be aligned and non-empty")
    err = forecast - actual
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err ** 2)))
    spread = float(actual.max() - actual.min())
    mean_actual = float(actual.mean())
    metrics = {
        "mae": mae,
        "rmse": rmse,
        "nrmse_minmax": rmse / spread if spread != 0 else None,
        "nrmse_mean": rmse / mean_actual if mean_actual != 0 else None,
        "mape": (
            float(100.0 * np.mean(np.abs(err) / np.abs(actual)))
            if not np.any(actual == 0) else None
        ),
        "smape": float(100.0 * np.mean(
            np.divide(
                2.0 * np.abs(err),
                np.abs(actual) + np.abs(forecast),
                out=np.zeros_like(err),
                where=(np.abs(actual) + np.abs(forecast)) != 0,
            )
        )),
        "mase": None,
    }
    if train_series is not None:
        denom = naive_insample_mae(np.asarray(train_series, dtype=float), m_mase)
        if denom and not np.isnan(denom):
            metrics["mase"] = mae / denom
    return metrics


def backtest(
    model: TrainedModel,
    component: SeriesComponent,
    test_start: datetime,
    test_end: datetime,
    options: BacktestOptions,
    covariates: Optional[TimeSeriesDataset] = None,
) -> SeriesComponent:
    """Stitched block forecast over [test_start, test_end].

    ``component`` holds the full actual series (history + test); each
    block's forecast uses only actuals strictly before the block start.
    """
    step = component.timestamps[1] - component.timestamps[0]
    horizon = options.forecast_horizon
    stride = options.effective_stride
    L = model.spec.input_chunk_length

    stitched: dict[datetime, float] = {}
    t0 = test_start
    while t0 <= test_end:
        history_pairs = [
            (t, v) for t, v in zip(component.timestamps, component.values) if t < t0
        ]
        if len(history_pairs) < L:
            raise EvalError(
                f"lookback underflow: {len(history_pairs)} points before {t0} < {L}"
            )
        history = SeriesComponent(
            component.id,
            component.timeseries_id,
            tuple(t for t, _ in history_pairs),
            tuple(v for _, v in history_pairs),
        )
        block_model = model
        if options.retrain:
            train_ds = TimeSeriesDataset(
                (history,), _resolution_of(step), multiple=False
            )
            block_model = fit(
                model.spec, train_ds, covariates, scale=model.scaler is not None
            )
        forecast = predict(block_model, history, horizon, covariates)
        for t, v in zip(forecast.timestamps, forecast.values):
            if test_start <= t <= test_end:
                stitched[t] = v  # later blocks overwrite overlaps
        t0 = t0 + stride * step

    times = sorted(stitched)
    return SeriesComponent(
        component.id, component.timeseries_id,
        tuple(times), tuple(stitched[t] for t in times),
    )


def _resolution_of(step):
    from .core import Resolution

    return Resolution(int(step.total_seconds() // 60))


def forecast_plot_csv(actual: SeriesComponent, forecast: SeriesComponent) -> str:
    lookup = dict(zip(forecast.timestamps, forecast.values))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["timestamp", "actual", "forecast"])
    for t, v in zip(actual.timestamps, actual.values):
        f = lookup.get(t)
        writer.writerow([
            t.strftime("%Y-%m-%d %H:%M:%S"),
            "" if v is None else repr(float(v)),
            "" if f is None else repr(float(f)),
        ])
    return out.getvalue()


def evaluate(
    model: TrainedModel,
    dataset: TimeSeriesDataset,
    split_spec: SplitSpec,
    options: BacktestOptions,
    evaluate_all_ts: bool = True,
    eval_series: Optional[str] = None,
    covariates: Optional[TimeSeriesDataset] = None,
    store=None,
    experiment: Optional[str] = None,
    parent_run_id: Optional[str] = None,
    run_params: Optional[dict] = None,
):
    """Backtest the requested series and report per-series plus averaged
    metrics. Returns (EvaluationReport, run record or None)."""
    from . import tracking

    run = None
    if store is not None:
        run = tracking.start_run(
            store, experiment, stage="eval", parent_run_id=parent_run_id, params=run_params
        )
    try:
        train_ds, _, test_ds = split(dataset, split_spec)
        if evaluate_all_ts:
            series_ids = dataset.series_ids()
        else:
            if eval_series not in dataset.series_ids():
                raise EvalError(f"unknown series: {eval_series}")
            series_ids = [eval_series]

        test_start = test_ds.components[0].timestamps[0]
        test_end = max(c.timestamps[-1] for c in test_ds.components)

        per_series: dict[str, dict] = {}
        forecasts: dict[str, SeriesComponent] = {}
        actuals: dict[str, SeriesComponent] = {}
        for sid in series_ids:
            comp_metrics = []
            for comp in dataset.series(sid):
                fc = backtest(model, comp, test_start, test_end, options, covariates)
                actual = test_ds.component(comp.id)
                aligned = [
                    (a, f) for a, f in zip(actual.values, [
                        dict(zip(fc.timestamps, fc.values)).get(t)
                        for t in actual.timestamps
                    ]) if f is not None
                ]
                train_vals = np.array(
                    [v for v in train_ds.component(comp.id).values if v is not None]
                )
                comp_metrics.append(compute_metrics(
                    np.array([a for a, _ in aligned]),
                    np.array([f for _, f in aligned]),
                    train_vals,
                    options.m_mase,
                ))
                forecasts[comp.id] = fc
                actuals[comp.id] = actual
            per_series[sid] = _average_metric_dicts(comp_metrics)[0]

        averaged, undefined = _average_metric_dicts(list(per_series.values()))
        report = EvaluationReport(per_series, averaged, undefined, forecasts, actuals)

        if run is not None:
            for name, value in averaged.items():
                if value is not None:
                    tracking.log_metric(store, run, name, value)
            for sid, metrics in per_series.items():
                for name, value in metrics.items():
                    if value is not None:
                        tracking.log_metric(store, run, f"{sid}.{name}", value)
            for cid, fc in forecasts.items():
                tracking.log_artifact_text(
                    store, run, f"forecast/{cid}.csv",
                    forecast_plot_csv(actuals[cid], fc),
                )
            run = tracking.end_run(store, run, "FINISHED")
        return report, run
    except Exception as exc:
        if run is not None:
            tracking.log_param(store, run, "error", str(exc))
            tracking.end_run(store, run, "FAILED")
        raise


def _average_metric_dicts(dicts: list[dict]) -> tuple[dict, dict]:
    """Arithmetic mean per metric over entries where it is defined;
    undefined entries are excluded and counted, never NaN-propagated."""
    averaged: dict = {}
    undefined: dict = {}
    for name in METRIC_NAMES:
        defined = [d[name] for d in dicts if d.get(name) is not None]
        skipped = sum(1 for d in dicts if d.get(name) is None)
        averaged[name] = float(np.mean(defined)) if defined else None
        if skipped:
            undefined[name] = skipped
    return averaged, undefined
