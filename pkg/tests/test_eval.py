import math
from datetime import datetime

import numpy as np
import pytest

from tsfops.core import SplitSpec
from tsfops.eval import (
    BacktestOptions,
    EvalError,
    backtest,
    compute_metrics,
    evaluate,
    forecast_plot_csv,
    naive_insample_mae,
)
from tsfops.models import ModelSpec, fit

from conftest import make_component, make_dataset, sinusoid


def test_metric_hand_oracle():
    actual = np.array([100.0, 200.0, 300.0, 400.0])
    forecast = np.array([110.0, 190.0, 330.0, 360.0])
    m = compute_metrics(actual, forecast)
    # hand oracle: |e| = {10, 10, 30, 40}
    assert m["mae"] == pytest.approx(90.0 / 4.0, abs=1e-9)          # 22.5
    assert m["rmse"] == pytest.approx(math.sqrt(675.0), abs=1e-9)
    assert m["mape"] == pytest.approx(8.75, abs=1e-9)
    assert m["smape"] == pytest.approx(
        100.0 / 4.0 * (20 / 210 + 20 / 390 + 60 / 630 + 80 / 760), abs=1e-9
    )
    assert m["nrmse_minmax"] == pytest.approx(math.sqrt(675.0) / 300.0, abs=1e-9)
    assert m["nrmse_mean"] == pytest.approx(math.sqrt(675.0) / 250.0, abs=1e-9)
    assert m["mase"] is None  # no training series given


def test_perfect_forecast_all_zero():
    actual = np.array([5.0, 6.0, 7.0, 8.0])
    m = compute_metrics(actual, actual.copy(), train_series=np.arange(10.0), m_mase=1)
    for name in ("mae", "rmse", "nrmse_minmax", "nrmse_mean", "mape", "smape", "mase"):
        assert m[name] == 0.0


def test_mase_of_naive_is_exactly_one():
    # forecasting the test segment with the same m-step naive used in the
    # denominator, on a strictly m-periodic series, gives MASE = 1 when the
    # period is broken identically in train and test; simplest exact case:
    # the in-sample naive MAE equals the out-of-sample naive MAE
    train = np.array([1.0, 2.0, 3.0, 4.0, 2.0, 3.0, 4.0, 5.0])
    m_step = 4
    denominator = naive_insample_mae(train, m_step)
    assert denominator == pytest.approx(1.0)
    actual = np.array([3.0, 4.0, 5.0, 6.0])
    naive_forecast = train[-m_step:]  # [2,3,4,5]
    m = compute_metrics(actual, naive_forecast, train, m_step)
    assert m["mase"] == pytest.approx(1.0, abs=1e-12)


def test_undefined_metrics_are_none():
    m = compute_metrics(np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    assert m["mape"] is None  # zero actual
    m = compute_metrics(np.array([2.0, 2.0]), np.array([1.0, 1.0]))
    assert m["nrmse_minmax"] is None  # constant actual
    m = compute_metrics(
        np.array([1.0, 2.0]), np.array([1.0, 2.0]),
        train_series=np.array([3.0, 3.0, 3.0]), m_mase=1,
    )
    assert m["mase"] is None  # zero naive denominator
    m = compute_metrics(np.array([0.0, 0.0]), np.array([0.0, 0.0]))
    assert m["smape"] == 0.0  # 0/0 terms count as zero
    with pytest.raises(EvalError):
        compute_metrics(np.array([1.0]), np.array([1.0, 2.0]))


def _fitted(ds, **hp):
    spec = ModelSpec("linear_ar", {"input_chunk_length": 24,
                                   "output_chunk_length": 24, **hp})
    return fit(spec, ds)


def test_backtest_blocks_cover_test_exactly():
    ds = make_dataset(sinusoid(24 * 40), start=datetime(2020, 1, 1))
    model = _fitted(ds)
    comp = ds.components[0]
    test_start = datetime(2020, 2, 5)
    test_end = datetime(2020, 2, 7, 23)  # 72 points
    fc = backtest(model, comp, test_start, test_end,
                  BacktestOptions(forecast_horizon=24))
    assert len(fc) == 72
    assert fc.timestamps[0] == test_start
    assert fc.timestamps[-1] == test_end


def test_backtest_truncates_at_test_end():
    ds = make_dataset(sinusoid(24 * 40), start=datetime(2020, 1, 1))
    model = _fitted(ds)
    fc = backtest(model, ds.components[0], datetime(2020, 2, 5),
                  datetime(2020, 2, 6, 11),  # 36 points, horizon 24
                  BacktestOptions(forecast_horizon=24))
    assert len(fc) == 36


def test_backtest_no_leakage():
    values = sinusoid(24 * 40, noise=1.0, seed=9)
    ds = make_dataset(values, start=datetime(2020, 1, 1))
    model = _fitted(ds)
    test_start = datetime(2020, 2, 5)
    options = BacktestOptions(forecast_horizon=24)
    comp = ds.components[0]
    fc1 = backtest(model, comp, test_start, datetime(2020, 2, 5, 23), options)

    # mutate every actual at/after the block start: forecast bit-identical
    start_idx = comp.timestamps.index(test_start)
    mutated = list(comp.values)
    for i in range(start_idx, len(mutated)):
        mutated[i] = mutated[i] + 1e6
    fc2 = backtest(model, comp.with_values(mutated), test_start,
                   datetime(2020, 2, 5, 23), options)
    assert fc1.values == fc2.values


def test_backtest_overlap_later_block_wins():
    ds = make_dataset(sinusoid(24 * 40, noise=1.0, seed=2), start=datetime(2020, 1, 1))
    model = _fitted(ds)
    comp = ds.components[0]
    test_start = datetime(2020, 2, 5)
    # stride 12 < horizon 24: overlapping halves are overwritten by the
    # later block, which has 12 more hours of history
    overlapped = backtest(model, comp, test_start, datetime(2020, 2, 6, 11),
                          BacktestOptions(forecast_horizon=24, stride=12))
    # the second half of the first block must match a fresh block started
    # 12 hours later, not the first block's tail
    shifted = backtest(model, comp, datetime(2020, 2, 5, 12),
                       datetime(2020, 2, 6, 11),
                       BacktestOptions(forecast_horizon=24, stride=12))
    assert overlapped.values[12:24] == shifted.values[:12]


def test_backtest_lookback_underflow():
    ds = make_dataset(sinusoid(24 * 40), start=datetime(2020, 1, 1))
    model = _fitted(ds)
    with pytest.raises(EvalError, match="lookback underflow"):
        backtest(model, ds.components[0], datetime(2020, 1, 1, 5),
                 datetime(2020, 1, 2), BacktestOptions(forecast_horizon=24))


def test_forecast_plot_csv_shape():
    actual = make_component([1.0, 2.0], start=datetime(2020, 1, 1))
    fc = make_component([1.5, 2.5], start=datetime(2020, 1, 1))
    text = forecast_plot_csv(actual, fc)
    lines = text.strip().split("\n")
    assert lines[0] == "timestamp,actual,forecast"
    assert len(lines) == 3


def test_evaluate_logs_metrics_and_artifacts(store):
    ds = make_dataset(sinusoid(24 * 60, noise=0.5, seed=5), start=datetime(2020, 1, 1))
    spec = SplitSpec.from_strings("20200210", "20200220", "20200225")
    model = fit(ModelSpec("seasonal_naive", {"m": 24}),
                ds, scale=False)
    from tsfops import tracking

    tracking.create_experiment(store, "e")
    report, run = evaluate(
        model, ds, spec, BacktestOptions(forecast_horizon=24, m_mase=24),
        store=store, experiment="e",
    )
    assert run.status == "FINISHED"
    assert set(report.averaged) == {
        "mae", "rmse", "nrmse_minmax", "nrmse_mean", "mape", "smape", "mase"}
    assert all(v is not None for v in report.averaged.values())
    assert any(a.startswith("forecast/") for a in run.artifacts)
    assert "mape" in run.metrics


def test_evaluate_unknown_series(store):
    ds = make_dataset(sinusoid(24 * 60), start=datetime(2020, 1, 1))
    spec = SplitSpec.from_strings("20200210", "20200220", "20200225")
    model = fit(ModelSpec("seasonal_naive", {"m": 24}), ds, scale=False)
    with pytest.raises(EvalError, match="unknown series"):
        evaluate(model, ds, spec, BacktestOptions(forecast_horizon=24),
                 evaluate_all_ts=False, eval_series="nope")


def test_average_excludes_undefined_with_counts(store):
    # two series, one with zeros in its test segment: its mape is undefined
    # and must be excluded from the average with a recorded count
    from tsfops.core import Resolution, TimeSeriesDataset

    good = make_component(sinusoid(24 * 60, noise=0.2, seed=6),
                          start=datetime(2020, 1, 1), comp_id="good")
    vals = list(sinusoid(24 * 60, level=30.0, daily=40.0))
    zero_day = [0.0 if not (i % 3) else v for i, v in enumerate(vals)]
    bad = make_component(zero_day, start=datetime(2020, 1, 1), comp_id="bad")
    ds = TimeSeriesDataset((good, bad), Resolution(60), multiple=True)
    spec = SplitSpec.from_strings("20200210", "20200220", "20200225")
    model = fit(ModelSpec("seasonal_naive", {"m": 24}), ds, scale=False)
    report, _ = evaluate(model, ds, spec, BacktestOptions(forecast_horizon=24))
    assert report.undefined_counts.get("mape", 0) == 1
    assert report.per_series["bad"]["mape"] is None
    assert report.averaged["mape"] == pytest.approx(report.per_series["good"]["mape"])
