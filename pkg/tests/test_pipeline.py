from datetime import datetime
from pathlib import Path

import pytest

from tsfops import tracking
from tsfops.pipeline import (
    ConfigError,
    canonicalize_config,
    run_inference,
    run_pipeline,
    truth_checker,
)

from conftest import single_csv, sinusoid


def write_series(tmp_path, n=24 * 120, noise=1.0, seed=0, start=datetime(2020, 1, 1)):
    path = tmp_path / "series.csv"
    path.write_text(single_csv(sinusoid(n, noise=noise, seed=seed), start=start))
    return path


def base_config(series_path, **overrides):
    cfg = {
        "experiment_name": "exp",
        "series_csv": str(series_path),
        "resolution": 60,
        "cut_date_val": "20200301",
        "cut_date_test": "20200401",
        "test_end_date": "20200429",
        "model": "seasonal_naive",
        "hyperparams": {"m": 24},
        "m_mase": 24,
        "forecast_horizon": 24,
        "ignore_previous_runs": True,
    }
    cfg.update(overrides)
    return cfg


def test_truth_checker_spellings():
    for raw in ("true", "t", "T", "TRUE", True, "1", "yes"):
        assert truth_checker(raw) is True
    for raw in ("false", "f", "F", "FALSE", False, "0", "no"):
        assert truth_checker(raw) is False
    with pytest.raises(ConfigError):
        truth_checker("maybe")


def test_canonicalize_rejects_unknown_keys(tmp_path):
    cfg = base_config(write_series(tmp_path))
    cfg["bogus_key"] = 1
    with pytest.raises(ConfigError, match="unknown config keys"):
        canonicalize_config(cfg)


def test_canonicalize_requires_mandatory_keys():
    with pytest.raises(ConfigError, match="missing required config key"):
        canonicalize_config({"experiment_name": "x"})


def test_canonicalize_parses_strings(tmp_path):
    cfg = base_config(write_series(tmp_path), ignore_previous_runs="t",
                      opt_test="false", std_dev="4.5", year_range="2020-2021")
    out = canonicalize_config(cfg)
    assert out["ignore_previous_runs"] is True
    assert out["opt_test"] is False
    assert out["std_dev"] == 4.5
    assert out["year_range"] == (2020, 2021)
    assert out["loss_function"] == "mape"
    with pytest.raises(ConfigError, match="unknown model kind"):
        canonicalize_config(base_config(write_series(tmp_path), model="nbeats"))


def test_pipeline_runs_all_stages_as_children(store, tmp_path):
    parent = run_pipeline(store, base_config(write_series(tmp_path)))
    assert parent.status == "FINISHED"
    children = [r for r in tracking.query_runs(store, experiment="exp")
                if r.parent_run_id == parent.run_id]
    assert sorted(r.stage for r in children) == ["etl", "eval", "load", "train"]
    assert all(r.status == "FINISHED" for r in children)
    for key in ("load_run", "etl_run", "model_run", "eval_run"):
        assert key in parent.params


def test_pipeline_search_stage_when_opt_test(store, tmp_path):
    cfg = base_config(
        write_series(tmp_path), model="linear_ar", opt_test=True, n_trials=4,
        hyperparams={"input_chunk_length": ["list", 24, 48],
                     "output_chunk_length": 24,
                     "ridge": ["list", 0.001, 0.1]},
    )
    parent = run_pipeline(store, cfg)
    assert parent.status == "FINISHED"
    search = tracking.load_run(store, "exp", parent.params["model_run"])
    assert search.stage == "optuna_search"
    assert any(a.endswith(".csv") for a in search.artifacts)
    assert any(a.startswith("model/") for a in search.artifacts)
    assert "best_loss" in search.metrics
    assert any(k.startswith("best.") for k in search.params)


def test_pipeline_failure_marks_parent_failed(store, tmp_path):
    cfg = base_config(tmp_path / "missing.csv")
    with pytest.raises(Exception):
        run_pipeline(store, cfg)
    parents = tracking.query_runs(store, experiment="exp", stage="pipeline")
    assert parents and parents[0].status == "FAILED"
    assert "error" in parents[0].params


def test_pipeline_resume_reuses_finished_stages(store, tmp_path):
    cfg = base_config(write_series(tmp_path), ignore_previous_runs=False)
    p1 = run_pipeline(store, cfg)
    n_runs_before = len(tracking.query_runs(store, experiment="exp"))
    p2 = run_pipeline(store, cfg)
    # only the new parent run was added; all four stages were reused
    assert len(tracking.query_runs(store, experiment="exp")) == n_runs_before + 1
    for key in ("load_run", "etl_run", "model_run", "eval_run"):
        assert p1.params[key] == p2.params[key]


def test_pipeline_resume_respects_changed_params(store, tmp_path):
    cfg = base_config(write_series(tmp_path), ignore_previous_runs=False)
    p1 = run_pipeline(store, cfg)
    cfg2 = dict(cfg, std_dev=9.9)  # etl param changed: etl and downstream rerun
    p2 = run_pipeline(store, cfg2)
    assert p1.params["load_run"] == p2.params["load_run"]
    assert p1.params["etl_run"] != p2.params["etl_run"]
    assert p1.params["model_run"] != p2.params["model_run"]


def test_pipeline_ignore_previous_runs_true_recomputes(store, tmp_path):
    cfg = base_config(write_series(tmp_path), ignore_previous_runs=True)
    p1 = run_pipeline(store, cfg)
    p2 = run_pipeline(store, cfg)
    assert p1.params["load_run"] != p2.params["load_run"]


def test_rerun_outputs_identical_to_uninterrupted(store, tmp_path):
    # restart idempotence: a resumed pipeline ends with the same eval
    # metrics as the run it resumed from
    cfg = base_config(write_series(tmp_path), ignore_previous_runs=False)
    p1 = run_pipeline(store, cfg)
    p2 = run_pipeline(store, cfg)
    e1 = tracking.load_run(store, "exp", p1.params["eval_run"])
    e2 = tracking.load_run(store, "exp", p2.params["eval_run"])
    assert e1.metrics == e2.metrics


def test_run_inference_forecast_artifact(store, tmp_path):
    cfg = base_config(write_series(tmp_path), model="linear_ar",
                      hyperparams={"input_chunk_length": 96, "output_chunk_length": 96})
    parent = run_pipeline(store, cfg)
    model_dir = (store.run_dir("exp", parent.params["model_run"])
                 / "artifacts" / "model")
    series = tmp_path / "history.csv"
    series.write_text(single_csv(sinusoid(24 * 30, seed=1)))
    forecast, run = run_inference(
        store, "inf", model_dir, series, forecast_horizon=960, roll_size=96,
    )
    assert len(forecast) == 960
    assert run.status == "FINISHED"
    text = tracking.artifact_path(store, run, "forecast.csv").read_text()
    assert len(text.strip().splitlines()) == 961
