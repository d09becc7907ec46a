"""Forecasting models, scaling, splitting and autoregressive prediction.

Three model kinds share one fit/predict/save/load interface built around
a lookback window (``input_chunk_length``) and a direct multi-step output
chunk (``output_chunk_length``):

* ``seasonal_naive``: repeats the value observed ``m`` steps earlier.
  It stores nothing and is never scaled, so forecasts are identical with
  scaling on or off.
* ``linear_ar``: ridge-regularized least squares mapping the last L lags
  (plus future covariates at each target step) to the next H values, one
  linear map per horizon step.
* ``mlp``: a one-hidden-layer tanh network trained on the same supervised
  frames with seeded mini-batch gradient descent.

Prediction rolls autoregressively: each iteration the model emits an
output chunk from its own extended history until ``horizon_total`` values
exist; ``roll_size`` caps how many values are fed back per iteration.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    CoreError,
    SeriesComponent,
    SplitSpec,
    TimeSeriesDataset,
    dataset_range,
    slice_by_dates,
)

MODEL_KINDS = ("seasonal_naive", "linear_ar", "mlp")

DEFAULT_HYPERPARAMS = {
    "seasonal_naive": {"m": 24},
    "linear_ar": {
        "input_chunk_length": 24,
        "output_chunk_length": 24,
        "ridge": 1e-3,
    },
    "mlp": {
        "input_chunk_length": 24,
        "output_chunk_length": 24,
        "hidden_size": 64,
        "n_epochs": 10,
        "learning_rate": 1e-3,
        "batch_size": 32,
        "random_state": 0,
    },
}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ModelError(f"unknown model kind: {self.kind}")
        merged = dict(DEFAULT_HYPERPARAMS[self.kind])
        unknown = set(self.hyperparams) - set(merged)
        if unknown:
            raise ModelError(f"{self.kind} does not consume hyperparams {sorted(unknown)}")
        merged.update(self.hyperparams)
        object.__setattr__(self, "hyperparams", merged)
        if self.input_chunk_length < 1 or self.output_chunk_length < 1:
            raise ModelError("chunk lengths must be >= 1")

    @property
    def input_chunk_length(self) -> int:
        if self.kind == "seasonal_naive":
            return int(self.hyperparams["m"])
        return int(self.hyperparams["input_chunk_length"])

    @property
    def output_chunk_length(self) -> int:
        if self.kind == "seasonal_naive":
            return int(self.hyperparams["m"])
        return int(self.hyperparams["output_chunk_length"])


def split(
    ds: TimeSeriesDataset, spec: SplitSpec
) -> tuple[TimeSeriesDataset, TimeSeriesDataset, TimeSeriesDataset]:
    """Partition into train [start, cut_val), validation [cut_val,
    cut_test), test [cut_test, test_end]."""
    start, end = dataset_range(ds)
    test_end = spec.test_end_date or end
    one = ds.resolution.delta

    def part_of(a, b):
        if a > b:  # cut dates outside the data range: empty segment
            return replace(ds, components=tuple(
                replace(c, timestamps=(), values=()) for c in ds.components
            ))
        return slice_by_dates(ds, a, b)

    train = part_of(start, spec.cut_date_val - one)
    val = part_of(spec.cut_date_val, spec.cut_date_test - one)
    test = part_of(spec.cut_date_test, test_end)
    for name, part in (("train", train), ("validation", val), ("test", test)):
        if all(len(c) == 0 for c in part.components):
            raise ModelError(f"degenerate split: empty {name} segment")
    return train, val, test


@dataclass(frozen=True)
class MinMaxScaler:
    """Per-component (min, max) learned on the training split only."""

    ranges: dict  # component id -> (min, max)

    def transform(self, comp_id: str, x: np.ndarray) -> np.ndarray:
        lo, hi = self.ranges[comp_id]
        if hi == lo:
            return np.zeros_like(np.asarray(x, dtype=float))
        return (np.asarray(x, dtype=float) - lo) / (hi - lo)

    def inverse(self, comp_id: str, x: np.ndarray) -> np.ndarray:
        lo, hi = self.ranges[comp_id]
        if hi == lo:
            return np.full_like(np.asarray(x, dtype=float), lo)
        return np.asarray(x, dtype=float) * (hi - lo) + lo


def fit_scaler(*datasets: Optional[TimeSeriesDataset]) -> MinMaxScaler:
    ranges = {}
    for ds in datasets:
        if ds is None:
            continue
        for comp in ds.components:
            vals = [v for v in comp.values if v is not None]
            if not vals:
                raise ModelError(f"cannot scale all-missing component {comp.id}")
            ranges[comp.id] = (float(min(vals)), float(max(vals)))
    if not ranges:
        raise ModelError("cannot fit scaler on empty data")
    return MinMaxScaler(ranges)


@dataclass(frozen=True)
class TrainedModel:
    spec: ModelSpec
    params: dict  # name -> float64 ndarray, layout fixed per kind
    scaler: Optional[MinMaxScaler]
    cov_ids: tuple[str, ...] = ()  # covariate suffixes consumed, sorted
    train_meta: dict = field(default_factory=dict)

    @property
    def n_cov(self) -> int:
        return len(self.cov_ids)


def _values_array(comp: SeriesComponent) -> np.ndarray:
    if comp.n_missing:
        raise ModelError(f"component {comp.id} still has missing values")
    return np.array(comp.values, dtype=float)


def _cov_suffixes(covariates: Optional[TimeSeriesDataset]) -> tuple[str, ...]:
    if covariates is None:
        return ()
    return tuple(sorted({c.id.rsplit("__", 1)[-1] for c in covariates.components}))


def _cov_lookup(
    covariates: TimeSeriesDataset,
    series_id: str,
    suffixes: Sequence[str],
    scaler: Optional[MinMaxScaler],
) -> dict[datetime, np.ndarray]:
    """timestamp -> covariate feature vector for one series."""
    comps = []
    for suffix in suffixes:
        cid = f"{series_id}__{suffix}"
        try:
            comps.append(covariates.component(cid))
        except CoreError:
            raise ModelError(f"covariate coverage error: missing component {cid}") from None
    rows: dict[datetime, np.ndarray] = {}
    mats = []
    for comp in comps:
        arr = _values_array(comp)
        if scaler is not None and comp.id in scaler.ranges:
            arr = scaler.transform(comp.id, arr)
        mats.append(arr)
    base = comps[0].timestamps
    for j, t in enumerate(base):
        rows[t] = np.array([m[j] for m in mats])
    return rows


def _build_frames(
    values: np.ndarray,
    timestamps: Sequence[datetime],
    L: int,
    H: int,
    cov_rows: Optional[dict[datetime, np.ndarray]],
    n_cov: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Supervised frames: X = [L lags | covariates at the H target steps],
    Y = next H values."""
    n = len(values)
    xs, ys = [], []
    for t in range(L, n - H + 1):
        lags = values[t - L:t]
        target_cov: list[float] = []
        if n_cov:
            ok = True
            for h in range(H):
                row = cov_rows.get(timestamps[t + h]) if cov_rows else None
                if row is None:
                    ok = False
                    break
                target_cov.extend(row)
            if not ok:
                continue
        xs.append(np.concatenate([lags, target_cov]))
        ys.append(values[t:t + H])
    if not xs:
        raise ModelError("train too short for lookback+horizon")
    return np.array(xs), np.array(ys)


def _fit_linear_ar(spec: ModelSpec, X: np.ndarray, Y: np.ndarray) -> dict:
    lam = float(spec.hyperparams["ridge"])
    L = spec.input_chunk_length
    H = spec.output_chunk_length
    n_cov = (X.shape[1] - L) // H if X.shape[1] > L else 0
    A = np.hstack([X[:, :L], np.ones((X.shape[0], 1))])
    weights = np.zeros((H, L + n_cov + 1))
    for h in range(H):
        if n_cov:
            cov_h = X[:, L + h * n_cov:L + (h + 1) * n_cov]
            Ah = np.hstack([X[:, :L], cov_h, np.ones((X.shape[0], 1))])
        else:
            Ah = A
        y = Y[:, h]
        if lam > 0:
            penalty = lam * np.eye(Ah.shape[1])
            penalty[-1, -1] = 0.0  # intercept unpenalized
            w = np.linalg.solve(Ah.T @ Ah + penalty, Ah.T @ y)
        else:
            w, *_ = np.linalg.lstsq(Ah, y, rcond=None)
        weights[h] = w
    return {"weights": weights}


def init_mlp_params(
    n_in: int, hidden: int, n_out: int, seed: int
) -> dict:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization."""
    rng = np.random.default_rng(seed)
    b1 = 1.0 / math.sqrt(n_in)
    b2 = 1.0 / math.sqrt(hidden)
    return {
        "W1": rng.uniform(-b1, b1, size=(n_in, hidden)),
        "b1": rng.uniform(-b1, b1, size=hidden),
        "W2": rng.uniform(-b2, b2, size=(hidden, n_out)),
        "b2": rng.uniform(-b2, b2, size=n_out),
    }


def mlp_forward(params: dict, X: np.ndarray) -> np.ndarray:
    hidden = np.tanh(X @ params["W1"] + params["b1"])
    return hidden @ params["W2"] + params["b2"]


def mlp_loss_and_grads(params: dict, X: np.ndarray, Y: np.ndarray) -> tuple[float, dict]:
    """Mean squared error over the batch and its analytic gradients."""
    n = X.shape[0]
    z1 = X @ params["W1"] + params["b1"]
    h = np.tanh(z1)
    pred = h @ params["W2"] + params["b2"]
    err = pred - Y
    loss = float(np.mean(err ** 2))
    d_pred = 2.0 * err / err.size
    grads = {
        "W2": h.T @ d_pred,
        "b2": d_pred.sum(axis=0),
    }
    d_h = d_pred @ params["W2"].T
    d_z1 = d_h * (1.0 - h ** 2)
    grads["W1"] = X.T @ d_z1
    grads["b1"] = d_z1.sum(axis=0)
    return loss, grads


def _fit_mlp(spec: ModelSpec, X: np.ndarray, Y: np.ndarray) -> dict:
    hp = spec.hyperparams
    seed = int(hp["random_state"])
    params = init_mlp_params(X.shape[1], int(hp["hidden_size"]), Y.shape[1], seed)
    rng = np.random.default_rng(seed + 1)
    lr = float(hp["learning_rate"])
    batch = max(1, int(hp["batch_size"]))
    for _ in range(int(hp["n_epochs"])):
        order = rng.permutation(X.shape[0])
        for start in range(0, len(order), batch):
            idx = order[start:start + batch]
            _, grads = mlp_loss_and_grads(params, X[idx], Y[idx])
            for name in params:
                params[name] = params[name] - lr * grads[name]
    return params


def fit(
    spec: ModelSpec,
    train: TimeSeriesDataset,
    covariates: Optional[TimeSeriesDataset] = None,
    scale: bool = True,
) -> TrainedModel:
    """Fit one global model on pooled frames from all series."""
    L, H = spec.input_chunk_length, spec.output_chunk_length
    for comp in train.components:
        if len(comp) < L + H:
            raise ModelError(
                f"train too short for lookback+horizon: component {comp.id} "
                f"has {len(comp)} < {L + H} points"
            )
    meta = {
        "train_start": min(c.timestamps[0] for c in train.components).isoformat(),
        "train_end": max(c.timestamps[-1] for c in train.components).isoformat(),
    }
    if spec.kind == "seasonal_naive":
        return TrainedModel(spec, {}, None, (), meta)

    scaler = fit_scaler(train, covariates) if scale else None
    suffixes = _cov_suffixes(covariates)
    xs, ys = [], []
    for comp in train.components:
        values = _values_array(comp)
        if scaler is not None:
            values = scaler.transform(comp.id, values)
        cov_rows = (
            _cov_lookup(covariates, comp.timeseries_id, suffixes, scaler)
            if suffixes else None
        )
        X, Y = _build_frames(values, comp.timestamps, L, H, cov_rows, len(suffixes))
        xs.append(X)
        ys.append(Y)
    X = np.vstack(xs)
    Y = np.vstack(ys)
    if spec.kind == "linear_ar":
        params = _fit_linear_ar(spec, X, Y)
    else:
        params = _fit_mlp(spec, X, Y)
        meta["seed"] = str(spec.hyperparams["random_state"])
    return TrainedModel(spec, params, scaler, suffixes, meta)


def _forward_chunk(
    model: TrainedModel, window: np.ndarray, cov_chunk: Optional[np.ndarray]
) -> np.ndarray:
    spec = model.spec
    if spec.kind == "seasonal_naive":
        return window[-spec.hyperparams["m"]:].copy()
    if spec.kind == "linear_ar":
        W = model.params["weights"]
        H = spec.output_chunk_length
        out = np.empty(H)
        for h in range(H):
            feats = window if cov_chunk is None else np.concatenate([window, cov_chunk[h]])
            out[h] = feats @ W[h, :-1] + W[h, -1]
        return out
    feats = window if cov_chunk is None else np.concatenate([window, cov_chunk.ravel()])
    return mlp_forward(model.params, feats[None, :])[0]


def predict(
    model: TrainedModel,
    history: SeriesComponent,
    horizon_total: int,
    covariates: Optional[TimeSeriesDataset] = None,
    roll_size: Optional[int] = None,
) -> SeriesComponent:
    """Roll the model forward autoregressively for horizon_total steps.

    Output is in original units. ``roll_size`` caps the number of values
    fed back per iteration (default: one output chunk per roll)."""
    spec = model.spec
    L, H = spec.input_chunk_length, spec.output_chunk_length
    if len(history) < L:
        raise ModelError(f"history shorter than lookback ({len(history)} < {L})")
    roll = roll_size or H

    values = _values_array(history)
    scaler = model.scaler
    if scaler is not None:
        values = scaler.transform(history.id, values)

    step = history.timestamps[1] - history.timestamps[0] if len(history) > 1 else None
    start_t = history.timestamps[-1]
    future_ts = [start_t + (i + 1) * step for i in range(horizon_total)] if step else []

    cov_rows = None
    if model.n_cov:
        if covariates is None:
            raise ModelError("covariate coverage error: model requires covariates")
        cov_rows = _cov_lookup(covariates, history.timeseries_id, model.cov_ids, scaler)

    buf = list(values)
    out: list[float] = []
    while len(out) < horizon_total:
        window = np.array(buf[-L:])
        cov_chunk = None
        if cov_rows is not None:
            chunk_rows = []
            for h in range(H):
                pos = len(out) + h
                t = future_ts[pos] if pos < horizon_total else None
                row = cov_rows.get(t) if t is not None else np.zeros(model.n_cov)
                if row is None:
                    raise ModelError(f"covariate coverage error: no covariates at {t}")
                chunk_rows.append(row)
            cov_chunk = np.array(chunk_rows)
        chunk = _forward_chunk(model, window, cov_chunk)
        k = min(H, roll, horizon_total - len(out))
        out.extend(chunk[:k])
        buf.extend(chunk[:k])

    result = np.array(out)
    if scaler is not None:
        result = scaler.inverse(history.id, result)
    return SeriesComponent(
        history.id, history.timeseries_id, tuple(future_ts), tuple(float(v) for v in result)
    )


# model artifact: spec.json (kind + hyperparams + array layout), params.bin
# (little-endian float64 in layout order), scaler.json

def save_model(model: TrainedModel, directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    layout = [
        {"name": name, "shape": list(arr.shape)}
        for name, arr in sorted(model.params.items())
    ]
    (d / "spec.json").write_text(json.dumps({
        "kind": model.spec.kind,
        "hyperparams": model.spec.hyperparams,
        "layout": layout,
        "cov_ids": list(model.cov_ids),
        "train_meta": model.train_meta,
    }, indent=1, sort_keys=True), encoding="utf-8")
    blob = b"".join(
        np.ascontiguousarray(model.params[entry["name"]], dtype="<f8").tobytes()
        for entry in layout
    )
    (d / "params.bin").write_bytes(blob)
    scaler = {"ranges": model.scaler.ranges} if model.scaler else None
    (d / "scaler.json").write_text(json.dumps(scaler, indent=1, sort_keys=True), encoding="utf-8")
    return d


def load_model(directory: str | Path) -> TrainedModel:
    d = Path(directory)
    meta = json.loads((d / "spec.json").read_text(encoding="utf-8"))
    blob = (d / "params.bin").read_bytes()
    params = {}
    offset = 0
    for entry in meta["layout"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        params[entry["name"]] = arr.reshape(entry["shape"]).copy()
        offset += count * 8
    scaler_doc = json.loads((d / "scaler.json").read_text(encoding="utf-8"))
    scaler = None
    if scaler_doc is not None:
        scaler = MinMaxScaler({k: tuple(v) for k, v in scaler_doc["ranges"].items()})
    return TrainedModel(
        ModelSpec(meta["kind"], meta["hyperparams"]),
        params,
        scaler,
        tuple(meta.get("cov_ids", ())),
        meta.get("train_meta", {}),
    )
