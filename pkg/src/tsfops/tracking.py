"""File-backed experiment tracking.

Store layout (root from $TSFOPS_STORE, default ./tsfops_store):

    <root>/<experiment>/<run_id>/meta.json
                                 params.json
                                 metrics/<name>.csv   (step,value rows)
                                 artifacts/...

Every metadata write goes through write-temp-then-rename, so a run
interrupted mid-write reads back as RUNNING or FAILED, never corrupt.
Per-run directories are single-writer; concurrent runs only share the
experiment directory, where atomic rename suffices.
"""

from __future__ import annotations

import json
import os
import tempfile
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

STAGES = ("load", "etl", "train", "optuna_search", "eval", "pipeline", "inference")
STATUSES = ("RUNNING", "FINISHED", "FAILED")

# bookkeeping params never considered when matching runs for resume
RESUME_EXCLUDED_PARAMS = frozenset(
    {"run_id", "parent_run_id", "start_time", "end_time", "timestamp", "error"}
)


class TrackingError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    experiment: str
    stage: str
    parent_run_id: Optional[str] = None
    params: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)  # name -> list of (step, value)
    artifacts: tuple[str, ...] = ()
    status: str = "RUNNING"
    start_time: str = ""
    end_time: Optional[str] = None


class Store:
    def __init__(self, root: Optional[str | Path] = None):
        if root is None:
            root = os.environ.get("TSFOPS_STORE", "./tsfops_store")
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def experiment_dir(self, name: str) -> Path:
        return self.root / name

    def run_dir(self, experiment: str, run_id: str) -> Path:
        return self.root / experiment / run_id


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_meta(store: Store, run: RunRecord) -> None:
    meta = {
        "run_id": run.run_id,
        "experiment": run.experiment,
        "stage": run.stage,
        "parent_run_id": run.parent_run_id,
        "artifacts": list(run.artifacts),
        "status": run.status,
        "start_time": run.start_time,
        "end_time": run.end_time,
    }
    d = store.run_dir(run.experiment, run.run_id)
    _atomic_write(d / "meta.json", json.dumps(meta, indent=1))


def _write_params(store: Store, run: RunRecord) -> None:
    d = store.run_dir(run.experiment, run.run_id)
    _atomic_write(d / "params.json", json.dumps(run.params, indent=1, sort_keys=True))


def create_experiment(store: Store, name: str) -> str:
    """Idempotent: an existing name returns the existing experiment."""
    if not name:
        raise TrackingError("experiment name must be non-empty")
    store.experiment_dir(name).mkdir(parents=True, exist_ok=True)
    return name


def start_run(
    store: Store,
    experiment: str,
    stage: str,
    parent_run_id: Optional[str] = None,
    params: Optional[dict] = None,
) -> RunRecord:
    if stage not in STAGES:
        raise TrackingError(f"unknown stage: {stage}")
    if not store.experiment_dir(experiment).is_dir():
        raise TrackingError(f"unknown experiment: {experiment}")
    run = RunRecord(
        run_id=uuid.uuid4().hex,
        experiment=experiment,
        stage=stage,
        parent_run_id=parent_run_id,
        params=dict(params or {}),
        start_time=_now(),
    )
    _write_meta(store, run)
    _write_params(store, run)
    return run


def _check_open(run: RunRecord) -> None:
    if run.status != "RUNNING":
        raise TrackingError("run sealed")


def log_param(store: Store, run: RunRecord, key: str, value: str) -> RunRecord:
    _check_open(run)
    run.params[key] = str(value)
    _write_params(store, run)
    return run


def log_params(store: Store, run: RunRecord, params: dict) -> RunRecord:
    _check_open(run)
    run.params.update({k: str(v) for k, v in params.items()})
    _write_params(store, run)
    return run


def log_metric(
    store: Store, run: RunRecord, name: str, value: float, step: int = 0
) -> RunRecord:
    _check_open(run)
    run.metrics.setdefault(name, []).append((step, float(value)))
    d = store.run_dir(run.experiment, run.run_id) / "metrics"
    d.mkdir(parents=True, exist_ok=True)
    with open(d / f"{name}.csv", "a", encoding="utf-8") as fh:
        fh.write(f"{step},{value!r}\n")
        fh.flush()
        os.fsync(fh.fileno())
    return run


def log_artifact_bytes(store: Store, run: RunRecord, rel_path: str, data: bytes) -> Path:
    _check_open(run)
    dest = store.run_dir(run.experiment, run.run_id) / "artifacts" / rel_path
    dest.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=".tmp-")
    with os.fdopen(fd, "wb") as fh:
        fh.write(data)
    os.replace(tmp, dest)
    object.__setattr__(run, "artifacts", run.artifacts + (rel_path,))
    _write_meta(store, run)
    return dest


def log_artifact_text(store: Store, run: RunRecord, rel_path: str, text: str) -> Path:
    return log_artifact_bytes(store, run, rel_path, text.encode("utf-8"))


def log_artifact_file(store: Store, run: RunRecord, rel_path: str, src: Path) -> Path:
    return log_artifact_bytes(store, run, rel_path, Path(src).read_bytes())


def artifact_path(store: Store, run: RunRecord, rel_path: str) -> Path:
    p = store.run_dir(run.experiment, run.run_id) / "artifacts" / rel_path
    if not p.exists():
        raise TrackingError(f"upstream artifact not found: {rel_path} in run {run.run_id}")
    return p


def end_run(store: Store, run: RunRecord, status: str) -> RunRecord:
    if status not in ("FINISHED", "FAILED"):
        raise TrackingError(f"invalid terminal status: {status}")
    sealed = replace(run, status=status, end_time=_now())
    _write_meta(store, sealed)
    return sealed


def _load_metrics(run_dir: Path) -> dict:
    metrics: dict = {}
    mdir = run_dir / "metrics"
    if mdir.is_dir():
        for f in sorted(mdir.glob("*.csv")):
            points = []
            for line in f.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                step, value = line.split(",", 1)
                points.append((int(step), float(value)))
            metrics[f.stem] = points
    return metrics


def load_run(store: Store, experiment: str, run_id: str) -> RunRecord:
    d = store.run_dir(experiment, run_id)
    meta_path = d / "meta.json"
    if not meta_path.exists():
        raise TrackingError(f"unknown run: {run_id}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    params = {}
    if (d / "params.json").exists():
        params = json.loads((d / "params.json").read_text(encoding="utf-8"))
    return RunRecord(
        run_id=meta["run_id"],
        experiment=meta["experiment"],
        stage=meta["stage"],
        parent_run_id=meta.get("parent_run_id"),
        params=params,
        metrics=_load_metrics(d),
        artifacts=tuple(meta.get("artifacts", ())),
        status=meta["status"],
        start_time=meta.get("start_time", ""),
        end_time=meta.get("end_time"),
    )


def query_runs(
    store: Store,
    experiment: Optional[str] = None,
    run_id: Optional[str] = None,
    stage: Optional[str] = None,
    status: Optional[str] = None,
) -> list[RunRecord]:
    runs: list[RunRecord] = []
    experiments = [experiment] if experiment else sorted(
        p.name for p in store.root.iterdir() if p.is_dir()
    )
    for exp in experiments:
        exp_dir = store.experiment_dir(exp)
        if not exp_dir.is_dir():
            continue
        for run_path in sorted(exp_dir.iterdir()):
            if not (run_path / "meta.json").exists():
                continue
            try:
                run = load_run(store, exp, run_path.name)
            except (json.JSONDecodeError, KeyError):
                continue  # torn write in progress
            if run_id and run.run_id != run_id:
                continue
            if stage and run.stage != stage:
                continue
            if status and run.status != status:
                continue
            runs.append(run)
    return runs


def find_matching_run(
    store: Store, experiment: str, stage: str, params: dict
) -> Optional[RunRecord]:
    """Most recent FINISHED run of the stage whose stage-relevant params all
    match exactly (bookkeeping keys excluded; extra informational params
    logged by the stage are ignored)."""
    wanted = {
        k: str(v) for k, v in params.items() if k not in RESUME_EXCLUDED_PARAMS
    }
    best: Optional[RunRecord] = None
    for run in query_runs(store, experiment=experiment, stage=stage, status="FINISHED"):
        have = {
            k: v for k, v in run.params.items() if k not in RESUME_EXCLUDED_PARAMS
        }
        if all(have.get(k) == v for k, v in wanted.items()):
            if best is None or run.start_time > best.start_time:
                best = run
    return best
