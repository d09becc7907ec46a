"""Authenticated HTTP API: datasets, experiment execution, run inspection,
and system monitoring.

Auth is a salted-hash credential file plus opaque bearer tokens with an
8 h expiry. Token verification goes through a single seam
(``TokenAuthority``) so an external identity provider could replace it.
Pipeline executions run on a small background worker pool (capacity 2,
FIFO beyond that) so request handling never blocks on training.
"""

from __future__ import annotations

import hashlib
import json
import os
import queue
import secrets
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional

import psutil
from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware

from . import tracking
from .core import Resolution, validate_dataset
from .ingest import CsvFormat, CsvLayout, IngestError, parse_dataset
from .pipeline import ConfigError, canonicalize_config, execute_pipeline, prepare_pipeline
from .tracking import Store

ROLES = ("admin", "data_scientist", "domain_expert")
TOKEN_TTL = timedelta(hours=8)
_PBKDF2_ITERATIONS = 100_000


class AuthError(ValueError):
    pass


# ---------------------------------------------------------------- users file

def hash_password(password: str, salt: str) -> str:
    dk = hashlib.pbkdf2_hmac(
        "sha256", password.encode(), bytes.fromhex(salt), _PBKDF2_ITERATIONS
    )
    return dk.hex()


def write_users_file(path: str | Path, users: dict[str, tuple[str, str]]) -> None:
    """users: username -> (password, role). Stores salted PBKDF2 hashes."""
    records = []
    for username, (password, role) in users.items():
        if role not in ROLES:
            raise AuthError(f"unknown role: {role}")
        salt = secrets.token_hex(16)
        records.append(
            {"username": username, "salt": salt,
             "hash": hash_password(password, salt), "role": role}
        )
    Path(path).write_text(json.dumps(records, indent=2), encoding="utf-8")


def load_users(path: str | Path) -> dict[str, dict]:
    records = json.loads(Path(path).read_text(encoding="utf-8"))
    return {r["username"]: r for r in records}


@dataclass(frozen=True)
class AccessToken:
    token: str
    subject: str
    role: str
    expiry: datetime


class TokenAuthority:
    """Issues and verifies opaque bearer tokens. The single auth seam."""

    def __init__(self, users_file: str | Path, clock=None):
        self.users_file = Path(users_file)
        self._tokens: dict[str, AccessToken] = {}
        self._lock = threading.Lock()
        self._clock = clock or (lambda: datetime.now(timezone.utc))

    def login(self, username: str, password: str) -> AccessToken:
        users = load_users(self.users_file)
        record = users.get(username)
        if record is None or hash_password(password, record["salt"]) != record["hash"]:
            raise AuthError("bad credentials")
        token = AccessToken(
            token=secrets.token_urlsafe(32),
            subject=username,
            role=record["role"],
            expiry=self._clock() + TOKEN_TTL,
        )
        with self._lock:
            self._tokens[token.token] = token
        return token

    def verify(self, token: str) -> AccessToken:
        with self._lock:
            record = self._tokens.get(token)
        if record is None or self._clock() >= record.expiry:
            raise AuthError("invalid or expired token")
        return record


# ----------------------------------------------------------------- job pool

class JobRegistry:
    """Background pipeline executions: bounded workers, FIFO queue beyond."""

    def __init__(self, store: Store, capacity: int = 2):
        self.store = store
        self._queue: queue.Queue = queue.Queue()
        self._workers = [
            threading.Thread(target=self._worker, daemon=True) for _ in range(capacity)
        ]
        for w in self._workers:
            w.start()

    def submit(self, config: dict, parent) -> str:
        self._queue.put((config, parent))
        return parent.run_id

    def _worker(self) -> None:
        while True:
            config, parent = self._queue.get()
            try:
                execute_pipeline(self.store, config, parent)
            except Exception:
                pass  # failure is recorded on the run itself
            finally:
                self._queue.task_done()


# -------------------------------------------------------------- role matrix

# endpoint key -> minimum capability set; domain experts get tracking reads
# and monitoring only, data scientists everything but user administration.
READ_ONLY = {"admin", "data_scientist", "domain_expert"}
FULL = {"admin", "data_scientist"}

PERMISSIONS = {
    "datasets:read": FULL,
    "datasets:write": FULL,
    "experiments:execute": FULL,
    "runs:read": READ_ONLY,
    "monitor:read": READ_ONLY,
}


def system_metrics() -> dict:
    vm = psutil.virtual_memory()
    return {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "cpu_percent": psutil.cpu_percent(interval=None),
        "memory_used": vm.used,
        "memory_total": vm.total,
        "gpu": None,
    }


def _run_payload(run: tracking.RunRecord) -> dict:
    return {
        "run_id": run.run_id,
        "experiment": run.experiment,
        "stage": run.stage,
        "parent_run_id": run.parent_run_id,
        "status": run.status,
        "params": run.params,
        "start_time": run.start_time,
        "end_time": run.end_time,
        "artifacts": list(run.artifacts),
    }


def create_app(
    store: Optional[Store] = None,
    users_file: Optional[str | Path] = None,
    authority: Optional[TokenAuthority] = None,
) -> FastAPI:
    store = store or Store()
    users_file = users_file or os.environ.get("TSFOPS_USERS_FILE", "users.json")
    authority = authority or TokenAuthority(users_file)
    jobs = JobRegistry(store)
    datasets_dir = store.root / "_datasets"
    datasets_dir.mkdir(parents=True, exist_ok=True)

    app = FastAPI(title="tsfops")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.store = store
    app.state.authority = authority
    app.state.jobs = jobs

    def require(permission: str):
        def dependency(request: Request) -> AccessToken:
            header = request.headers.get("authorization", "")
            if not header.lower().startswith("bearer "):
                raise HTTPException(401, "missing bearer token")
            try:
                token = authority.verify(header[7:])
            except AuthError as exc:
                raise HTTPException(401, str(exc)) from exc
            if token.role not in PERMISSIONS[permission]:
                raise HTTPException(403, f"role {token.role} may not {permission}")
            return token

        return Depends(dependency)

    @app.post("/auth/login")
    async def login(body: dict):
        try:
            token = authority.login(body.get("username", ""), body.get("password", ""))
        except AuthError as exc:
            raise HTTPException(401, str(exc)) from exc
        return {
            "access_token": token.token,
            "role": token.role,
            "expires_at": token.expiry.isoformat(),
        }

    @app.get("/datasets")
    async def list_datasets(_: AccessToken = require("datasets:read")):
        out = []
        for p in sorted(datasets_dir.glob("*.csv")):
            meta = json.loads(p.with_suffix(".json").read_text(encoding="utf-8"))
            out.append(meta)
        return {"datasets": out}

    @app.post("/datasets", status_code=201)
    async def upload_dataset(body: dict, _: AccessToken = require("datasets:write")):
        csv_text = body.get("csv")
        if not isinstance(csv_text, str):
            raise HTTPException(422, "csv body field required")
        layout = body.get("layout", "single_long")
        day_first = bool(body.get("day_first", False))
        resolution = int(body.get("resolution", 60))
        try:
            fmt = CsvFormat(CsvLayout(layout), day_first)
            ds = parse_dataset(csv_text, fmt, Resolution(resolution))
        except (IngestError, ValueError) as exc:
            raise HTTPException(422, str(exc)) from exc
        report = validate_dataset(ds)
        if not report.ok:
            raise HTTPException(422, "; ".join(report.violations))
        dataset_id = uuid.uuid4().hex[:12]
        path = datasets_dir / f"{dataset_id}.csv"
        path.write_text(csv_text, encoding="utf-8")
        meta = {
            "id": dataset_id,
            "name": body.get("name", dataset_id),
            "layout": layout,
            "day_first": day_first,
            "resolution": resolution,
            "n_components": len(ds.components),
        }
        path.with_suffix(".json").write_text(json.dumps(meta), encoding="utf-8")
        return meta

    @app.post("/experiments/execute", status_code=202)
    async def execute(body: dict, _: AccessToken = require("experiments:execute")):
        raw = dict(body)
        source = raw.get("series_csv")
        if isinstance(source, str) and not Path(source).exists():
            stored = datasets_dir / f"{source}.csv"
            if stored.exists():
                raw["series_csv"] = str(stored)
            else:
                raise HTTPException(400, f"dataset not found: {source}")
        try:
            config, parent = prepare_pipeline(store, raw)
        except ConfigError as exc:
            raise HTTPException(400, str(exc)) from exc
        jobs.submit(config, parent)
        return {"run_id": parent.run_id, "status": "RUNNING"}

    def _find_run(run_id: str) -> tracking.RunRecord:
        runs = tracking.query_runs(store, run_id=run_id)
        if not runs:
            raise HTTPException(404, f"run not found: {run_id}")
        return runs[0]

    @app.get("/runs/{run_id}")
    async def get_run(run_id: str, _: AccessToken = require("runs:read")):
        return _run_payload(_find_run(run_id))

    @app.get("/runs/{run_id}/metrics")
    async def get_metrics(run_id: str, _: AccessToken = require("runs:read")):
        run = _find_run(run_id)
        # pipeline parents delegate to their eval child
        if run.stage == "pipeline" and not run.metrics and "eval_run" in run.params:
            run = _find_run(run.params["eval_run"])
        latest = {name: series[-1][1] for name, series in run.metrics.items() if series}
        return {"run_id": run.run_id, "metrics": latest}

    @app.get("/runs/{run_id}/plot")
    async def get_plot(
        run_id: str,
        n_samples: int = Query(default=0, ge=0),
        _: AccessToken = require("runs:read"),
    ):
        run = _find_run(run_id)
        if run.stage == "pipeline" and "eval_run" in run.params:
            run = _find_run(run.params["eval_run"])
        names = [a for a in run.artifacts if a.startswith("forecast/")]
        if not names:
            raise HTTPException(404, "run has no forecast artifacts")
        text = tracking.artifact_path(store, run, names[0]).read_text(encoding="utf-8")
        rows = []
        for line in text.splitlines()[1:]:
            ts, actual, forecast = line.split(",")
            rows.append({
                "timestamp": ts,
                "actual": float(actual) if actual else None,
                "forecast": float(forecast) if forecast else None,
            })
        if n_samples:
            rows = rows[:n_samples]
        return {"run_id": run.run_id, "series": names[0], "points": rows}

    @app.get("/experiments")
    async def list_experiments(
        name: Optional[str] = None,
        run_id: Optional[str] = None,
        _: AccessToken = require("runs:read"),
    ):
        runs = tracking.query_runs(store, experiment=name, run_id=run_id)
        return {"runs": [_run_payload(r) for r in runs]}

    @app.get("/monitor")
    async def monitor(_: AccessToken = require("monitor:read")):
        return system_metrics()

    return app


def main() -> None:  # pragma: no cover - thin launcher
    import uvicorn

    port = int(os.environ.get("TSFOPS_PORT", "8080"))
    uvicorn.run(create_app(), host="0.0.0.0", port=port)


if __name__ == "__main__":  # pragma: no cover
    main()
