import time
from datetime import datetime, timedelta, timezone

import pytest
from fastapi.testclient import TestClient

from tsfops import tracking
from tsfops.pipeline import run_pipeline
from tsfops.service import (
    AuthError,
    TokenAuthority,
    create_app,
    load_users,
    system_metrics,
    write_users_file,
)

from conftest import single_csv, sinusoid

USERS = {
    "alice": ("admin-pw", "admin"),
    "dana": ("ds-pw", "data_scientist"),
    "eve": ("de-pw", "domain_expert"),
}


@pytest.fixture
def users_file(tmp_path):
    path = tmp_path / "users.json"
    write_users_file(path, USERS)
    return path


@pytest.fixture
def client(store, users_file):
    return TestClient(create_app(store, users_file))


def login(client, user):
    r = client.post("/auth/login", json={"username": user, "password": USERS[user][0]})
    assert r.status_code == 200
    return {"Authorization": f"Bearer {r.json()['access_token']}"}


def sample_csv():
    return single_csv(sinusoid(24 * 120, noise=1.0, seed=0),
                      start=datetime(2020, 1, 1))


def pipeline_config(series_ref):
    return {
        "experiment_name": "svc",
        "series_csv": series_ref,
        "resolution": 60,
        "cut_date_val": "20200301",
        "cut_date_test": "20200401",
        "test_end_date": "20200429",
        "model": "seasonal_naive",
        "hyperparams": {"m": 24},
        "m_mase": 24,
        "forecast_horizon": 24,
    }


def finished_eval_run(store, tmp_path):
    series = tmp_path / "s.csv"
    series.write_text(sample_csv())
    parent = run_pipeline(store, pipeline_config(str(series)))
    return parent


def test_users_file_stores_salted_hashes(users_file):
    records = load_users(users_file)
    assert set(records) == set(USERS)
    for user, rec in records.items():
        assert USERS[user][0] not in str(rec)  # never the plain password
        assert len(rec["salt"]) == 32 and len(rec["hash"]) == 64


def test_login_and_bad_credentials(client):
    r = client.post("/auth/login", json={"username": "alice", "password": "admin-pw"})
    assert r.status_code == 200
    body = r.json()
    assert body["role"] == "admin" and body["access_token"]
    r = client.post("/auth/login", json={"username": "alice", "password": "wrong"})
    assert r.status_code == 401
    r = client.post("/auth/login", json={"username": "ghost", "password": "x"})
    assert r.status_code == 401


def test_expired_token_rejected(users_file, store):
    now = [datetime(2020, 1, 1, tzinfo=timezone.utc)]
    authority = TokenAuthority(users_file, clock=lambda: now[0])
    token = authority.login("alice", "admin-pw")
    assert authority.verify(token.token).subject == "alice"
    now[0] += timedelta(hours=8, minutes=1)
    with pytest.raises(AuthError):
        authority.verify(token.token)

    client = TestClient(create_app(store, users_file, authority=authority))
    r = client.get("/monitor", headers={"Authorization": f"Bearer {token.token}"})
    assert r.status_code == 401


# (method, path, permission bucket); the full role matrix is checked for each
ENDPOINTS = [
    ("GET", "/datasets", "full"),
    ("POST", "/datasets", "full"),
    ("POST", "/experiments/execute", "full"),
    ("GET", "/runs/xyz", "read"),
    ("GET", "/runs/xyz/metrics", "read"),
    ("GET", "/runs/xyz/plot", "read"),
    ("GET", "/experiments", "read"),
    ("GET", "/monitor", "read"),
]

ALLOWED = {
    "anonymous": set(),
    "domain_expert": {"read"},
    "data_scientist": {"read", "full"},
    "admin": {"read", "full"},
}


def test_role_matrix_exhaustive(client):
    headers = {"anonymous": {}}
    for user, (_, role) in USERS.items():
        headers[role] = login(client, user)
    for method, path, bucket in ENDPOINTS:
        for role, allowed_buckets in ALLOWED.items():
            r = client.request(method, path, headers=headers[role],
                               json={} if method == "POST" else None)
            denied_codes = {401} if role == "anonymous" else {403}
            if bucket in allowed_buckets:
                assert r.status_code not in (401, 403), (method, path, role)
            else:
                assert r.status_code in denied_codes, (method, path, role)


def test_dataset_upload_and_listing(client):
    h = login(client, "dana")
    r = client.post("/datasets", json={
        "csv": sample_csv(), "layout": "single_long", "resolution": 60,
        "name": "office-load"}, headers=h)
    assert r.status_code == 201
    ds_id = r.json()["id"]
    r2 = client.post("/datasets", json={
        "csv": sample_csv(), "layout": "single_long", "resolution": 60}, headers=h)
    assert r2.json()["id"] != ds_id  # no dedup: re-upload gets a new id
    listing = client.get("/datasets", headers=h).json()["datasets"]
    assert any(d["id"] == ds_id and d["name"] == "office-load" for d in listing)


def test_dataset_upload_validation_errors(client):
    assert client.post("/datasets", json={
        "csv": "", "layout": "single_long", "resolution": 60},
        headers=login(client, "dana")).status_code == 422
    r = client.post("/datasets", json={
        "csv": "Datetime,Value\nbogus,1\n", "layout": "single_long",
        "resolution": 60}, headers=login(client, "dana"))
    assert r.status_code == 422
    assert "date parse error" in r.json()["detail"]


def test_execute_missing_dataset_400(client):
    h = login(client, "dana")
    r = client.post("/experiments/execute",
                    json=pipeline_config("no-such-dataset"), headers=h)
    assert r.status_code == 400


def test_execute_bad_config_400(client, tmp_path):
    h = login(client, "dana")
    series = tmp_path / "s.csv"
    series.write_text(sample_csv())
    cfg = pipeline_config(str(series))
    cfg["bogus"] = 1
    r = client.post("/experiments/execute", json=cfg, headers=h)
    assert r.status_code == 400


def test_execute_is_async_and_pollable(client, tmp_path):
    h = login(client, "dana")
    series = tmp_path / "s.csv"
    series.write_text(sample_csv())
    t0 = time.monotonic()
    r = client.post("/experiments/execute", json=pipeline_config(str(series)),
                    headers=h)
    latency = time.monotonic() - t0
    assert r.status_code == 202
    assert latency < 0.2
    run_id = r.json()["run_id"]
    for _ in range(200):
        status = client.get(f"/runs/{run_id}", headers=h).json()["status"]
        if status != "RUNNING":
            break
        time.sleep(0.1)
    assert status == "FINISHED"


def test_run_metrics_and_plot(client, store, tmp_path):
    h = login(client, "eve")  # read endpoints work for domain experts
    parent = finished_eval_run(store, tmp_path)
    eval_id = parent.params["eval_run"]
    r = client.get(f"/runs/{eval_id}/metrics", headers=h)
    assert r.status_code == 200
    metrics = r.json()["metrics"]
    assert "mape" in metrics and "mase" in metrics
    # pipeline parent delegates to its eval child
    r2 = client.get(f"/runs/{parent.run_id}/metrics", headers=h)
    assert r2.json()["metrics"]["mape"] == metrics["mape"]

    full = client.get(f"/runs/{eval_id}/plot", headers=h).json()["points"]
    sliced = client.get(f"/runs/{eval_id}/plot", params={"n_samples": 100},
                        headers=h).json()["points"]
    assert len(sliced) == min(100, len(full)) and sliced == full[:len(sliced)]
    assert {"timestamp", "actual", "forecast"} <= set(full[0])


def test_unknown_run_404(client):
    h = login(client, "eve")
    assert client.get("/runs/nope", headers=h).status_code == 404
    assert client.get("/runs/nope/metrics", headers=h).status_code == 404


def test_experiments_query(client, store, tmp_path):
    parent = finished_eval_run(store, tmp_path)
    h = login(client, "eve")
    by_name = client.get("/experiments", params={"name": "svc"}, headers=h).json()
    assert {r["stage"] for r in by_name["runs"]} == {
        "pipeline", "load", "etl", "train", "eval"}
    by_id = client.get("/experiments", params={"run_id": parent.run_id},
                       headers=h).json()
    assert len(by_id["runs"]) == 1 and by_id["runs"][0]["run_id"] == parent.run_id


def test_monitor_snapshot(client):
    h = login(client, "eve")
    a = client.get("/monitor", headers=h).json()
    assert 0.0 <= a["cpu_percent"] <= 100.0
    assert 0 < a["memory_used"] <= a["memory_total"]
    assert a["gpu"] is None
    time.sleep(1.0)
    b = client.get("/monitor", headers=h).json()
    assert b["timestamp"] != a["timestamp"]


def test_system_metrics_fields():
    m = system_metrics()
    assert set(m) == {"timestamp", "cpu_percent", "memory_used", "memory_total", "gpu"}
