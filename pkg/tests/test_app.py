import math
import time

import pytest
from fastapi.testclient import TestClient

import app as app_module
import database as db


@pytest.fixture
def client(monkeypatch, db_path):
    monkeypatch.setattr(app_module, "_database", lambda: db_path)
    return TestClient(app_module.app)


def test_analytic_endpoint(client):
    resp = client.get("/api/analytic", params={"d": 3, "alpha": 6, "j": [2, 4]})
    assert resp.status_code == 200
    data = resp.json()
    assert data["beta_m"] == 0.5
    assert data["gamma_p"] == pytest.approx(data["gamma_m"] / 2)
    assert set(data["gamma_j"]) == {"2", "4"}


def test_analytic_endpoint_dipolar(client):
    data = client.get("/api/analytic", params={"d": 3, "alpha": 3, "anisotropy": "dipolar"}).json()
    assert data["exponential"]
    assert data["chi"] == pytest.approx(4 / (3 * math.sqrt(3)), abs=1e-6)


def test_analytic_endpoint_rejects_alpha_below_d(client):
    resp = client.get("/api/analytic", params={"d": 3, "alpha": 2})
    assert resp.status_code == 422
    assert "alpha >= d" in resp.json()["detail"]


def test_runs_listing(client, db_path):
    run_id = db.create_run("analytic", {"d": 3}, "out", path=db_path)
    db.complete_run(run_id, summary={"beta_m": 0.5}, path=db_path)

    data = client.get("/api/runs").json()
    assert data["count"] == 1
    assert data["runs"][0]["summary"] == {"beta_m": 0.5}
    assert client.get(f"/api/runs/{run_id}").json()["command"] == "analytic"
    assert client.get("/api/runs/9999").status_code == 404
    assert client.get("/api/runs", params={"command": "scan"}).json()["count"] == 0


def test_status_when_idle(client):
    data = client.get("/api/runs/status").json()
    assert data["running"] is False
    assert data["stats"]["total_runs"] == 0


def test_trigger_rejects_invalid_overrides(client):
    resp = client.post("/api/runs", json={"command": "analytic", "overrides": {"model": {"alpha": 1}}})
    assert resp.status_code == 422


def test_trigger_runs_in_background(client, tmp_path, db_path):
    overrides = {
        "model": {"d": 2, "alpha": 4},
        "grid": {"points": 20},
        "output": {"dir": str(tmp_path / "out"), "database": db_path},
    }
    resp = client.post("/api/runs", json={"command": "analytic", "overrides": overrides})
    assert resp.json()["status"] == "started"

    deadline = time.time() + 60
    while client.get("/api/runs/status").json()["running"] and time.time() < deadline:
        time.sleep(0.1)
    runs = client.get("/api/runs").json()["runs"]
    assert runs[0]["status"] == "completed"
    assert (tmp_path / "out" / "rates.json").exists()
