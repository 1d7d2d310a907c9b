"""
Glassy Ising results service: the run registry and closed-form rates over HTTP.
"""

import threading
from typing import Literal, Optional

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, ValidationError

import database as db
from analytic import ModelParameters, rates
from couplings import get_anisotropy
from errors import GlassyIsingError
from pipeline import load_config, merge_config, run, run_config_from

app = FastAPI(title="Glassy Ising", version="1.0")

# One run at a time
_run_lock = threading.Lock()
_run_active: Optional[str] = None


def _database() -> str:
    return load_config().get("output", {}).get("database", "runs.db")


# --- Runs API ---

@app.get("/api/runs")
async def list_runs(
    command: Optional[str] = None,
    status: Optional[str] = None,
    limit: int = Query(20, ge=1, le=500),
):
    runs = db.get_runs(command=command, status=status, limit=limit, path=_database())
    return {"runs": runs, "count": len(runs)}


@app.get("/api/runs/status")
async def run_status():
    return {"running": _run_active is not None, "command": _run_active,
            "stats": db.get_stats(path=_database())}


@app.get("/api/runs/{run_id}")
async def get_run(run_id: int):
    run_row = db.get_run(run_id, path=_database())
    if not run_row:
        raise HTTPException(404, "Run not found")
    return run_row


class RunRequest(BaseModel):
    command: Literal["simulate", "analytic", "scan"]
    overrides: dict = {}


@app.post("/api/runs")
async def trigger_run(request: RunRequest):
    global _run_active
    try:
        config = run_config_from(merge_config(load_config(), request.overrides), request.command)
    except (ValidationError, ValueError) as exc:
        raise HTTPException(422, str(exc))

    with _run_lock:
        if _run_active is not None:
            return {"status": "already_running", "message": f"A {_run_active} run is already in progress"}
        _run_active = request.command

    def _run():
        global _run_active
        try:
            run(config)
        finally:
            with _run_lock:
                _run_active = None

    thread = threading.Thread(target=_run, daemon=True)
    thread.start()
    return {"status": "started", "message": f"{request.command} run started in background"}


# --- Closed forms ---

@app.get("/api/analytic")
async def analytic_rates(
    d: int = Query(..., ge=1),
    alpha: float = Query(..., gt=0),
    density: float = Query(1.0, gt=0),
    c_alpha: float = Query(1.0, gt=0),
    j: list[int] = Query([]),
    anisotropy: Literal["isotropic", "dipolar"] = "isotropic",
):
    try:
        params = ModelParameters(d, alpha, density, c_alpha)
        prediction = rates(params, get_anisotropy(None if anisotropy == "isotropic" else anisotropy), j)
    except (GlassyIsingError, ValueError) as exc:
        raise HTTPException(422, str(exc))
    return dict(prediction.to_dict(), d=d, alpha=alpha, density=density, c_alpha=c_alpha)


if __name__ == "__main__":
    import uvicorn
    config = load_config()
    host = config.get("server", {}).get("host", "127.0.0.1")
    port = config.get("server", {}).get("port", 8080)
    print(f"🚀 Glassy Ising service starting on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port)
