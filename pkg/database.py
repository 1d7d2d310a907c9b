"""
Run registry: SQLite schema + CRUD for the provenance of every run.
"""

import json
import sqlite3
from pathlib import Path

DB_PATH = Path(__file__).parent / "runs.db"


def get_connection(path=None) -> sqlite3.Connection:
    conn = sqlite3.connect(str(path or DB_PATH))
    conn.row_factory = sqlite3.Row
    conn.execute("PRAGMA journal_mode=WAL")
    conn.execute("PRAGMA foreign_keys=ON")
    _init_schema(conn)
    return conn


def _init_schema(conn: sqlite3.Connection):
    conn.executescript("""
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            command TEXT NOT NULL,
            config TEXT NOT NULL,
            output_dir TEXT,
            status TEXT DEFAULT 'running',
            summary TEXT,
            error TEXT,
            started_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
            completed_at TIMESTAMP
        );

        CREATE TABLE IF NOT EXISTS run_files (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            run_id INTEGER NOT NULL REFERENCES runs(id) ON DELETE CASCADE,
            path TEXT NOT NULL,
            kind TEXT
        );

        CREATE INDEX IF NOT EXISTS idx_runs_command ON runs(command);
        CREATE INDEX IF NOT EXISTS idx_runs_status ON runs(status);
        CREATE INDEX IF NOT EXISTS idx_run_files_run ON run_files(run_id);
    """)


# --- Run CRUD ---

def create_run(command: str, config: dict, output_dir: str, path=None) -> int:
    conn = get_connection(path)
    try:
        cur = conn.execute(
            "INSERT INTO runs (command, config, output_dir, status) VALUES (?, ?, ?, 'running')",
            (command, json.dumps(config, sort_keys=True), output_dir),
        )
        conn.commit()
        return cur.lastrowid
    finally:
        conn.close()


def complete_run(run_id: int, status: str = "completed", summary: dict | None = None,
                 error: str | None = None, path=None):
    conn = get_connection(path)
    try:
        conn.execute("""
            UPDATE runs SET completed_at = CURRENT_TIMESTAMP, status = ?, summary = ?, error = ?
            WHERE id = ?
        """, (status, json.dumps(summary, default=str) if summary is not None else None, error, run_id))
        conn.commit()
    finally:
        conn.close()


def add_run_files(run_id: int, files: list, path=None):
    conn = get_connection(path)
    try:
        conn.executemany(
            "INSERT INTO run_files (run_id, path, kind) VALUES (?, ?, ?)",
            [(run_id, str(f), Path(f).suffix.lstrip(".")) for f in files],
        )
        conn.commit()
    finally:
        conn.close()


def _decode(row: sqlite3.Row) -> dict:
    run = dict(row)
    for key in ("config", "summary"):
        if run.get(key):
            run[key] = json.loads(run[key])
    return run


def get_runs(command: str | None = None, status: str | None = None, limit: int = 20, path=None) -> list[dict]:
    conn = get_connection(path)
    query = "SELECT * FROM runs WHERE 1=1"
    params = []
    if command:
        query += " AND command = ?"
        params.append(command)
    if status:
        query += " AND status = ?"
        params.append(status)
    query += " ORDER BY id DESC LIMIT ?"
    params.append(limit)
    rows = conn.execute(query, params).fetchall()
    conn.close()
    return [_decode(r) for r in rows]


def get_run(run_id: int, path=None) -> dict | None:
    conn = get_connection(path)
    row = conn.execute("SELECT * FROM runs WHERE id = ?", (run_id,)).fetchone()
    if not row:
        conn.close()
        return None
    run = _decode(row)
    files = conn.execute("SELECT path, kind FROM run_files WHERE run_id = ? ORDER BY id", (run_id,)).fetchall()
    conn.close()
    run["files"] = [dict(f) for f in files]
    return run


def get_stats(path=None) -> dict:
    conn = get_connection(path)
    total = conn.execute("SELECT COUNT(*) FROM runs").fetchone()[0]
    by_status = {r["status"]: r["cnt"] for r in
                 conn.execute("SELECT status, COUNT(*) as cnt FROM runs GROUP BY status").fetchall()}
    by_command = {r["command"]: r["cnt"] for r in
                  conn.execute("SELECT command, COUNT(*) as cnt FROM runs GROUP BY command").fetchall()}
    conn.close()
    return {"total_runs": total, "by_status": by_status, "by_command": by_command}
