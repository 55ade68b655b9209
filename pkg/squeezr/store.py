from __future__ import annotations

import json
import os
import sqlite3
import uuid
from datetime import datetime
from pathlib import Path
from typing import Any

DB_FILE = "runs.db"


def get_db_path(output_dir: str | Path) -> Path:
    """Ledger location: ``SQUEEZR_DB_PATH`` if set, else ``<output_dir>/runs.db``."""
    override = os.environ.get("SQUEEZR_DB_PATH")
    if override:
        path = Path(override)
    else:
        path = Path(output_dir) / DB_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


class RunStore:
    """SQLite ledger of simulated campaigns, one row per seeded run."""

    def __init__(self, db_path: str | Path):
        self.db_path = str(db_path)
        self._init_db()

    def _init_db(self):
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        cursor.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                run_id TEXT PRIMARY KEY,
                campaign TEXT NOT NULL,
                seed INTEGER NOT NULL,
                mode TEXT NOT NULL,
                config TEXT,
                summary TEXT,
                output_dir TEXT,
                wall_time_s REAL,
                created_at TEXT
            )
        """)

        cursor.execute("""
            CREATE INDEX IF NOT EXISTS idx_runs_campaign_seed
            ON runs(campaign, seed)
        """)

        conn.commit()
        conn.close()

    def record_run(
        self,
        summary: dict[str, Any],
        output_dir: str | Path | None = None,
        wall_time_s: float | None = None,
    ) -> str:
        """Insert one run from its ``summary.json`` content; returns the run id."""
        run_id = str(uuid.uuid4())
        now = datetime.now().isoformat()
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()
        cursor.execute(
            """INSERT INTO runs (run_id, campaign, seed, mode, config, summary,
                                 output_dir, created_at, wall_time_s)
               VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)""",
            (
                run_id,
                summary["name"],
                int(summary["seed"]),
                summary["mode"],
                json.dumps(summary["config"]),
                json.dumps({k: v for k, v in summary.items() if k != "config"}),
                None if output_dir is None else str(output_dir),
                now,
                wall_time_s,
            ),
        )
        conn.commit()
        conn.close()
        return run_id

    def list_runs(self, campaign: str | None = None) -> list[dict[str, Any]]:
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()
        query = """SELECT run_id, campaign, seed, mode, summary, output_dir,
                          created_at, wall_time_s
                   FROM runs"""
        params: tuple = ()
        if campaign is not None:
            query += " WHERE campaign = ?"
            params = (campaign,)
        cursor.execute(query + " ORDER BY created_at, seed", params)
        rows = cursor.fetchall()
        conn.close()
        runs = []
        for row in rows:
            summary = json.loads(row[4]) if row[4] else {}
            duty = summary.get("duty_cycle", {})
            runs.append(
                {
                    "run_id": row[0],
                    "campaign": row[1],
                    "seed": row[2],
                    "mode": row[3],
                    "duration_s": summary.get("duration_s"),
                    "lock_fraction": duty.get("lock_fraction"),
                    "relock_count": summary.get("summary", {}).get("relock_count"),
                    "output_dir": row[5],
                    "created_at": row[6],
                    "wall_time_s": row[7],
                }
            )
        return runs

    def get_run(self, run_id: str) -> dict[str, Any] | None:
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()
        cursor.execute(
            """SELECT run_id, campaign, seed, mode, config, summary, output_dir,
                      created_at, wall_time_s
               FROM runs WHERE run_id = ?""",
            (run_id,),
        )
        row = cursor.fetchone()
        conn.close()
        if row is None:
            return None
        return {
            "run_id": row[0],
            "campaign": row[1],
            "seed": row[2],
            "mode": row[3],
            "config": json.loads(row[4]) if row[4] else None,
            "summary": json.loads(row[5]) if row[5] else None,
            "output_dir": row[6],
            "created_at": row[7],
            "wall_time_s": row[8],
        }

    def delete_run(self, run_id: str) -> bool:
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()
        cursor.execute("DELETE FROM runs WHERE run_id = ?", (run_id,))
        deleted = cursor.rowcount > 0
        conn.commit()
        conn.close()
        return deleted

    def run_count(self, campaign: str | None = None) -> int:
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()
        if campaign is None:
            cursor.execute("SELECT COUNT(*) FROM runs")
        else:
            cursor.execute("SELECT COUNT(*) FROM runs WHERE campaign = ?", (campaign,))
        count = cursor.fetchone()[0]
        conn.close()
        return count
