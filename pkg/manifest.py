"""
Pipeline manifest: an sqlite ledger of every subcommand run, with the hashes
of the files it read and wrote, so a run can be replayed and compared.
"""

import hashlib
import json
import logging
import sqlite3
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from pydantic import BaseModel

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"
DEFAULT_MANIFEST = "georeg_manifest.db"

PathLike = Union[str, Path]


class Invocation(BaseModel):
    """One recorded subcommand run."""

    id: Optional[int] = None
    command: str
    argv: List[str]
    config: Dict[str, Any] = {}
    tool_version: str = TOOL_VERSION
    inputs: Dict[str, str] = {}
    outputs: Dict[str, str] = {}
    started_at: str = ""
    exit_code: int = 0


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_files(paths: Sequence[PathLike]) -> Dict[str, str]:
    """Path -> sha256 for every path that exists."""
    return {str(p): sha256_file(p) for p in paths if p is not None and Path(p).is_file()}


def init_manifest(db_path: PathLike = DEFAULT_MANIFEST) -> None:
    """Create the invocations table if needed."""
    conn = sqlite3.connect(str(db_path))
    cursor = conn.cursor()
    cursor.execute('''
        CREATE TABLE IF NOT EXISTS invocations (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            command TEXT NOT NULL,
            argv TEXT NOT NULL,
            config TEXT NOT NULL,
            tool_version TEXT NOT NULL,
            inputs TEXT NOT NULL,
            outputs TEXT NOT NULL,
            started_at TEXT NOT NULL,
            exit_code INTEGER NOT NULL
        )
    ''')
    conn.commit()
    conn.close()


def record_invocation(invocation: Invocation, db_path: PathLike = DEFAULT_MANIFEST) -> int:
    """Append one run; returns its row id."""
    init_manifest(db_path)
    started_at = invocation.started_at or datetime.now().isoformat()
    conn = sqlite3.connect(str(db_path))
    try:
        cursor = conn.cursor()
        cursor.execute('''
            INSERT INTO invocations (command, argv, config, tool_version, inputs, outputs, started_at, exit_code)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?)
        ''', (
            invocation.command,
            json.dumps(invocation.argv),
            json.dumps(invocation.config, sort_keys=True, default=str),
            invocation.tool_version,
            json.dumps(invocation.inputs, sort_keys=True),
            json.dumps(invocation.outputs, sort_keys=True),
            started_at,
            invocation.exit_code,
        ))
        conn.commit()
        row_id = cursor.lastrowid
    finally:
        conn.close()
    logger.debug(f"Recorded {invocation.command} as manifest entry {row_id} in {db_path}")
    return row_id


def load_invocations(db_path: PathLike = DEFAULT_MANIFEST) -> List[Invocation]:
    """All recorded runs in the order they happened."""
    if not Path(db_path).exists():
        return []
    conn = sqlite3.connect(str(db_path))
    try:
        cursor = conn.cursor()
        cursor.execute('''
            SELECT id, command, argv, config, tool_version, inputs, outputs, started_at, exit_code
            FROM invocations ORDER BY id
        ''')
        rows = cursor.fetchall()
    except sqlite3.OperationalError:
        rows = []
    finally:
        conn.close()
    return [
        Invocation(id=r[0], command=r[1], argv=json.loads(r[2]), config=json.loads(r[3]), tool_version=r[4],
                   inputs=json.loads(r[5]), outputs=json.loads(r[6]), started_at=r[7], exit_code=r[8])
        for r in rows
    ]
