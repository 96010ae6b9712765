"""Result records and their serialization to CSV tables and a JSON summary."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[tuple]

    def __post_init__(self):
        self.columns = tuple(self.columns)
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ValueError(f"row {r!r} does not match columns {self.columns!r}")


@dataclass
class ResultRecord:
    """Outcome of one experiment.

    ``wall_clock`` is kept in memory only; files written by
    :func:`emit_tables` depend on (config, seed) alone.
    """

    command: str
    input_hash: str
    config: dict
    metrics: dict[str, Any] = field(default_factory=dict)
    tables: dict[str, Table] = field(default_factory=dict)
    verdicts: dict[str, bool] = field(default_factory=dict)
    errors: list[dict] = field(default_factory=list)
    diverged: bool = False
    wall_clock: float | None = None

    @property
    def passed(self) -> bool:
        return not self.errors and all(self.verdicts.values())

    @property
    def exit_code(self) -> int:
        if self.diverged:
            return 3
        return 0 if self.passed else 1

    def add_table(self, slug: str, columns, rows) -> None:
        self.tables[slug] = Table(tuple(columns), [tuple(r) for r in rows])


def input_hash(config_dict: dict) -> str:
    text = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if v is None:
        return ""
    s = str(v)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def summary_dict(record: ResultRecord) -> dict:
    return _jsonable({
        "command": record.command,
        "input_hash": record.input_hash,
        "config": record.config,
        "metrics": record.metrics,
        "verdicts": record.verdicts,
        "errors": record.errors,
        "passed": record.passed,
        "exit_code": record.exit_code,
        "tables": sorted(f"{slug}.csv" for slug in record.tables),
    })


def _write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def emit_tables(record: ResultRecord, output_dir) -> list[Path]:
    """Write ``<slug>.csv`` per table and ``<command>_summary.json``; return the paths."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for slug in sorted(record.tables):
        tab = record.tables[slug]
        lines = [",".join(tab.columns)]
        lines += [",".join(_fmt(v) for v in row) for row in tab.rows]
        path = out / f"{slug}.csv"
        _write(path, "\n".join(lines) + "\n")
        written.append(path)
    path = out / f"{record.command.replace('-', '_')}_summary.json"
    _write(path, json.dumps(summary_dict(record), indent=2, sort_keys=True) + "\n")
    written.append(path)
    return written
