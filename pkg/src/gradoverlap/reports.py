"""Experiment reports and their JSON / CSV serialisation."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


@dataclass
class ExperimentReport:
    name: str
    config_echo: dict
    rows: list = field(default_factory=list)
    derived: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _clean({
            "name": self.name,
            "config_echo": self.config_echo,
            "seeds": self.seeds,
            "rows": self.rows,
            "derived": self.derived,
            "tables": self.tables,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def rows_to_csv(rows, path) -> None:
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in _clean(rows):
            w.writerow(["" if r.get(c) is None else (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in cols])


def read_rows_csv(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_report(report: ExperimentReport, out_dir, config_hash: str, timestamp: str | None = None):
    """Write ``<experiment>_<timestamp>_<hash>.json`` and ``.csv``; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = timestamp or datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    stem = f"{report.name}_{stamp}_{config_hash}"
    jpath = out_dir / f"{stem}.json"
    cpath = out_dir / f"{stem}.csv"
    jpath.write_text(report.to_json(), encoding="utf-8")
    rows_to_csv(report.rows, cpath)
    for tname, trows in report.tables.items():
        rows_to_csv(trows, out_dir / f"{stem}_{tname}.csv")
    return jpath, cpath
