"""On-disk artifacts: manifest JSON, monitor CSV and gzipped state snapshots.

Everything is written deterministically (sorted keys, ``repr`` floats, gzip
mtime pinned to zero) so identical runs produce identical bytes.
"""
from __future__ import annotations

import csv
import gzip
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from .. import __version__
from ..solver import MONITOR_COLUMNS, State
from ..spectral import SpectralBasis, field_from_json, field_to_json

__all__ = [
    "write_json",
    "read_json",
    "write_monitors_csv",
    "read_monitors_csv",
    "write_snapshots",
    "read_snapshots",
    "write_series_csv",
    "RunManifest",
]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def write_json(path, obj):
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"
    _atomic_write(Path(path), text.encode("utf-8"))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _fmt(x) -> str:
    return repr(float(x))


def write_monitors_csv(path, record, extra: dict = None):
    """Monitor table, one row per sample; ``extra`` adds named columns."""
    cols = list(MONITOR_COLUMNS)
    extra = extra or {}
    cols += list(extra)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    data = [np.asarray(record.monitors[c]) for c in MONITOR_COLUMNS] + [np.asarray(v) for v in extra.values()]
    for row in zip(*data):
        w.writerow([_fmt(x) for x in row])
    _atomic_write(Path(path), buf.getvalue().encode("utf-8"))


def read_monitors_csv(path) -> dict:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    head, body = rows[0], rows[1:]
    if any(len(r) != len(head) for r in body):
        raise ValueError(f"{path} has ragged rows")
    arr = np.array([[float(x) for x in r] for r in body]) if body else np.zeros((0, len(head)))
    return {h: arr[:, i] for i, h in enumerate(head)}


def write_series_csv(path, columns: dict):
    names = list(columns)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*[np.asarray(columns[n]) for n in names]):
        w.writerow([_fmt(x) for x in row])
    _atomic_write(Path(path), buf.getvalue().encode("utf-8"))


def write_snapshots(path, states):
    """JSON-lines stream ``{"t", "u", "v"}`` compressed with a fixed gzip header."""
    raw = io.BytesIO()
    with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
        for s in states:
            line = json.dumps({"t": repr(float(s.t)), "u": field_to_json(s.u), "v": field_to_json(s.v)}, sort_keys=True)
            gz.write(line.encode("utf-8") + b"\n")
    _atomic_write(Path(path), raw.getvalue())


def read_snapshots(path, basis: SpectralBasis = None):
    out = []
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            u = field_from_json(obj["u"], basis)
            basis = basis or u.basis
            v = field_from_json(obj["v"], basis)
            out.append(State(u, v, float(obj["t"])))
    return out


class RunManifest:
    """Crash-visible manifest: written as ``running`` first, finalised last."""

    FILENAME = "manifest.json"

    def __init__(self, out_dir, subcommand: str, config, seed: int):
        self.out_dir = Path(out_dir)
        self.data = {
            "subcommand": subcommand,
            "code_version": __version__,
            "config_hash": config.hash,
            "config": config.to_dict(),
            "master_seed": int(seed),
            "seeds": [],
            "outcome": "running",
            "diagnostics": {},
            "artifacts": [],
            "exit_code": None,
        }

    @property
    def path(self) -> Path:
        return self.out_dir / self.FILENAME

    @property
    def outcome(self):
        return self.data["outcome"]

    def write(self):
        write_json(self.path, self.data)

    def add_artifact(self, rel):
        rel = str(rel)
        if rel not in self.data["artifacts"]:
            self.data["artifacts"].append(rel)

    def finalize(self, outcome: str, exit_code: int, **diagnostics):
        self.data["outcome"] = outcome
        self.data["exit_code"] = int(exit_code)
        self.data["diagnostics"].update(diagnostics)
        self.data["artifacts"].sort()
        self.write()
        return self
