"""Deterministic dataset output, run manifests and resumable progress logs."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _fmt(v):
    """Round-trip text for a cell; floats use 17 significant digits."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return "%.17g" % v
    return str(v)


def _jsonable(v, keep_nan=False):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if math.isnan(v) and not keep_nan else v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, dict):
        return {k: _jsonable(x, keep_nan) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x, keep_nan) for x in v]
    return v


@dataclass
class Dataset:
    """Rows of one experiment with a fixed column order."""

    columns: list
    rows: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def column(self, name) -> np.ndarray:
        return np.array([r.get(name, math.nan) for r in self.rows], dtype=float)

    def dump(self, fh, fmt: str = "csv"):
        """Write the dataset to an open text stream."""
        if fmt == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([_fmt(r.get(c)) for c in self.columns])
        else:
            payload = {"columns": self.columns,
                       "rows": [[_jsonable(r.get(c)) for c in self.columns] for r in self.rows],
                       "summary": _jsonable(self.summary)}
            fh.write(json.dumps(payload, indent=1) + "\n")

    def write(self, path: Path, fmt: str = "csv") -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        target = path.with_suffix("." + fmt)
        with open(target, "w", newline="") as fh:
            self.dump(fh, fmt)
        return target


def code_version() -> str:
    from .. import __version__

    return __version__


def write_manifest(path: Path, spec, dataset: Dataset, started: str, finished: str,
                   resumed_points: int = 0) -> Path:
    """JSON manifest next to the dataset: spec echo, versions, timings, per-point diagnostics."""
    import numpy
    import scipy

    from .._accel import USE_NUMBA

    manifest = {
        "spec": spec.to_dict(),
        "spec_digest": spec.digest(),
        "code_version": code_version(),
        "environment": {"python": platform.python_version(), "numpy": numpy.__version__,
                        "scipy": scipy.__version__, "numba_kernels": USE_NUMBA},
        "started": started,
        "finished": finished,
        "resumed_points": resumed_points,
        "columns": dataset.columns,
        "n_rows": len(dataset.rows),
        "summary": _jsonable(dataset.summary),
        "points": _jsonable(dataset.diagnostics),
    }
    target = Path(path).with_suffix(".manifest.json")
    target.write_text(json.dumps(manifest, indent=1) + "\n")
    return target


def now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class ProgressLog:
    """Append-only JSON-lines log of finished grid points for resuming killed runs.

    The first line records the spec digest; a log written for a different
    spec is discarded instead of being mixed in.
    """

    def __init__(self, path, digest: str):
        self.path = Path(path).with_suffix(".partial.jsonl")
        self.digest = digest
        self.done: dict = {}
        if self.path.exists():
            self._read()
        self._fh = None

    def _read(self):
        lines = self.path.read_text().splitlines()
        if not lines:
            return
        try:
            head = json.loads(lines[0])
        except json.JSONDecodeError:
            return
        if head.get("digest") != self.digest:
            self.path.unlink()
            return
        good = lines[:1]
        for line in lines[1:]:
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                break  # torn final line of a killed run
            self.done[int(rec["index"])] = rec
            good.append(line)
        if len(good) < len(lines):
            self.path.write_text("\n".join(good) + "\n")

    def record(self, index: int, rows, diag):
        if self._fh is None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            fresh = not self.path.exists() or not self.done
            self._fh = open(self.path, "a" if not fresh else "w")
            if fresh:
                self._fh.write(json.dumps({"digest": self.digest}) + "\n")
        # NaN survives the round trip so resumed rows format exactly like fresh ones
        rec = {"index": index, "rows": _jsonable(rows, True), "diag": _jsonable(diag, True)}
        self.done[index] = rec
        self._fh.write(json.dumps(rec) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self, remove: bool = True):
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        if remove and self.path.exists():
            self.path.unlink()
