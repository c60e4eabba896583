"""Serialisation of profiles and reports, with atomic file writes.

JSON floats are written with Python's shortest round-trip representation,
so every double reads back bit-for-bit.  Non-finite values become null.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from .bvp import SolutionProfile
from .verification import CSV_COLUMNS, VerificationReport, plot_series


def plain(obj):
    """Convert numpy scalars/arrays, dataclasses and tuples into JSON-ready data."""
    if is_dataclass(obj) and not isinstance(obj, type):
        obj = obj.to_dict() if hasattr(obj, "to_dict") else asdict(obj)
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def to_json(obj) -> str:
    return json.dumps(plain(obj), indent=2, allow_nan=False) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_csv_cell(x) for x in row])
    return buf.getvalue()


def _csv_cell(x):
    x = plain(x)
    if x is None:
        return "nan"
    return repr(x) if isinstance(x, float) else x


def atomic_write(path, text: str) -> None:
    """Write text to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# profiles


def profile_csv(profile: SolutionProfile) -> str:
    R = profile.radius
    rows = zip(profile.s, profile.s * R, profile.u, profile.du)
    return _csv_text(("s", "r", "u", "du"), rows)


def profile_json(profile: SolutionProfile) -> str:
    meta = profile.metadata()
    meta["u_1"] = float(profile.u[-1])
    meta["du_1"] = float(profile.du[-1])
    return to_json({"metadata": meta})


# --------------------------------------------------------------------------
# verification reports


def report_csv(report: VerificationReport) -> str:
    return _csv_text(CSV_COLUMNS, report.csv_rows())


def report_json(report: VerificationReport) -> str:
    return to_json(report.to_dict())


def write_plot_data(report: VerificationReport, directory) -> list:
    """One two-column (x, y) CSV per series; returns the written paths."""
    written = []
    for name, pairs in plot_series(report).items():
        path = Path(directory) / f"{name}.csv"
        atomic_write(path, _csv_text(("x", "y"), pairs))
        written.append(path)
    return written


def records_csv(records: dict) -> str:
    """Flat key,value CSV for small result objects."""
    flat = {}

    def walk(prefix, v):
        if isinstance(v, dict):
            for k, x in v.items():
                walk(f"{prefix}.{k}" if prefix else str(k), x)
        elif isinstance(v, list):
            for i, x in enumerate(v):
                walk(f"{prefix}[{i}]", x)
        else:
            flat[prefix] = v

    walk("", plain(records))
    return _csv_text(("key", "value"), flat.items())
