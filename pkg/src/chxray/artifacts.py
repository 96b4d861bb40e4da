"""Atomic CSV/JSON outputs and the run report."""
from __future__ import annotations

import csv
import io
import json
import os
import platform
import tempfile
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy


def atomic_write_text(path, text: str) -> Path:
    """Write via a temporary file in the same directory and rename into place."""
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
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def write_csv(path, header, rows) -> Path:
    """RFC 4180 CSV (CRLF line ends, '.' decimals, full float precision)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    return obj


def versions() -> dict:
    from . import __version__

    return {"chxray": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def report_schema() -> dict:
    return json.loads(resources.files("chxray").joinpath("data/report_schema.json").read_text(encoding="utf-8"))


def thresholds() -> dict:
    return json.loads(resources.files("chxray").joinpath("data/thresholds.json").read_text(encoding="utf-8"))


def dump_json(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_report(path, report: dict) -> Path:
    """Validate against the checked-in schema, then write atomically."""
    data = to_jsonable(report)
    jsonschema.validate(data, report_schema())
    return atomic_write_text(path, dump_json(data))
