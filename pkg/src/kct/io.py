"""CSV/JSON writers and the run manifest."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def fmt(x):
    """Round-trip text for a number; ints stay ints."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return "nan"
        return FLOAT_FMT % x
    return str(x)


def write_csv(path, columns, rows):
    """``rows`` is an iterable of sequences aligned with ``columns``."""
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def write_columns(path, data):
    """Write a dict of equal-length arrays as CSV columns, in insertion order."""
    cols = list(data)
    n = len(data[cols[0]])
    return write_csv(path, cols, (tuple(data[c][i] for c in cols) for i in range(n)))


def write_matrix(path, mat):
    with open(path, "w", newline="\n") as fh:
        for row in np.asarray(mat):
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")
    return Path(path)


def read_csv(path):
    """Columns of a numeric CSV as float arrays (non-numeric columns kept as strings)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    out = {}
    for k, name in enumerate(header):
        col = [r[k] for r in rows]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return Path(path)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, config, version, duration, name="manifest.json"):
    """Hash every file in ``out_dir`` (except the manifest) and record the run."""
    out_dir = Path(out_dir)
    files = sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != name)
    manifest = {
        "config": config,
        "code_version": version,
        "wall_clock_seconds": duration,
        "files": [{"path": str(p.relative_to(out_dir)), "sha256": sha256_file(p)} for p in files],
    }
    return write_json(out_dir / name, manifest)
