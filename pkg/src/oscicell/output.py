"""Atomic file output: CSV (LF, 17 significant digits), NDJSON and binary PPM."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def fmt17(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def atomic_write(path, data: bytes):
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt17(v) for v in row])
    return buf.getvalue().encode()


def write_csv(path, header, rows):
    atomic_write(path, csv_bytes(header, rows))


def read_csv(path):
    """Return (header, rows) with numeric cells parsed as float."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = []
        for row in r:
            parsed = []
            for cell in row:
                try:
                    parsed.append(float(cell))
                except ValueError:
                    parsed.append(cell)
            rows.append(parsed)
    return header, rows


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def ndjson_bytes(records) -> bytes:
    return "".join(json.dumps(r, default=_jsonable, separators=(",", ":")) + "\n"
                   for r in records).encode()


def write_ndjson(path, records):
    atomic_write(path, ndjson_bytes(records))


def read_ndjson(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(path, obj):
    atomic_write(path, (json.dumps(obj, default=_jsonable, indent=2, sort_keys=True) + "\n").encode())


def write_ppm(path, data: bytes):
    atomic_write(path, data)


def write_outputs(records, fmt, path, header=None):
    """Dispatch on ``fmt`` in {'csv', 'ndjson', 'ppm'}."""
    if fmt == "csv":
        if header is None:
            raise ValueError("CSV output needs a header")
        write_csv(path, header, records)
    elif fmt == "ndjson":
        write_ndjson(path, records)
    elif fmt == "ppm":
        write_ppm(path, records)
    else:
        raise ValueError(f"unknown output format {fmt!r}")
