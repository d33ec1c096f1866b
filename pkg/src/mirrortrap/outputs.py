"""Deterministic CSV/JSON output files.

Data files are written atomically (temp file in the target directory, then
rename) and contain nothing time- or environment-dependent, so identical
configuration and seed reproduce them byte for byte. Each CSV starts with a
single ``# config: {...}`` comment line embedding the resolved (SI-unit)
configuration, followed by the header row; a JSON sidecar with the same stem
carries the configuration plus scan metadata in structured form.
"""
import json
import math
import os
import tempfile

import numpy as np


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def dump_json(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def atomic_write_text(path, text):
    """Write text via a temp file + rename so readers never see partial files."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format_cell(value):
    if isinstance(value, (np.bool_, bool)):
        return "1" if value else "0"
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    return repr(float(value))


def write_csv(path, columns, resolved_config, meta=None):
    """Write named columns as CSV plus a JSON sidecar.

    ``columns`` is a list of (name, array) pairs; all arrays must share one
    length. Floats are rendered with repr (shortest round-trip form).
    """
    names = [name for name, _ in columns]
    arrays = [np.atleast_1d(np.asarray(values)) for _, values in columns]
    length = arrays[0].shape[0]
    for name, arr in zip(names, arrays):
        if arr.shape[0] != length:
            raise ValueError(f"column {name!r} has length {arr.shape[0]}, expected {length}")
    lines = ["# config: " + json.dumps(_jsonable(resolved_config), sort_keys=True)]
    lines.append(",".join(names))
    for i in range(length):
        lines.append(",".join(_format_cell(arr[i]) for arr in arrays))
    atomic_write_text(path, "\n".join(lines) + "\n")

    sidecar = {
        "columns": names,
        "config": resolved_config,
        "meta": meta if meta is not None else {},
    }
    atomic_write_text(_sidecar_path(path), dump_json(sidecar))


def _sidecar_path(path):
    stem, _ = os.path.splitext(path)
    return stem + ".json"


def write_json(path, obj):
    atomic_write_text(path, dump_json(obj))


def read_csv(path):
    """Read a CSV written by write_csv: (columns dict, config dict, meta dict).

    The sidecar is consulted for metadata when present; the embedded config
    comment line is authoritative for the configuration.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    config = {}
    start = 0
    if lines and lines[0].startswith("# config:"):
        config = json.loads(lines[0][len("# config:"):])
        start = 1
    if len(lines) <= start:
        raise ValueError(f"{path}: no header row")
    names = lines[start].split(",")
    rows = [line.split(",") for line in lines[start + 1:] if line]
    data = {}
    for j, name in enumerate(names):
        data[name] = np.array([float(row[j]) for row in rows])
    meta = {}
    sidecar = _sidecar_path(path)
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh).get("meta", {})
    return data, config, meta
