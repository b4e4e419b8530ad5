"""CSV/JSON helpers. Every CSV starts with a ``# meta: {json}`` line."""
from __future__ import annotations

import json
import math
import platform
from pathlib import Path

import numpy as np

META_PREFIX = "# meta: "


def versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {"semidet": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, non-finite floats as strings."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def write_csv(path, columns: dict, meta: dict):
    """Write equal-length columns with a metadata header line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns must have equal length")
    lines = [META_PREFIX + json.dumps(_jsonable(meta), sort_keys=True), ",".join(names)]
    for i in range(n):
        lines.append(",".join(repr(float(c[i])) if c.dtype.kind == "f" else str(c[i]) for c in cols))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Return ``(columns, meta)``; columns are float arrays."""
    text = Path(path).read_text().splitlines()
    meta = {}
    if text and text[0].startswith(META_PREFIX):
        meta = json.loads(text[0][len(META_PREFIX):])
        text = text[1:]
    names = text[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:] if line],
                    dtype=float).reshape(-1, len(names))
    return {n: data[:, i].copy() for i, n in enumerate(names)}, meta
