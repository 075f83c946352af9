"""Field files, diagnostics CSV, and atomic JSON manifests for run artifacts."""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import ValidationError
from .flow import Trajectory

FIELD_MAGIC = "# riesz-flow field v1"


def save_field(path, values: np.ndarray, t: float | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(FIELD_MAGIC + "\n")
        if t is not None:
            fh.write(f"t {t:.17g}\n")
        fh.write(f"N {len(values)}\n")
        for v in values:
            fh.write(format(float(v), ".17g") + "\n")


def load_field(path):
    """Returns (values, t); t is None when the file carries no time stamp."""
    t = None
    values = []
    n = None
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "t":
                t = float(parts[1])
            elif parts[0] == "N":
                n = int(parts[1])
            else:
                values.append(float(parts[0]))
    arr = np.asarray(values, dtype=float)
    if n is not None and len(arr) != n:
        raise ValidationError(f"{path}: expected {n} values, found {len(arr)}")
    if arr.size == 0:
        raise ValidationError(f"{path}: no field values found")
    return arr, t


def write_json_atomic(path, payload: dict) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _q_label(q: float) -> str:
    return f"M_{q:g}"


def diagnostics_csv(traj: Trajectory) -> str:
    """Fixed 17-significant-digit CSV; byte-stable across equal-arithmetic runs."""
    qs = sorted(traj.q_set)
    cols = ["t", "V", "a", "J"] + [_q_label(q) for q in qs] + \
        ["G", "Z", "harnack", "ps_residual", "dt"]
    lines = [",".join(cols)]
    for r in traj.records:
        row = [r.t, r.V, r.a, r.J] + [r.M[float(q)] for q in qs] + \
            [r.G, r.Z, r.harnack, r.ps_residual, r.dt]
        lines.append(",".join(format(v, ".17g") for v in row))
    return "\n".join(lines) + "\n"


def read_diagnostics_csv(path):
    """Returns (column names, dict name -> array)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        body = fh.read().strip()
    if not body:
        raise ValidationError(f"{path}: diagnostics file has no data rows")
    data = np.array([[float(v) for v in line.split(",")]
                     for line in body.splitlines()])
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValidationError(f"{path}: malformed diagnostics file")
    return header, {name: data[:, i] for i, name in enumerate(header)}
