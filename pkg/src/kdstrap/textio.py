"""Plain-text serialisation: flat key/value files, CSV tables and JSON reports."""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

__all__ = [
    "dump_kv",
    "load_kv",
    "parse_kv",
    "trajectory_csv",
    "read_trajectory_csv",
    "table_csv",
    "to_jsonable",
    "dump_json",
]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def dump_kv(data: dict) -> str:
    """``key = value`` lines; floats keep full precision, sequences are space separated."""
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in data.items())


def _parse_value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    parts = t.split()
    if len(parts) > 1:
        return [_parse_value(p) for p in parts]
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def parse_kv(text: str) -> dict:
    """Inverse of :func:`dump_kv`. Blank lines and ``#`` comments are skipped."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected 'key = value'")
        k, v = line.split("=", 1)
        k = k.strip()
        if not k:
            raise ValueError(f"line {n}: empty key")
        out[k] = _parse_value(v)
    return out


def load_kv(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_kv(fh.read())


def trajectory_csv(traj) -> str:
    """CSV export of a :class:`~kdstrap.flow.Trajectory`.

    Columns are s, four chart coordinates, the covector components, q and K.
    Mode flows carry no time coordinate, so that column is written as zero.
    Events follow as ``#`` comment lines.
    """
    Y = traj.states
    if traj.kind == "wave-rot":
        coords, cov = Y[:, 0:4], Y[:, 4:8]
        names = ["tau", "r", "psi", "theta", "xi_tau", "xi_r", "xi_psi", "xi_theta"]
    else:
        coords = np.column_stack([np.zeros(len(Y)), Y[:, 0:3]])
        cov = Y[:, 3:6]
        names = ["tau", "r", "psi", "theta", "xi_r", "xi_psi", "xi_theta"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s", *names, "q", "K"])
    for i in range(len(Y)):
        row = [traj.s[i], *coords[i], *cov[i], traj.q[i], traj.K[i]]
        w.writerow([repr(float(x)) for x in row])
    buf.write(f"# kind = {traj.kind}\n# termination = {traj.termination}\n")
    for ev in traj.events:
        buf.write(f"# event {ev['event']} at s = {ev['s']!r}\n")
    return buf.getvalue()


def read_trajectory_csv(text: str):
    """(header, data, comment lines) from :func:`trajectory_csv` output."""
    lines = text.splitlines()
    comments = [ln[1:].strip() for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    rows = list(csv.reader(body))
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]]) if len(rows) > 1 else np.zeros((0, len(header)))
    return header, data, comments


def table_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def to_jsonable(obj):
    """Recursively convert numpy scalars and arrays; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dump_json(obj) -> str:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"
