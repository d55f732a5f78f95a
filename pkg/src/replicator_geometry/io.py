"""Trajectory serialization (CSV and JSON)."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .flow_engine import Trajectory
from .gaussian_manifold import GaussianParams
from .oracle import GridDensity
from .simplex_games import SimplexPoint


def fmt(x: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return format(float(x), ".17g")


def state_columns(state) -> Tuple[List[str], np.ndarray]:
    """Column names and flattened values of one state."""
    if isinstance(state, GaussianParams):
        n = state.n
        names = [f"a_{i + 1}" for i in range(n)]
        names += [f"C_{i + 1}{j + 1}" if n < 10 else f"C_{i + 1}_{j + 1}" for i in range(n) for j in range(n)]
        return names, np.concatenate([state.a, state.C.ravel()])
    if isinstance(state, GridDensity):
        return [f"w_{k + 1}" for k in range(state.weights.size)], state.weights
    p = np.asarray(state.p if isinstance(state, SimplexPoint) else state, dtype=float)
    return [f"p_{i + 1}" for i in range(p.size)], p


def state_to_json(state):
    if isinstance(state, GaussianParams):
        return {"a": state.a.tolist(), "C": state.C.tolist()}
    if isinstance(state, GridDensity):
        return {"nodes": state.nodes.tolist(), "weights": state.weights.tolist()}
    if isinstance(state, SimplexPoint):
        return state.p.tolist()
    return np.asarray(state, dtype=float).tolist()


def emit_trajectory(traj: Trajectory, fmt_: str, path) -> Path:
    """Write ``traj`` as CSV (``t,<state>,<diagnostics>``) or JSON."""
    if len(traj) == 0:
        raise ValueError("cannot emit an empty trajectory")
    path = Path(path)
    diag_names = list(traj.diagnostics)
    if fmt_ == "csv":
        names, _ = state_columns(traj.states[0])
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *names, *diag_names])
            for k, (t, s) in enumerate(zip(traj.times, traj.states)):
                _, vals = state_columns(s)
                row = [fmt(t), *map(fmt, vals), *(fmt(traj.diagnostics[d][k]) for d in diag_names)]
                w.writerow(row)
    elif fmt_ == "json":
        doc = {
            "times": traj.times.tolist(),
            "states": [state_to_json(s) for s in traj.states],
            "diagnostics": {d: traj.diagnostics[d].tolist() for d in diag_names},
        }
        with path.open("w") as fh:
            json.dump(doc, fh, allow_nan=False)
            fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt_!r}")
    return path


def _state_from_json(obj):
    if isinstance(obj, dict) and "C" in obj:
        return GaussianParams(obj["a"], obj["C"])
    if isinstance(obj, dict) and "weights" in obj:
        return GridDensity(obj["nodes"], obj["weights"])
    return np.asarray(obj, dtype=float)


def load_trajectory_json(path) -> Trajectory:
    with Path(path).open() as fh:
        doc = json.load(fh)
    return Trajectory(
        np.asarray(doc["times"], dtype=float),
        [_state_from_json(s) for s in doc["states"]],
        {k: np.asarray(v, dtype=float) for k, v in doc["diagnostics"].items()},
    )


def load_trajectory_csv(path):
    """Return ``(header, data)`` with ``data`` a float array, one row per sample."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)
