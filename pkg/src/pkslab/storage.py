"""Trajectory persistence: flat binary snapshots plus a JSON sidecar.

Each snapshot is one record: a ``<iidd`` header (dim, n, L, time) followed
by ``n**dim`` little-endian float64 samples in row-major order.  The
sidecar ``<path>.json`` carries per-snapshot and per-step diagnostics.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .evolution import Trajectory
from .grid import Field, make_grid

HEADER = struct.Struct("<iidd")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(v, np.integer):
        return int(v)
    return v


def _from_json_number(v):
    if isinstance(v, str):
        return float(v)
    return v


def write_trajectory(traj: Trajectory, path) -> Path:
    path = Path(path)
    g = traj.grid
    with open(path, "wb") as fh:
        for t, snap in zip(traj.times, traj.snapshots):
            fh.write(HEADER.pack(g.dim, g.n_per_axis, g.box_length, float(t)))
            fh.write(np.ascontiguousarray(snap.real, dtype="<f8").tobytes(order="C"))
    side = {
        "scheme_tag": traj.scheme_tag,
        "config_hash": traj.config_hash,
        "status": traj.status,
        "abort_reason": traj.abort_reason,
        "warnings": list(traj.warnings),
        "times": traj.times,
        "per_step": traj.per_step,
        "step_log": traj.step_log,
    }
    with open(sidecar_path(path), "w") as fh:
        json.dump(_jsonable(side), fh, indent=1, sort_keys=True)
    return path


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    data = path.read_bytes()
    pos = 0
    grid = None
    times, snaps = [], []
    while pos < len(data):
        dim, n, L, t = HEADER.unpack_from(data, pos)
        pos += HEADER.size
        if grid is None:
            grid = make_grid(dim, n, L)
        elif (dim, n, L) != (grid.dim, grid.n_per_axis, grid.box_length):
            raise ValueError("snapshot headers disagree on the grid")
        count = n**dim
        vals = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape((n,) * dim)
        pos += 8 * count
        times.append(t)
        snaps.append(Field(grid, real=vals))
    if grid is None:
        raise ValueError(f"{path} holds no snapshots")
    side = {}
    sp = sidecar_path(path)
    if sp.exists():
        side = json.loads(sp.read_text())
    per_step = {k: np.array([_from_json_number(x) for x in v], dtype=float) for k, v in side.get("per_step", {}).items()}
    step_log = {k: np.array([_from_json_number(x) for x in v], dtype=float) for k, v in side.get("step_log", {}).items()}
    if per_step and any(len(v) != len(times) for v in per_step.values()):
        per_step = {}
    return Trajectory(
        grid,
        np.array(times),
        snaps,
        per_step,
        side.get("scheme_tag", "unknown"),
        side.get("config_hash", ""),
        step_log,
        side.get("status", "completed"),
        side.get("abort_reason"),
        side.get("warnings", []),
    )
