"""Scenario execution, report assembly and parameter sweeps."""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .chemo import hls_check
from .config import RunConfig, as_q, validate
from .errors import ConfigError, EngineAbort
from .evolution import etd_evolve, heat_evolve, picard_solve
from .grid import Field, make_grid
from .storage import _jsonable, write_trajectory

SWEEP_CAP = 64


def build_initial(cfg: RunConfig) -> Field:
    """Sample the configured initial datum, normalized to the requested mass on the grid."""
    grid = make_grid(cfg.dim, cfg.n_per_axis, cfg.box_length)
    ini = cfg.initial
    sigma = float(ini["sigma"])
    center = np.asarray(ini.get("center", [0.0] * cfg.dim), dtype=float)
    xs = [np.broadcast_to(x, grid.shape) for x in grid.coordinates()]

    def bump(c):
        r2 = sum((x - ci) ** 2 for x, ci in zip(xs, c))
        return np.exp(-r2 / (2 * sigma**2))

    kind = ini["kind"]
    if kind == "gaussian":
        vals = bump(center)
    elif kind == "two_bump":
        off = np.zeros(cfg.dim)
        off[0] = 0.5 * float(ini["separation"])
        vals = bump(center - off) + bump(center + off)
    elif kind == "annulus":
        r = np.sqrt(sum((x - ci) ** 2 for x, ci in zip(xs, center)))
        vals = np.exp(-((r - float(ini["radius"])) ** 2) / (2 * sigma**2))
    else:  # validated earlier
        raise ConfigError(f"unknown datum {kind!r}")
    vals = vals * (float(ini["mass"]) / (vals.sum() * grid.cell_volume))
    return Field(grid, real=vals)


def output_times(cfg: RunConfig) -> list:
    tm = cfg.time_mesh
    kind = tm.get("kind", "linear")
    if kind == "list":
        ts = list(map(float, tm["times"]))
    elif kind == "geometric":
        ts = list(np.geomspace(float(tm["t_min"]), cfg.T, int(tm.get("count", 10))))
    else:
        n = int(tm.get("count", 10))
        ts = list(np.linspace(cfg.T / n, cfg.T, n))
    ts = sorted(set(float(t) for t in ts + [float(t) for t in tm.get("extra", [])] + [float(cfg.T)]))
    return [t for t in ts if 0 < t <= cfg.T]


@dataclass
class RunReport:
    config_hash: str
    config: dict
    status: str
    abort_reason: str | None
    summary: dict
    decay_fits: list = field(default_factory=list)
    analyticity: list = field(default_factory=list)
    growth: dict | None = None
    classification: dict | None = None
    picard: dict | None = None
    hls: list = field(default_factory=list)
    theta: dict | None = None
    warnings: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    step_count: int = 0
    output_path: str | None = None
    trajectory: object = field(default=None, repr=False, compare=False)

    @property
    def exit_code(self) -> int:
        if self.status != "completed":
            return 3
        if self.failures:
            return 4
        return 0

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "trajectory"}
        d["decay_fits"] = [dict(f.__dict__, slope_error=f.slope_error) for f in self.decay_fits]
        d["analyticity"] = [e.__dict__ for e in self.analyticity]
        return _jsonable(d)


def run_engine(cfg: RunConfig, rho0: Field | None = None):
    """Run the configured engine; returns (trajectory, picard diagnostics or None)."""
    rho0 = rho0 if rho0 is not None else build_initial(cfg)
    ts = output_times(cfg)
    h = cfg.config_hash()
    if cfg.engine == "heat_only":
        return heat_evolve(rho0, ts, config_hash=h), None
    if cfg.engine == "picard":
        pc = cfg.picard
        traj, diag = picard_solve(rho0, cfg.T, max_iters=pc["max_iters"], tol=pc["tol"], n_mesh=pc["n_mesh"], quad_nodes=pc["quad_nodes"])
        traj.config_hash = h
        return traj, diag
    sv = cfg.solver
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traj = etd_evolve(
            rho0,
            ts,
            dt_max=sv["dt_max"],
            scheme=sv.get("scheme", "strang"),
            dt_rel=sv.get("dt_rel", 0.0),
            tail_tol=sv.get("tail_tol", 1e-10),
            collapse_tol=sv.get("collapse_tol", 1e-2),
            config_hash=h,
        )
    return traj, None


def _try(failures, name, fn):
    try:
        return fn()
    except Exception as exc:  # every requested diagnostic must leave a record
        failures[name] = f"{type(exc).__name__}: {exc}"
        return None


def evaluate(cfg: RunConfig, traj, picard_diag=None) -> dict:
    """Requested diagnostics for a finished trajectory, with failure records."""
    want = cfg.diagnostics
    failures = {}
    out = {"decay_fits": [], "analyticity": [], "growth": None, "classification": None, "hls": [], "theta": None, "warnings": []}
    grid = traj.grid
    horizon = grid.validity_horizon
    window = tuple(want.get("decay_window", [1.0, min(horizon, cfg.T)]))
    if window[1] > horizon * (1 + 1e-12):
        out["warnings"].append(f"horizon: decay window end {window[1]} exceeds validity horizon {horizon:.4g}")
    for beta, k, q in want.get("decay_fits", []):
        name = f"decay_fit{tuple(beta)},{k},{q}"
        fit = _try(failures, name, lambda: dg.decay_fit(traj, beta, k, as_q(q), window))
        if fit is not None:
            out["decay_fits"].append(fit)
    k_max = int(want.get("k_max", 8))
    drift = cfg.engine != "heat_only"
    if want.get("analyticity"):
        for t, snap in zip(traj.times, traj.snapshots):
            if window[0] - 1e-12 <= t <= window[1] + 1e-12:
                est = _try(failures, f"analyticity@{t:.6g}", lambda: dg.analyticity_estimate(snap, t, k_max, drift))
                if est is not None:
                    out["analyticity"].append(est)
    if "growth_t" in want:
        t = float(want["growth_t"])

        def growth():
            norms = dg.ladder_linf_norms(traj.at(t), int(want.get("growth_jmax", 6)), drift)
            gf = dg.growth_rate_fit(norms, t, grid.dim)
            return {"t": t, "M": gf.M, "max": gf.max, "median": gf.median, "trend": gf.trend, "bounded": gf.bounded}

        out["growth"] = _try(failures, "growth", growth)
    if want.get("blow_up"):
        def classify():
            v = dg.blow_up_monitor(traj)
            return {
                "classification": v.classification,
                "linf_slope": v.linf_slope,
                "tail_slope": v.tail_slope,
                "second_moment_slope": v.second_moment_slope,
                "linf_growth": v.linf_growth,
            }

        out["classification"] = _try(failures, "blow_up", classify)
    if want.get("hls"):
        for t, snap in ((traj.times[0], traj.snapshots[0]), (traj.times[-1], traj.snapshots[-1])):
            r = _try(failures, f"hls@{t:.6g}", lambda: hls_check(snap))
            if r is not None:
                out["hls"].append({"t": float(t), "lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio})
    if "theta_q" in want:
        def theta():
            rep = dg.theta_functional(traj.snapshots[0], cfg.T, [as_q(q) for q in want["theta_q"]])
            return {"T": rep.T, "suprema": {str(q): v for q, v in rep.suprema.items()}, "young_bound": {str(q): v for q, v in rep.young_bound.items()}}

        out["theta"] = _try(failures, "theta", theta)
    out["failures"] = failures
    return out


def run_scenario(cfg: RunConfig, write: bool = True, keep_trajectory: bool = False) -> RunReport:
    """Validate, run, measure and (optionally) persist one experiment.

    Artifacts go to ``<output_dir>/<config hash>/``: config.ini,
    trajectory.bin (+ .json sidecar), decay.csv, analyticity.csv, hls.csv
    and report.json.  Engine aborts are recorded in the report, not raised.
    """
    validate(cfg)
    h = cfg.config_hash()
    start = time.perf_counter()
    picard = None
    try:
        traj, picard_diag = run_engine(cfg)
    except EngineAbort as exc:
        elapsed = time.perf_counter() - start
        pdiag = exc.diagnostics.__dict__ if exc.diagnostics is not None else None
        rep = RunReport(h, cfg.as_dict(), "aborted", str(exc), {}, picard=pdiag, wall_clock=elapsed)
        if write:
            rep.output_path = str(_write_report_only(cfg, rep))
        return rep
    if picard_diag is not None:
        picard = dict(picard_diag.__dict__, fitted_ratio=picard_diag.fitted_ratio)
    results = evaluate(cfg, traj, picard_diag)
    elapsed = time.perf_counter() - start
    mass = traj.per_step.get("mass", np.array([math.nan]))
    summary = {
        "scheme": traj.scheme_tag,
        "snapshots": len(traj.times),
        "t_final": float(traj.times[-1]),
        "mass_initial": float(mass[0]),
        "mass_final": float(mass[-1]),
        "mass_drift": float(np.max(np.abs(mass / mass[0] - 1))) if mass[0] else 0.0,
        "min_over_max": float(np.min(traj.per_step["min"] / traj.per_step["max"])) if "min" in traj.per_step else math.nan,
        "linf_final": float(traj.per_step["Linf"][-1]) if "Linf" in traj.per_step else math.nan,
    }
    steps = len(traj.step_log.get("t", [])) or len(traj.times)
    rep = RunReport(
        h,
        cfg.as_dict(),
        traj.status,
        traj.abort_reason,
        summary,
        results["decay_fits"],
        results["analyticity"],
        results["growth"],
        results["classification"],
        picard,
        results["hls"],
        results["theta"],
        list(traj.warnings) + results["warnings"],
        results["failures"],
        elapsed,
        steps,
    )
    if write:
        rep.output_path = str(_write_run(cfg, traj, rep))
    if keep_trajectory:
        rep.trajectory = traj
    return rep


def _run_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.output_dir) / cfg.config_hash()
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_report_only(cfg, rep) -> Path:
    d = _run_dir(cfg)
    cfg.save(d / "config.ini")
    (d / "report.json").write_text(json.dumps(rep.to_json(), indent=1, sort_keys=True))
    return d


def _write_run(cfg, traj, rep) -> Path:
    d = _run_dir(cfg)
    cfg.save(d / "config.ini")
    write_trajectory(traj, d / "trajectory.bin")
    dg.write_decay_csv(rep.decay_fits, d / "decay.csv")
    dg.write_analyticity_csv(rep.analyticity, d / "analyticity.csv")
    with open(d / "hls.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "lhs", "rhs", "ratio"])
        for r in rep.hls:
            w.writerow([f"{r['t']:.17e}", f"{r['lhs']:.17e}", f"{r['rhs']:.17e}", f"{r['ratio']:.17e}"])
    (d / "report.json").write_text(json.dumps(rep.to_json(), indent=1, sort_keys=True))
    return d


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    reports: list
    rows: list
    summary_path: str | None = None


SUMMARY_HEADER = ["point", "key", "config_hash", "status", "abort_reason", "classification", "linf_growth", "mass_drift", "fits"]


def _sweep_worker(cfg: RunConfig, write: bool):
    try:
        return run_scenario(cfg, write=write)
    except Exception as exc:  # recorded, the sweep carries on
        return RunReport(cfg.config_hash(), cfg.as_dict(), "failed", f"{type(exc).__name__}: {exc}", {})


def sweep(base: RunConfig, axes: dict, cap: int = SWEEP_CAP, workers: int | None = None, write: bool = True, executor: str = "process") -> SweepResult:
    """Run the Cartesian product of ``axes`` (dotted key -> values) over ``base``.

    Points run concurrently; a failing point is recorded and the rest
    continue.  The summary CSV lands in ``<output_dir>/sweep-<base hash>/summary.csv``.
    """
    validate(base)
    keys = list(axes)
    grid = list(itertools.product(*[axes[k] for k in keys])) if keys else [()]
    if len(grid) > cap:
        raise ConfigError(f"sweep has {len(grid)} points, above the cap {cap}")
    configs = [base.with_overrides(dict(zip(keys, vals))) for vals in grid]
    for c in configs:
        validate(c)
    workers = workers or min(len(configs), os.cpu_count() or 1)
    if workers <= 1 or len(configs) == 1:
        reports = [_sweep_worker(c, write) for c in configs]
    else:
        pool = ProcessPoolExecutor if executor == "process" else ThreadPoolExecutor
        with pool(max_workers=workers) as ex:
            reports = list(ex.map(_sweep_worker, configs, [write] * len(configs)))
    rows = []
    for i, (vals, rep) in enumerate(zip(grid, reports)):
        cls = rep.classification or {}
        fits = ";".join(f"{tuple(f.beta)}|{f.k}|{f.q:g}:{f.slope:.17e}" for f in rep.decay_fits)
        rows.append(
            [
                i,
                ";".join(f"{k}={v}" for k, v in zip(keys, vals)),
                rep.config_hash,
                rep.status,
                rep.abort_reason or "",
                cls.get("classification", ""),
                f"{cls['linf_growth']:.17e}" if "linf_growth" in cls else "",
                f"{rep.summary['mass_drift']:.17e}" if "mass_drift" in rep.summary else "",
                fits,
            ]
        )
    path = None
    if write:
        d = Path(base.output_dir) / f"sweep-{base.config_hash()}"
        d.mkdir(parents=True, exist_ok=True)
        path = d / "summary.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_HEADER)
            w.writerows(rows)
        path = str(path)
    return SweepResult(reports, rows, path)
