"""Time evolution: Duhamel/Picard iteration, exponential splitting, derivative ladder.

Both engines work on rfftn half-spectra (see :class:`pkslab.grid.RealSpectralOps`).
The nonlinearity is ``N(rho) = div(rho grad c)`` so that ``rho_t = Lap rho - N``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial

from . import _accel
from .chemo import build_drift_multiplier
from .errors import EngineAbort, ResolutionError
from .grid import Field, SpectralGrid

DEFAULT_Q = (1.0, 4.0 / 3.0, 2.0, 4.0, math.inf)
TAIL_TOL = 1e-10
COLLAPSE_TOL = 1e-2
# Empirical smallness gate on sup t^{1/4}||G(t)*rho0||_{4/3}; see calibrate_theta_gate.
THETA_GATE = 10.0


def norm_key(q: float) -> str:
    if math.isinf(q):
        return "Linf"
    return f"L{q:.6g}"


def _lq(values: np.ndarray, q: float, cell: float) -> float:
    if math.isinf(q):
        return float(np.max(np.abs(values)))
    return (_accel.abs_power_sum(values, q) * cell) ** (1.0 / q)


# ---------------------------------------------------------------------------
# containers


@dataclass
class Trajectory:
    """Snapshots at ``times`` (first entry t = 0) with aligned per-snapshot diagnostics.

    ``step_log`` holds the cheap diagnostics (t, mass, min, max, tail) of every
    internal step of a time-stepping engine.
    """

    grid: SpectralGrid
    times: np.ndarray
    snapshots: list
    per_step: dict
    scheme_tag: str
    config_hash: str = ""
    step_log: dict = field(default_factory=dict)
    status: str = "completed"
    abort_reason: str | None = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or len(self.times) != len(self.snapshots):
            raise ValueError("times and snapshots must align")
        if len(self.times) and self.times[0] != 0.0:
            raise ValueError("first snapshot must be the datum at t = 0")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must increase strictly")
        for k, v in self.per_step.items():
            if len(v) != len(self.times):
                raise ValueError(f"per_step[{k!r}] does not align with times")

    @property
    def final(self) -> Field:
        return self.snapshots[-1]

    def at(self, t: float, rtol: float = 1e-12) -> Field:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > rtol * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return self.snapshots[i]

    @property
    def aborted(self) -> bool:
        return self.status != "completed"


def _snapshot_stats(values: np.ndarray, grid: SpectralGrid, q_list) -> dict:
    cell = grid.cell_volume
    out = {
        "mass": float(values.sum() * cell),
        "min": float(values.min()),
        "max": float(values.max()),
    }
    for q in q_list:
        out[norm_key(q)] = _lq(values, q, cell)
    return out


def _build_per_step(rows: list) -> dict:
    keys = rows[0].keys() if rows else []
    return {k: np.array([r[k] for r in rows]) for k in keys}


@dataclass
class PicardDiagnostics:
    interval: tuple
    iterate_gaps: list
    contraction_ratios: list
    theta_measured: float
    converged: bool
    theta_gate: float = THETA_GATE
    quadrature_error: float = 0.0
    mesh_size: int = 0
    quad_nodes: int = 0

    @property
    def fitted_ratio(self) -> float:
        """exp of the slope of log(gap) against iteration index (positive gaps only)."""
        g = np.array([x for x in self.iterate_gaps if x > 0])
        if g.size < 2:
            return 0.0
        return float(np.exp(np.polyfit(np.arange(g.size), np.log(g), 1)[0]))


# ---------------------------------------------------------------------------
# nonlinearity on half-spectra


class _Nonlinearity:
    """N(a) = div(rho grad c) with dealiased factors, or zero when drift is off."""

    def __init__(self, grid: SpectralGrid, drift: bool = True):
        self.grid = grid
        self.ops = grid.ops
        self.symbols = build_drift_multiplier(grid).half_components if drift else None

    @property
    def active(self) -> bool:
        return self.symbols is not None

    def drift_real(self, ah: np.ndarray) -> list:
        ad = ah * self.ops.dealias
        return [self.ops.inverse(m * ad) for m in self.symbols]

    def speed(self, ah: np.ndarray) -> float:
        if not self.active:
            return 0.0
        comps = self.drift_real(ah)
        return float(np.sqrt(np.max(sum(c * c for c in comps))))

    def __call__(self, ah: np.ndarray, with_speed: bool = False):
        """N(a); with ``with_speed`` also max|grad c| from the same drift evaluation."""
        if not self.active:
            z = np.zeros_like(ah)
            return (z, 0.0) if with_speed else z
        ops = self.ops
        ad = ah * ops.dealias
        rho = ops.inverse(ad)
        out = np.zeros_like(ah)
        speed2 = 0.0
        for m, ik in zip(self.symbols, ops.ikvec):
            c = ops.inverse(m * ad)
            if with_speed:
                speed2 = speed2 + c * c
            out += ik * ops.forward(rho * c)
        out *= ops.dealias
        if with_speed:
            return out, float(np.sqrt(np.max(speed2)))
        return out

    def bilinear(self, rho_a: np.ndarray, drift_b: list) -> np.ndarray:
        """div(rho_a * drift_b) from real-space factors (already dealiased)."""
        ops = self.ops
        out = np.zeros(ops.spec_shape, dtype=complex)
        for ik, c in zip(ops.ikvec, drift_b):
            out += ik * ops.forward(rho_a * c)
        out *= ops.dealias
        return out


# ---------------------------------------------------------------------------
# exponential time differencing


def etd_evolve(
    rho0: Field,
    t_grid: Sequence[float],
    dt_max: float,
    scheme: str = "strang",
    drift: bool = True,
    dt_rel: float = 0.0,
    q_list: Sequence[float] = DEFAULT_Q,
    tail_tol: float = TAIL_TOL,
    collapse_tol: float = COLLAPSE_TOL,
    config_hash: str = "",
) -> Trajectory:
    """Evolve ``rho0`` and record snapshots at ``t_grid``.

    ``scheme="strang"``: half heat step, SSP-RK3 transport step, half heat
    step (second order).  ``scheme="euler"``: exponential Euler
    ``a <- E(dt)(a - dt N(a))`` (first order).  The step is
    ``min(max(dt_max, dt_rel * t), h / (2 max|grad c|))`` and never crosses
    an output time; the drift speed is taken from the first stage of the
    previous step (with a 10% margin) so it costs no extra transforms.

    NaNs, negativity collapse (``min < -collapse_tol * max``) and spectral
    tail energy above ``tail_tol`` stop the run; the returned trajectory
    then has ``status == "aborted"`` and ends with the last state reached.
    """
    if scheme not in ("strang", "euler"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if not dt_max > 0:
        raise ValueError("dt_max must be positive")
    grid = rho0.grid
    ops = grid.ops
    nl = _Nonlinearity(grid, drift)
    targets = [float(t) for t in t_grid if t > 0]
    if any(b <= a for a, b in zip(targets, targets[1:])):
        raise ValueError("t_grid must increase")
    h = grid.spacing
    cell = grid.cell_volume

    ah = ops.forward(rho0.real)
    t = 0.0
    times, snaps, rows = [0.0], [rho0], [_snapshot_stats(rho0.real, grid, q_list)]
    log = {"t": [], "mass": [], "min": [], "max": [], "tail": []}
    reduced = 0
    status, reason = "completed", None
    heat_cache = {}

    def heat(dt):
        key = round(dt, 15)
        if key not in heat_cache:
            if len(heat_cache) > 8:
                heat_cache.clear()
            heat_cache[key] = ops.heat(dt)
        return heat_cache[key]

    def check(a, tt):
        vals = ops.inverse(a)
        mx, mn = float(vals.max()), float(vals.min())
        tail = ops.tail_fraction(a)
        log["t"].append(tt)
        log["mass"].append(float(vals.sum() * cell))
        log["min"].append(mn)
        log["max"].append(mx)
        log["tail"].append(tail)
        if not np.all(np.isfinite(vals)):
            return vals, "nan"
        if mn < -collapse_tol * max(mx, 0.0):
            return vals, "negativity"
        if tail > tail_tol:
            return vals, "spectral_tail"
        return vals, None

    vals, reason = check(ah, t)
    speed = nl.speed(ah)
    for t_target in targets:
        if reason:
            break
        while t < t_target and not reason:
            cap = max(dt_max, dt_rel * t)
            dt = min(cap, t_target - t)
            if speed > 0 and dt * speed > 0.9 * h / 2:
                dt_cfl = 0.9 * h / (2 * speed)
                if dt_cfl < cap:
                    reduced += 1
                dt = min(dt, dt_cfl)
            if scheme == "euler":
                n0, speed = nl(ah, with_speed=True)
                ah = heat(dt) * (ah - dt * n0)
            else:
                half = heat(dt / 2)
                u = half * ah
                if nl.active:
                    n0, speed = nl(u, with_speed=True)
                    u1 = u - dt * n0
                    u2 = 0.75 * u + 0.25 * (u1 - dt * nl(u1))
                    u = u / 3.0 + (2.0 / 3.0) * (u2 - dt * nl(u2))
                ah = half * u
            t = t_target if t_target - (t + dt) < 1e-12 * max(1.0, t_target) else t + dt
            vals, reason = check(ah, t)
        if not reason or t == t_target:
            times.append(t)
            snaps.append(Field(grid, real=vals))
            rows.append(_snapshot_stats(vals, grid, q_list))
    if reason:
        status = "aborted"
        if t > times[-1] and np.all(np.isfinite(vals)):
            times.append(t)
            snaps.append(Field(grid, real=vals))
            rows.append(_snapshot_stats(vals, grid, q_list))
    warn = []
    if reduced:
        warn.append(f"stability: time step reduced below dt_max on {reduced} steps")
        warnings.warn(warn[-1], RuntimeWarning, stacklevel=2)
    tag = f"etd-{scheme}" if drift else f"heat-{scheme}"
    return Trajectory(
        grid,
        np.array(times),
        snaps,
        _build_per_step(rows),
        tag,
        config_hash,
        {k: np.array(v) for k, v in log.items()},
        status,
        reason,
        warn,
    )


def heat_evolve(rho0: Field, t_grid: Sequence[float], q_list: Sequence[float] = DEFAULT_Q, config_hash: str = "") -> Trajectory:
    """Drift-free evolution: the exact heat multiplier applied at each output time."""
    grid = rho0.grid
    ops = grid.ops
    a0 = ops.forward(rho0.real)
    times, snaps, rows = [0.0], [rho0], [_snapshot_stats(rho0.real, grid, q_list)]
    for t in t_grid:
        if t <= 0:
            continue
        vals = ops.inverse(ops.heat(t) * a0)
        times.append(float(t))
        snaps.append(Field(grid, real=vals))
        rows.append(_snapshot_stats(vals, grid, q_list))
    return Trajectory(grid, np.array(times), snaps, _build_per_step(rows), "heat-exact", config_hash)


# ---------------------------------------------------------------------------
# Duhamel operator and Picard iteration


def picard_mesh(T: float, n_nodes: int = 48, first_fraction: float = 1e-3) -> np.ndarray:
    """t = 0 followed by ``n_nodes`` geometric nodes from ``first_fraction*T`` to ``T``."""
    if not T > 0:
        raise ValueError("T must be positive")
    return np.concatenate([[0.0], T * np.geomspace(first_fraction, 1.0, n_nodes)])


def _lagrange_weights(mesh: np.ndarray, s: float, width: int = 4):
    """Indices and weights of local Lagrange interpolation at s."""
    m = len(mesh)
    j = int(np.searchsorted(mesh, s))
    lo = min(max(j - width // 2, 0), max(m - width, 0))
    idx = np.arange(lo, min(lo + width, m))
    nodes = mesh[idx]
    w = np.ones(len(idx))
    for a in range(len(idx)):
        for b in range(len(idx)):
            if a != b:
                w[a] *= (s - nodes[b]) / (nodes[a] - nodes[b])
    return idx, w


class _DuhamelOperator:
    """S(rho)(t) = E(t) a0 - int_0^t E(t-s) N(rho(s)) ds on a fixed mesh.

    Coefficients of N are supported on the dealiased block only, so the
    integral is accumulated there.  The substitution s = t (1 - u^2) with a
    Gauss-Legendre rule in u removes the endpoint singularities that the
    kernel weight (t-s)^{-1/2} would otherwise carry.
    """

    def __init__(self, grid, mesh, quad_nodes, drift):
        self.grid = grid
        self.ops = grid.ops
        self.mesh = np.asarray(mesh, dtype=float)
        self.nl = _Nonlinearity(grid, drift)
        self.block = np.flatnonzero(self.ops.dealias.ravel())
        self.k2b = self.ops.k2.ravel()[self.block]
        self.set_quadrature(quad_nodes)

    def set_quadrature(self, quad_nodes):
        x, w = np.polynomial.legendre.leggauss(int(quad_nodes))
        self.u = 0.5 * (x + 1.0)
        self.wu = 0.5 * w
        self.quad_nodes = int(quad_nodes)

    def linear(self, a0):
        return [self.ops.heat(t) * a0 for t in self.mesh]

    def nonlinear_nodes(self, path):
        return np.stack([self.nl(a).ravel()[self.block] for a in path])

    def integral_at(self, i, Nb):
        t = self.mesh[i]
        acc = np.zeros(self.block.size, dtype=complex)
        if t == 0.0:
            return acc
        for u, w in zip(self.u, self.wu):
            s = t * (1.0 - u * u)
            idx, lw = _lagrange_weights(self.mesh, s)
            Ns = np.tensordot(lw, Nb[idx], axes=1)
            acc += (w * 2.0 * t * u) * np.exp(-self.k2b * (t - s)) * Ns
        return acc

    def apply(self, lin, path):
        if not self.nl.active:
            return [a.copy() for a in lin]
        Nb = self.nonlinear_nodes(path)
        out = []
        for i, a in enumerate(lin):
            b = a.copy()
            flat = b.reshape(-1)
            flat[self.block] -= self.integral_at(i, Nb)
            out.append(b)
        return out


def _xt_norm(grid, diffs_real, mesh) -> float:
    """max(sup ||f||_1, sup t^{1/4} ||f||_{2d/(2d-1)}) over mesh nodes."""
    d = grid.dim
    q = 2.0 * d / (2.0 * d - 1.0)
    cell = grid.cell_volume
    l1 = max(_lq(v, 1.0, cell) for v in diffs_real)
    lq = max(t**0.25 * _lq(v, q, cell) for t, v in zip(mesh, diffs_real))
    return max(l1, lq)


def _trajectory_from_half(grid, mesh, path, tag, q_list=DEFAULT_Q, first=None) -> Trajectory:
    ops = grid.ops
    snaps, rows = [], []
    for i, a in enumerate(path):
        vals = first.real if (i == 0 and first is not None) else ops.inverse(a)
        snaps.append(Field(grid, real=vals))
        rows.append(_snapshot_stats(vals, grid, q_list))
    return Trajectory(grid, np.asarray(mesh), snaps, _build_per_step(rows), tag)


def duhamel_apply(
    rho_path: Trajectory,
    rho0: Field,
    T: float | None = None,
    quad_nodes: int = 32,
    drift: bool = True,
    quad_tol: float = 1e-6,
) -> Trajectory:
    """Apply the Duhamel map to a path given on its own time mesh.

    The mesh of ``rho_path`` (which must start at 0) is reused for the
    output.  The quadrature is repeated with half the nodes at the last
    time; a relative difference above ``quad_tol`` is added to the
    returned trajectory's warnings.
    """
    grid = rho0.grid
    mesh = rho_path.times
    if T is not None and abs(mesh[-1] - T) > 1e-12 * max(1.0, T):
        raise ValueError("path must end at T")
    op = _DuhamelOperator(grid, mesh, quad_nodes, drift)
    ops = grid.ops
    a0 = ops.forward(rho0.real)
    lin = op.linear(a0)
    path = [ops.forward(s.real) for s in rho_path.snapshots]
    out = op.apply(lin, path)
    traj = _trajectory_from_half(grid, mesh, out, "duhamel", first=rho0)
    err = _quadrature_error(op, lin, path, out)
    if err > quad_tol:
        traj.warnings.append(f"quadrature: estimated relative error {err:.2e} exceeds {quad_tol:.1e}")
    return traj


def _quadrature_error(op, lin, path, out) -> float:
    if not op.nl.active:
        return 0.0
    full = op.quad_nodes
    Nb = op.nonlinear_nodes(path)
    i = len(op.mesh) - 1
    op.set_quadrature(max(full // 2, 2))
    try:
        coarse = op.integral_at(i, Nb)
    finally:
        op.set_quadrature(full)
    fine = lin[i].ravel()[op.block] - out[i].ravel()[op.block]
    scale = np.max(np.abs(out[i]))
    return float(np.max(np.abs(fine - coarse)) / scale) if scale > 0 else 0.0


def picard_solve(
    rho0: Field,
    T: float,
    max_iters: int = 30,
    tol: float = 1e-8,
    n_mesh: int = 48,
    quad_nodes: int = 32,
    drift: bool = True,
    theta_gate: float = THETA_GATE,
    quad_tol: float = 1e-6,
) -> tuple:
    """Fixed-point iteration rho^{m+1} = S rho^m from rho^0 = G(t) * rho0.

    Stops once the X_T gap drops below ``tol``.  Three consecutive gap
    ratios >= 1, or a non-finite iterate, raise :class:`EngineAbort`
    carrying the diagnostics gathered so far.
    """
    grid = rho0.grid
    if np.min(rho0.real) < -1e-12 * np.max(np.abs(rho0.real)):
        raise ValueError("rho0 must be nonnegative")
    mesh = picard_mesh(T, n_mesh)
    op = _DuhamelOperator(grid, mesh, quad_nodes, drift)
    ops = grid.ops
    a0 = ops.forward(rho0.real)
    lin = op.linear(a0)
    real_prev = [ops.inverse(a) for a in lin]
    q_gate = 2.0 * grid.dim / (2.0 * grid.dim - 1.0)
    theta = max(t ** (grid.dim / 2 * (1 - 1 / q_gate)) * _lq(v, q_gate, grid.cell_volume) for t, v in zip(mesh, real_prev))
    diag = PicardDiagnostics((0.0, T), [], [], theta, False, theta_gate, mesh_size=len(mesh), quad_nodes=quad_nodes)
    warn = []
    if theta > theta_gate:
        warn.append(f"theta: measured {theta:.3g} exceeds the smallness gate {theta_gate:.3g}")
    path = lin
    streak = 0
    for _ in range(max_iters):
        new = op.apply(lin, path)
        real_new = [ops.inverse(a) for a in new]
        if not all(np.all(np.isfinite(v)) for v in real_new):
            raise EngineAbort("picard iterate is not finite", diagnostics=diag)
        gap = _xt_norm(grid, [a - b for a, b in zip(real_new, real_prev)], mesh)
        diag.iterate_gaps.append(gap)
        if len(diag.iterate_gaps) > 1:
            prev = diag.iterate_gaps[-2]
            ratio = gap / prev if prev > 0 else 0.0
            diag.contraction_ratios.append(ratio)
            streak = streak + 1 if ratio >= 1.0 else 0
            if streak >= 3:
                raise EngineAbort("picard iteration is not contracting", diagnostics=diag)
        path, real_prev = new, real_new
        if gap < tol:
            diag.converged = True
            break
    diag.quadrature_error = _quadrature_error(op, lin, path, path) if diag.converged else 0.0
    if diag.quadrature_error > quad_tol:
        warn.append(f"quadrature: estimated relative error {diag.quadrature_error:.2e} exceeds {quad_tol:.1e}")
    if not diag.converged:
        warn.append(f"picard: gap {diag.iterate_gaps[-1]:.3e} above tol after {max_iters} iterations")
    traj = _trajectory_from_half(grid, mesh, path, "picard" if drift else "picard-heat", first=rho0)
    traj.warnings.extend(warn)
    if not diag.converged:
        traj.status = "aborted"
        traj.abort_reason = "not_converged"
    return traj, diag


def calibrate_theta_gate(
    n: int = 64,
    box_length: float = 16.0,
    sigma: float = 0.5,
    T: float = 0.5,
    lo: float = 0.1,
    hi: float = 10.0,
    steps: int = 8,
    max_iters: int = 40,
) -> dict:
    """Bisect the mass of a centred Gaussian (in units of 8 pi, d = 2) for Picard success.

    Success means convergence to 1e-8 with the default mesh; the returned
    gate is the measured theta at the largest mass that still succeeded.
    """
    from .grid import make_grid

    grid = make_grid(2, n, box_length)

    def attempt(mass_units):
        mass = mass_units * 8 * math.pi
        rho0 = Field.from_function(grid, lambda x, y: mass / (2 * math.pi * sigma**2) * np.exp(-(x**2 + y**2) / (2 * sigma**2)))
        try:
            _, diag = picard_solve(rho0, T, max_iters=max_iters, n_mesh=24, quad_nodes=16, theta_gate=math.inf)
            return diag.converged, diag.theta_measured
        except EngineAbort as exc:
            return False, exc.diagnostics.theta_measured if exc.diagnostics else math.nan

    ok_lo, theta_lo = attempt(lo)
    ok_hi, theta_hi = attempt(hi)
    if not ok_lo:
        raise ResolutionError("Picard fails even at the lowest trial mass")
    if ok_hi:
        return {"mass_units": hi, "theta": float(theta_hi), "bracketed": False}
    for _ in range(steps):
        mid = math.sqrt(lo * hi)
        ok, th = attempt(mid)
        if ok:
            lo, theta_lo = mid, th
        else:
            hi = mid
    return {"mass_units": lo, "theta": float(theta_lo), "bracketed": True, "upper_mass_units": hi}


# ---------------------------------------------------------------------------
# time-derivative ladder


def time_derivative_ladder(
    rho: Field,
    k_max: int = 8,
    drift: bool = True,
    tail_tol: float = 1e-10,
    noise_floor: float = 1e-13,
) -> list:
    """[d_t^j rho for j = 0..k_max] from the equation itself.

    d_t^{j+1} rho = Lap d_t^j rho - div sum_i C(j,i) (d_t^i rho)(grad c[d_t^{j-i} rho]).

    Each level drops coefficients below ``noise_floor`` times its largest
    one before the next is formed; otherwise |xi|^{2j} lifts round-off
    into the result.  Raises :class:`ResolutionError` when the input
    carries more than ``tail_tol`` of its spectral energy in the outer band
    of the lattice, or a level ends up dominated by it.
    """
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    grid = rho.grid
    ops = grid.ops
    nl = _Nonlinearity(grid, drift)
    a = [ops.forward(rho.real)]
    reals, drifts = [], []

    def clean(ah):
        amp = np.abs(ah)
        return np.where(amp >= noise_floor * amp.max(), ah, 0.0)

    def guard(ah, j, tol):
        if ops.tail_fraction(ah) > tol:
            raise ResolutionError(f"time derivative of order {j} is under-resolved")

    guard(a[0], 0, tail_tol)
    a[0] = clean(a[0])
    for j in range(k_max):
        if nl.active:
            ad = a[j] * ops.dealias
            reals.append(ops.inverse(ad))
            drifts.append(nl.drift_real(a[j]))
        nxt = -ops.k2 * a[j]
        if nl.active:
            for i in range(j + 1):
                nxt = nxt - comb(j, i) * nl.bilinear(reals[i], drifts[j - i])
        nxt = clean(nxt)
        guard(nxt, j + 1, 0.5)
        a.append(nxt)
    return [Field(grid, real=ops.inverse(x)) if j else rho for j, x in enumerate(a)]


# ---------------------------------------------------------------------------
# Leibniz-type identity for d_t^k (t^k f g)


def _as_poly(p) -> Polynomial:
    return p if isinstance(p, Polynomial) else Polynomial(np.asarray(p, dtype=float))


def leibniz_identity_check(f, g, k: int) -> float:
    """Relative coefficient residual of

    d^k(t^k f g) = sum_j C(k,j) d^j(t^j f) d^{k-j}(t^{k-j} g)
                   - k sum_j C(k-1,j) d^j(t^j f) d^{k-1-j}(t^{k-1-j} g)

    for polynomial f, g given as coefficient sequences (lowest degree first).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    f, g = _as_poly(f), _as_poly(g)
    tp = Polynomial([0.0, 1.0])

    def term(p, j):
        return (tp**j * p).deriv(j) if j else p

    lhs = (tp**k * f * g).deriv(k)
    rhs = sum((comb(k, j) * term(f, j) * term(g, k - j) for j in range(k + 1)), Polynomial([0.0]))
    rhs = rhs - k * sum((comb(k - 1, j) * term(f, j) * term(g, k - 1 - j) for j in range(k)), Polynomial([0.0]))
    n = max(len(lhs.coef), len(rhs.coef))
    lc = np.pad(lhs.coef, (0, n - len(lhs.coef)))
    rc = np.pad(rhs.coef, (0, n - len(rhs.coef)))
    scale = max(np.max(np.abs(lc)), np.max(np.abs(rc)))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(lc - rc)) / scale)
