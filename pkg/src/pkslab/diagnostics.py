"""Norms, decay fits, analyticity-radius estimators, blow-up monitor, combinatorial checks."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _accel
from .grid import Field, spectral_derivative
from .heat import apply_semigroup, gaussian_lq_norm

# ---------------------------------------------------------------------------
# norms


def lq_norm(f: Field, q: float) -> float:
    """(h^d sum |f|^q)^(1/q); q = inf is the grid maximum of |f|."""
    q = float(q)
    if not q >= 1.0:
        raise ValueError(f"q must lie in [1, inf], got {q}")
    vals = f.real
    if math.isinf(q):
        return float(np.max(np.abs(vals)))
    return (_accel.abs_power_sum(vals, q) * f.grid.cell_volume) ** (1.0 / q)


def _weight_exponent(dim: int, q: float) -> float:
    return dim / 2.0 * (1.0 - (0.0 if math.isinf(q) else 1.0 / q))


@dataclass
class ThetaReport:
    T: float
    suprema: dict
    argmax: dict
    young_bound: dict

    def __getitem__(self, q):
        return self.suprema[q]


def theta_functional(rho0: Field, T: float, q_list: Sequence[float], t_samples: Sequence[float] | int = 24) -> ThetaReport:
    """sup over samples t in (0, T] of t^{(d/2)(1-1/q)} ||G(t) * rho0||_q, per q.

    ``t_samples`` may be a count (geometric from T*1e-3 to T, floored at the
    resolution limit 4 h^2) or explicit times.  Each entry is reported next
    to the Young bound ||G(1)||_q ||rho0||_1.
    """
    grid = rho0.grid
    if isinstance(t_samples, int):
        lo = max(T * 1e-3, 4 * grid.spacing**2)
        ts = np.geomspace(min(lo, T), T, t_samples)
    else:
        ts = np.asarray(t_samples, dtype=float)
    if np.any(ts <= 0) or np.any(ts > T * (1 + 1e-12)):
        raise ValueError("t_samples must lie in (0, T]")
    mass_abs = lq_norm(rho0, 1.0)
    sup, arg, young = {}, {}, {}
    evolved = [apply_semigroup(rho0, t) for t in ts]
    for q in q_list:
        vals = [t ** _weight_exponent(grid.dim, q) * lq_norm(e, q) for t, e in zip(ts, evolved)]
        i = int(np.argmax(vals))
        sup[q], arg[q] = float(vals[i]), float(ts[i])
        young[q] = gaussian_lq_norm(grid.dim, 1.0, q) * mass_abs
    return ThetaReport(T, sup, arg, young)


# ---------------------------------------------------------------------------
# decay fits


def predicted_slope(dim: int, beta: Sequence[int], k: int, q: float) -> float:
    return -sum(beta) / 2.0 - k - _weight_exponent(dim, q)


@dataclass
class DecayFit:
    dim: int
    beta: tuple
    k: int
    q: float
    window: tuple
    slope: float
    intercept: float
    r_squared: float
    predicted_slope: float
    n_samples: int = 0

    @property
    def slope_error(self) -> float:
        return self.slope - self.predicted_slope

    def row(self) -> list:
        return [
            self.dim,
            "(" + ",".join(str(b) for b in self.beta) + ")",
            self.k,
            "inf" if math.isinf(self.q) else f"{self.q:.17e}",
            f"{self.window[0]:.17e}",
            f"{self.window[1]:.17e}",
            f"{self.slope:.17e}",
            f"{self.predicted_slope:.17e}",
            f"{self.slope_error:.17e}",
            f"{self.r_squared:.17e}",
        ]


DECAY_FIT_HEADER = ["d", "beta", "k", "q", "t_lo", "t_hi", "slope", "predicted", "error", "r2"]


def write_decay_csv(fits: Sequence[DecayFit], path_or_file) -> None:
    _write_rows(path_or_file, DECAY_FIT_HEADER, [f.row() for f in fits])


def _write_rows(path_or_file, header, rows):
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    finally:
        if own:
            fh.close()


def loglog_fit(ts: Sequence[float], values: Sequence[float]) -> tuple:
    """(slope, intercept, r^2) of log(values) against log(ts)."""
    lt = np.log(np.asarray(ts, dtype=float))
    lv = np.log(np.asarray(values, dtype=float))
    if lt.size < 2 or np.ptp(lt) == 0:
        raise ValueError("degenerate fit: no spread in log t")
    slope, intercept = np.polyfit(lt, lv, 1)
    resid = lv - (slope * lt + intercept)
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), min(max(r2, 0.0), 1.0)


def measured_norm(rho: Field, beta: Sequence[int], k: int, q: float, drift: bool = True) -> float:
    """||D^beta d_t^k rho||_q with the time derivative taken from the equation."""
    from .evolution import time_derivative_ladder

    f = time_derivative_ladder(rho, k, drift=drift)[k] if k else rho
    return lq_norm(spectral_derivative(f, beta), q)


def decay_fit(traj, beta: Sequence[int], k: int, q: float, window: tuple | None = None, min_samples: int = 8) -> DecayFit:
    """Least-squares slope of log ||D^beta d_t^k rho(t)||_q against log t.

    ``window`` defaults to [1, validity horizon]; it must lie inside the
    horizon and contain at least ``min_samples`` snapshots.
    """
    grid = traj.grid
    beta = tuple(int(b) for b in beta)
    if len(beta) != grid.dim:
        raise ValueError("multi-index does not match the grid dimension")
    horizon = grid.validity_horizon
    lo, hi = window if window is not None else (1.0, horizon)
    if not 0 < lo < hi:
        raise ValueError(f"bad window {(lo, hi)}")
    if hi > horizon * (1 + 1e-12):
        raise ValueError(f"window end {hi} beyond the validity horizon {horizon}")
    drift = not traj.scheme_tag.startswith(("heat", "picard-heat"))
    sel = [(t, s) for t, s in zip(traj.times, traj.snapshots) if lo - 1e-12 <= t <= hi + 1e-12]
    if len(sel) < min_samples:
        raise ValueError(f"only {len(sel)} snapshots in window; need {min_samples}")
    ts = [t for t, _ in sel]
    vals = [measured_norm(s, beta, k, q, drift) for _, s in sel]
    slope, intercept, r2 = loglog_fit(ts, vals)
    return DecayFit(grid.dim, beta, k, float(q), (float(lo), float(hi)), slope, intercept, r2, predicted_slope(grid.dim, beta, k, q), len(sel))


# ---------------------------------------------------------------------------
# analyticity radii


@dataclass
class AnalyticityEstimate:
    t: float
    r_space: float
    r_time: float
    fit_quality: dict = field(default_factory=dict)
    flags: tuple = ()

    def row(self) -> list:
        return [f"{self.t:.17e}", f"{self.r_space:.17e}", f"{self.r_time:.17e}", "|".join(self.flags)]


ANALYTICITY_HEADER = ["t", "r_space", "r_time", "flags"]


def write_analyticity_csv(estimates: Sequence[AnalyticityEstimate], path_or_file) -> None:
    _write_rows(path_or_file, ANALYTICITY_HEADER, [e.row() for e in estimates])


@dataclass
class SpaceRadiusFit:
    r_space: float
    band: tuple
    residual: float
    n_shells: int
    flags: tuple


def shell_spectrum(f: Field) -> tuple:
    """(|xi| shell centres, max |fhat| per shell) up to the 2/3 cutoff."""
    g = f.grid
    dk = 2 * np.pi / g.box_length
    amp = np.abs(f.spectral)
    kmag = np.sqrt(g.wavenumber_squared)
    nshell = g.n_per_axis // 3 + 1
    best, _ = _accel.shell_max(np.ascontiguousarray(kmag).ravel(), np.ascontiguousarray(amp).ravel(), dk, nshell)
    return dk * np.arange(nshell), best


def analyticity_radius_space(f: Field, upper: float = 1e-3, lower: float = 1e-12, min_shells: int = 4) -> SpaceRadiusFit:
    """Exponential decay rate of the shell-maximum spectrum.

    Fits log max|fhat| against |xi| over the shells whose amplitude lies
    between ``lower`` and ``upper`` times the peak (below the 2/3 cutoff);
    minus the slope is ``r_space``.  A fit whose upper-half rate exceeds
    1.2x the lower-half rate is flagged ``gaussian_decay``.  No usable band
    gives ``r_space = 0`` with the ``no_decay_band`` flag; a spectrum that
    underflows (< 1e-300) before the band ends is flagged ``underflow`` and
    its rate is a lower bound.
    """
    k, amp = shell_spectrum(f)
    peak = float(amp.max())
    flags = []
    if peak == 0:
        return SpaceRadiusFit(0.0, (0.0, 0.0), 0.0, 0, ("no_decay_band",))
    level = amp / peak
    # first shell where the envelope drops below `upper`
    start = np.flatnonzero(level <= upper)
    if start.size == 0:
        return SpaceRadiusFit(0.0, (0.0, 0.0), 0.0, 0, ("no_decay_band",))
    i0 = int(start[0])
    stop = np.flatnonzero((level < lower) & (np.arange(level.size) > i0))
    i1 = int(stop[0]) if stop.size else level.size
    idx = np.arange(i0, i1)
    idx = idx[amp[idx] > 1e-300]
    if np.any(amp[i0:i1] <= 1e-300):
        flags.append("underflow")
    if idx.size < min_shells:
        return SpaceRadiusFit(0.0, (0.0, 0.0), 0.0, int(idx.size), tuple(flags + ["no_decay_band"]))
    kk, la = k[idx], np.log(amp[idx])
    slope, icpt = np.polyfit(kk, la, 1)
    resid = float(np.sqrt(np.mean((la - (slope * kk + icpt)) ** 2)))
    half = idx.size // 2
    if half >= 2:
        s_lo = np.polyfit(kk[: half + 1], la[: half + 1], 1)[0]
        s_hi = np.polyfit(kk[half:], la[half:], 1)[0]
        if s_lo < 0 and s_hi < 1.2 * s_lo:
            flags.append("gaussian_decay")
    r = max(-float(slope), 0.0)
    return SpaceRadiusFit(r, (float(kk[0]), float(kk[-1])), resid, int(idx.size), tuple(flags))


def analyticity_radius_time(ladder_norms: Sequence[float], t: float) -> float:
    """min over j >= 2 of (||d_t^j rho||_inf / j!)^(-1/j); inf when every term is zero."""
    norms = list(ladder_norms)
    if len(norms) - 1 < 4:
        raise ValueError("need ladder norms up to at least j = 4")
    best = math.inf
    for j in range(2, len(norms)):
        v = float(norms[j])
        if v == 0.0:
            continue
        best = min(best, (v / math.factorial(j)) ** (-1.0 / j))
    return best


def ladder_linf_norms(rho: Field, k_max: int = 8, drift: bool = True) -> list:
    from .evolution import time_derivative_ladder

    return [lq_norm(f, math.inf) for f in time_derivative_ladder(rho, k_max, drift=drift)]


def analyticity_estimate(rho: Field, t: float, k_max: int = 8, drift: bool = True) -> AnalyticityEstimate:
    sp = analyticity_radius_space(rho)
    norms = ladder_linf_norms(rho, k_max, drift)
    rt = analyticity_radius_time(norms, t)
    return AnalyticityEstimate(
        t,
        sp.r_space,
        rt,
        {"band": sp.band, "residual": sp.residual, "n_shells": sp.n_shells, "ladder_norms": norms},
        sp.flags,
    )


@dataclass
class GrowthFit:
    t: float
    M: list
    max: float
    median: float
    trend: float

    @property
    def bounded(self) -> bool:
        return self.max <= 2.0 * self.median


def growth_rate_fit(ladder_norms: Sequence[float], t: float, dim: int) -> GrowthFit:
    """M_j = (||d_t^j rho||_inf t^{j+d/2} / j^j)^(1/j) for j >= 1, with max, median, trend."""
    norms = list(ladder_norms)
    M = []
    for j in range(1, len(norms)):
        v = float(norms[j])
        M.append((v * t ** (j + dim / 2.0) / j**j) ** (1.0 / j))
    arr = np.array(M)
    trend = float(np.polyfit(np.arange(1, arr.size + 1), arr, 1)[0]) if arr.size > 1 else 0.0
    return GrowthFit(t, M, float(arr.max()), float(np.median(arr)), trend)


# ---------------------------------------------------------------------------
# blow-up monitor


@dataclass
class BlowUpVerdict:
    classification: str
    linf_slope: float
    tail_slope: float
    second_moment_slope: float
    linf_growth: float
    evidence: dict = field(default_factory=dict)


DECAYING = "decaying"
GROWING = "growing"
BLOW_UP = "aborted-blow-up-candidate"


def _second_moment(f: Field) -> float:
    r2 = np.broadcast_to(sum(c**2 for c in f.grid.coordinates()), f.grid.shape)
    return float(np.sum(r2 * f.real) * f.grid.cell_volume)


def blow_up_monitor(traj) -> BlowUpVerdict:
    """Classify a run from its trends over the final third.

    Aborted runs (NaN, negativity collapse, spectral-tail crossing) are
    blow-up candidates.  Otherwise the sign of the log L-infinity slope
    against time over the last third of the recorded steps decides.
    """
    log = traj.step_log if traj.step_log and len(traj.step_log.get("t", ())) >= 10 else None
    if log is not None:
        t = np.asarray(log["t"])
        linf = np.maximum(np.abs(log["max"]), np.abs(log["min"]))
        tail = np.asarray(log["tail"])
    else:
        if len(traj.times) < 10:
            raise ValueError("trajectory too short to classify (< 10 steps)")
        t = traj.times
        linf = traj.per_step["Linf"] if "Linf" in traj.per_step else np.array([lq_norm(s, math.inf) for s in traj.snapshots])
        tail = np.array([traj.grid.ops.tail_fraction(traj.grid.ops.forward(s.real)) for s in traj.snapshots])
    n = t.size
    last = slice(n - max(n // 3, 3), n)

    def slope(y):
        y = np.asarray(y, dtype=float)[last]
        x = t[last]
        ok = np.isfinite(y) & (y > 0)
        if ok.sum() < 2 or np.ptp(x[ok]) == 0:
            return 0.0
        return float(np.polyfit(x[ok], np.log(y[ok]), 1)[0])

    moments = [(tt, _second_moment(s)) for tt, s in zip(traj.times, traj.snapshots)]
    m_t = np.array([m for _, m in moments])
    msl = float(np.polyfit(traj.times, m_t, 1)[0]) if len(moments) > 1 else 0.0
    finite = linf[np.isfinite(linf)]
    growth = float(finite.max() / finite[0]) if finite.size else math.nan
    lsl, tsl = slope(linf), slope(tail)
    if traj.aborted and traj.abort_reason in ("nan", "negativity", "spectral_tail"):
        cls = BLOW_UP
    elif lsl > 0:
        cls = GROWING
    else:
        cls = DECAYING
    return BlowUpVerdict(cls, lsl, tsl, msl, growth, {"abort_reason": traj.abort_reason, "steps": int(n)})


# ---------------------------------------------------------------------------
# multi-index sum


@dataclass(frozen=True)
class KahaneResult:
    lhs: float
    ratio: float


def kahane_sum_check(kappa: Sequence[int], delta: float, epsilon: float) -> KahaneResult:
    """sum_{b+g=kappa} kappa!/(b! g!) |b|^{|b|+delta} |g|^{|g|+epsilon} and its ratio to |kappa|^{|kappa|+max(delta, epsilon)}.

    Uses 0^p = 1.  Requires delta < -1/2 or epsilon < -1/2 and 1 <= |kappa| <= 20.
    """
    kappa = [int(x) for x in kappa]
    if any(x < 0 for x in kappa) or not 1 <= len(kappa) <= 3:
        raise ValueError("kappa must be a multi-index of length 1..3")
    n = sum(kappa)
    if n == 0:
        raise ValueError("|kappa| = 0 is excluded")
    if n > 20:
        raise ValueError("|kappa| > 20 exceeds the enumeration budget")
    if not (delta < -0.5 or epsilon < -0.5):
        raise ValueError("requires delta < -1/2 or epsilon < -1/2")
    padded = np.array(kappa + [0] * (3 - len(kappa)), dtype=np.int64)
    lhs = float(_accel.kahane_sum(padded, float(delta), float(epsilon)))
    return KahaneResult(lhs, lhs / n ** (n + max(delta, epsilon)))


def kahane_collapsed(n: int, delta: float, epsilon: float) -> float:
    """Same sum grouped by |b| through the Vandermonde identity (independent oracle)."""
    total = 0.0
    for b in range(n + 1):
        g = n - b
        pb = 1.0 if b == 0 else b ** (b + delta)
        pg = 1.0 if g == 0 else g ** (g + epsilon)
        total += math.comb(n, b) * pb * pg
    return total
