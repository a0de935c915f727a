"""Gaussian heat kernel, the heat semigroup, and kernel-derivative norm checks."""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import hermite

from . import _accel
from .errors import ResolutionError
from .grid import MAX_DERIVATIVE_ORDER, Field, SpectralGrid


def gaussian_kernel_values(grid: SpectralGrid, t: float) -> Field:
    """Samples of G(x, t) = (4 pi t)^(-d/2) exp(-|x|^2 / 4t), x from the box centre.

    No periodic images are added; keep sqrt(t) well inside the box.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if 4.0 * math.sqrt(t) > grid.box_length / 4.0:
        warnings.warn(f"heat kernel at t={t} is wide relative to the box (L={grid.box_length})", stacklevel=2)
    r2 = sum(c**2 for c in grid.coordinates())
    vals = (4.0 * math.pi * t) ** (-grid.dim / 2) * np.exp(-r2 / (4.0 * t))
    return Field(grid, real=np.broadcast_to(vals, grid.shape))


def apply_semigroup(f: Field, dt: float) -> Field:
    """e^{dt Laplacian} f as the multiplier exp(-|xi|^2 dt)."""
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    if dt == 0:
        return f
    mult = np.exp(-f.grid.wavenumber_squared * dt)
    return Field(f.grid, spectral=f.spectral * mult)


def gaussian_lq_norm(dim: int, t: float, q: float) -> float:
    """Closed-form ||G(., t)||_{L^q}."""
    if math.isinf(q):
        return (4.0 * math.pi * t) ** (-dim / 2)
    return (4.0 * math.pi * t) ** (-dim / 2) * (4.0 * math.pi * t / q) ** (dim / (2.0 * q))


def scaling_exponent(order: int, dim: int, q: float) -> float:
    """Exponent e with ||D^beta d_t^k G(., t)||_q = t^e ||...(., 1)||_q, order = |beta| + 2k."""
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    return -order / 2.0 - dim / 2.0 * (1.0 - inv_q)


# ---------------------------------------------------------------------------
# pointwise derivatives of G(., 1)


def _g1_derivative(n: int, x: np.ndarray) -> np.ndarray:
    """d^n/dx^n of (4 pi)^(-1/2) exp(-x^2/4) via physicists' Hermite polynomials."""
    coef = np.zeros(n + 1)
    coef[n] = 1.0
    return (-0.5) ** n * hermite.hermval(x / 2.0, coef) * np.exp(-(x**2) / 4.0) / math.sqrt(4.0 * math.pi)


def _laplacian_power_terms(dim: int, k: int):
    """(multinomial coefficient, kappa) pairs of Delta^k = sum k!/kappa! prod d_j^{2 kappa_j}."""
    for kappa in itertools.product(range(k + 1), repeat=dim):
        if sum(kappa) != k:
            continue
        c = math.factorial(k)
        for kj in kappa:
            c //= math.factorial(kj)
        yield c, kappa


def _kernel_derivative_on_axis(beta: tuple, k: int, x: np.ndarray, dim: int):
    """Generator of slabs of D^beta Delta^k G(., 1) on the tensor grid x^dim.

    Slabs run over the first axis so 3-d fields never need the full array.
    """
    terms = list(_laplacian_power_terms(dim, k))
    cache = {}

    def factor(order):
        if order not in cache:
            cache[order] = _g1_derivative(order, x)
        return cache[order]

    if dim == 1:
        out = np.zeros_like(x)
        for c, kappa in terms:
            out += c * factor(beta[0] + 2 * kappa[0])
        yield out
        return
    for i in range(x.size):
        slab = 0.0
        for c, kappa in terms:
            rest = factor(beta[1] + 2 * kappa[1])
            if dim == 2:
                prod = rest
            else:
                prod = np.multiply.outer(rest, factor(beta[2] + 2 * kappa[2]))
            slab = slab + c * factor(beta[0] + 2 * kappa[0])[i] * prod
        yield slab


def _quadrature_norms(beta: tuple, k: int, q_list: tuple, h: float, half_width: float):
    dim = len(beta)
    x = np.arange(-half_width, half_width + 0.5 * h, h)
    sums = {q: 0.0 for q in q_list if not math.isinf(q)}
    vmax = 0.0
    for slab in _kernel_derivative_on_axis(beta, k, x, dim):
        slab = np.asarray(slab)
        vmax = max(vmax, float(np.max(np.abs(slab))))
        for q in sums:
            sums[q] += _accel.abs_power_sum(slab, q)
    out = {}
    for q in q_list:
        out[q] = vmax if math.isinf(q) else (sums[q] * h**dim) ** (1.0 / q)
    return out


def _default_start_spacing(order: int, dim: int) -> float:
    # a few points per oscillation of H_order(x/2): zeros are ~2*pi/sqrt(2*order+1) apart
    base = 2.0 * math.pi / math.sqrt(2 * order + 1) / 8.0
    return min(0.25, base) * (2.0 if dim == 3 else 1.0)


@lru_cache(maxsize=None)
def reference_norms(beta: tuple, k: int, q_list: tuple, rel_tol: float = 1e-3, max_doublings: int = 4):
    """||D^beta Delta^k G(., 1)||_q for each q in q_list, refined until stable.

    The spacing is halved until every norm changes by less than rel_tol.
    Returns ``(norms, levels)`` where ``levels`` lists every resolution tried
    as ``(h, norms)``.
    """
    dim = len(beta)
    order = sum(beta) + 2 * k
    half_width = 12.0 + 1.5 * math.sqrt(order + 1)
    h = _default_start_spacing(order, dim)
    levels = [(h, _quadrature_norms(beta, k, q_list, h, half_width))]
    for _ in range(max_doublings):
        h /= 2.0
        levels.append((h, _quadrature_norms(beta, k, q_list, h, half_width)))
        prev, cur = levels[-2][1], levels[-1][1]
        if all(abs(cur[q] - prev[q]) <= rel_tol * abs(cur[q]) for q in q_list):
            return cur, tuple(levels)
    raise ResolutionError(f"kernel norm for beta={beta}, k={k} did not settle to {rel_tol} after {max_doublings} halvings")


def _check_q(q: float) -> float:
    q = float(q)
    if not (q >= 1.0):
        raise ValueError(f"q must lie in [1, inf], got {q}")
    return q


def kernel_derivative_norm(beta: Sequence[int], k: int, t: float, q: float) -> float:
    """||D^beta d_t^k G(., t)||_{L^q(R^d)}, d = len(beta).

    Time derivatives become Laplacians (the kernel solves the heat
    equation), the t = 1 norm comes from refined quadrature, and the
    t-dependence is the exact scaling law.
    """
    beta = tuple(int(b) for b in beta)
    q = _check_q(q)
    if k < 0 or any(b < 0 for b in beta):
        raise ValueError("derivative orders must be nonnegative")
    order = sum(beta) + 2 * k
    if order > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"|beta| + 2k = {order} exceeds {MAX_DERIVATIVE_ORDER}")
    if not t > 0:
        raise ValueError("t must be positive")
    if order == 0:
        base = gaussian_lq_norm(len(beta), 1.0, q)
    else:
        base = reference_norms(_canonical(beta), k, (q,))[0][q]
    return t ** scaling_exponent(order, len(beta), q) * base


def _canonical(beta: tuple) -> tuple:
    # the kernel is invariant under coordinate permutations
    return tuple(sorted(beta, reverse=True))


# ---------------------------------------------------------------------------
# bound report


@dataclass(frozen=True)
class BoundEntry:
    beta: tuple
    k: int
    q: float
    t: float
    measured: float
    bound: float
    ratio: float
    exponent: float
    predicted_exponent: float


@dataclass
class KernelBoundReport:
    dim: int
    entries: list
    implied_C0: float
    implied_M0: float
    c0_by_level: list = field(default_factory=list)
    c0_refinement_change: float = 0.0
    max_exponent_error: float = 0.0

    @property
    def max_ratio(self) -> float:
        return max(e.ratio for e in self.entries)

    def to_csv(self, path_or_file) -> None:
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh)
            w.writerow(["beta", "k", "q", "t", "measured", "bound", "ratio"])
            for e in self.entries:
                w.writerow(
                    [
                        "(" + ",".join(str(b) for b in e.beta) + ")",
                        e.k,
                        "inf" if math.isinf(e.q) else f"{e.q:.17e}",
                        f"{e.t:.17e}",
                        f"{e.measured:.17e}",
                        f"{e.bound:.17e}",
                        f"{e.ratio:.17e}",
                    ]
                )
        finally:
            if own:
                fh.close()


def _multi_indices(dim: int, max_order: int):
    for beta in itertools.product(range(max_order + 1), repeat=dim):
        if sum(beta) <= max_order:
            yield beta


def implied_c0(dim: int, p_list: Iterable[float], level: int | None = None) -> float:
    """2 * max(sup_p ||d_1 G(.,1)||_p, sup_p max_{ij} ||d_i d_j G(.,1)||_p) over p_list."""
    p_list = tuple(_check_q(p) for p in p_list)
    firsts = [(1,) + (0,) * (dim - 1)]
    seconds = [(2,) + (0,) * (dim - 1)]
    if dim > 1:
        seconds.append((1, 1) + (0,) * (dim - 2))
    vals = []
    for beta in firsts + seconds:
        norms, levels = reference_norms(beta, 0, p_list)
        if level is not None:
            norms = levels[level][1]
        vals.extend(norms.values())
    return 2.0 * max(vals)


def _factorial_bound(beta: tuple, k: int, q: float, t: float, dim: int, c0: float, m0: float) -> float:
    nb = sum(beta)
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    a = dim / 2.0 * (1.0 - inv_q)
    expo = scaling_exponent(nb + 2 * k, dim, q)
    if nb == 0 and k == 0:
        # Hoelder interpolation between ||G||_1 = 1 and ||G||_inf
        return (4.0 * math.pi) ** (-a) * t**expo
    if k == 0:
        return c0 ** (nb / 2.0) * (nb / 2.0) ** (nb / 2.0 + a) * t**expo
    return m0 ** (nb / 2.0 + k) * float(nb + k) ** (nb / 2.0 + k + a) * t**expo


def verify_kernel_bounds(
    beta_max: int,
    k_max: int,
    q_list: Sequence[float] = (1.0, 4.0 / 3.0, 2.0, 4.0, math.inf),
    t_list: Sequence[float] = (0.1, 1.0, 10.0),
    dim: int = 2,
) -> KernelBoundReport:
    """Measure ||D^beta d_t^k G(., t)||_q and compare with the factorial-type bounds.

    k = 0 rows use C0^{|b|/2} (|b|/2)^{|b|/2 + a} t^e; k >= 1 rows use
    M0^{|b|/2+k} (|b|+k)^{|b|/2+k+a} t^e with a = (d/2)(1-1/q) and
    e = -(|b|+2k)/2 - a.  C0 follows the recipe 2*max(sup||grad G||, sup||grad^2 G||)
    over q_list; M0 = 2 d C0.
    """
    q_list = tuple(_check_q(q) for q in q_list)
    if beta_max + 2 * k_max > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"beta_max + 2 k_max must not exceed {MAX_DERIVATIVE_ORDER}")
    c0 = implied_c0(dim, q_list)
    # implied C0 at the second-finest resolution, for the refinement check
    c0_levels = [implied_c0(dim, q_list, level=-2), c0]
    m0 = 2.0 * dim * c0
    entries = []
    max_err = 0.0
    for beta in _multi_indices(dim, beta_max):
        for k in range(k_max + 1):
            order = sum(beta) + 2 * k
            if order == 0:
                ref = {q: gaussian_lq_norm(dim, 1.0, q) for q in q_list}
            else:
                ref = reference_norms(_canonical(beta), k, q_list)[0]
            for q in q_list:
                e_pred = scaling_exponent(order, dim, q)
                measured = [t**e_pred * ref[q] for t in t_list]
                if len(t_list) > 1:
                    lt = np.log(np.asarray(t_list, dtype=float))
                    fitted = np.polyfit(lt, np.log(measured), 1)[0]
                    max_err = max(max_err, abs(fitted - e_pred))
                for t, m in zip(t_list, measured):
                    b = _factorial_bound(beta, k, q, t, dim, c0, m0)
                    entries.append(BoundEntry(beta, k, q, t, m, b, m / b, e_pred, e_pred))
    change = abs(c0_levels[1] - c0_levels[0]) / c0_levels[1]
    return KernelBoundReport(dim, entries, c0, m0, c0_levels, change, max_err)


# ---------------------------------------------------------------------------
# small-time vanishing


@dataclass
class ProbeReport:
    points: list
    slope: float
    vanishing: bool
    informational: bool


def small_time_vanishing_probe(f: Field, p: float, q: float, t_sequence: Sequence[float]) -> ProbeReport:
    """t^{(d/2)(1/p-1/q)} ||G(., t) * f||_q along a decreasing t sequence.

    For q > p the values should fall toward zero as t -> 0; q == p is
    returned as informational (the weight is identically one).
    """
    from .diagnostics import lq_norm

    p, q = _check_q(p), _check_q(q)
    ts = [float(t) for t in t_sequence]
    floor = 4.0 * f.grid.spacing**2
    if any(t < floor for t in ts):
        raise ResolutionError(f"t below the resolution floor 4*h^2 = {floor:.3e}")
    if any(b >= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t_sequence must decrease")
    inv = lambda v: 0.0 if math.isinf(v) else 1.0 / v  # noqa: E731
    w = f.grid.dim / 2.0 * (inv(p) - inv(q))
    pts = [(t, t**w * lq_norm(apply_semigroup(f, t), q)) for t in ts]
    if len(pts) > 1:
        slope = float(np.polyfit(np.log(ts), np.log([v for _, v in pts]), 1)[0])
    else:
        slope = 0.0
    informational = q <= p
    vanishing = (not informational) and pts[-1][1] < pts[0][1] and slope > 0
    return ProbeReport(pts, slope, vanishing, informational)
