"""Loop-bound kernels with a numba path and a pure-numpy fallback.

Set ``PKSLAB_DISABLE_NUMBA=1`` before import to force the numpy path.
Both variants of every kernel stay importable (``*_numpy`` / ``*_loops``)
so they can be cross-checked and benchmarked against each other.
"""

import math
import os

import numpy as np

_DISABLED = os.environ.get("PKSLAB_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def _jit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# sum |f|^q


def abs_power_sum_loops(values, q):
    total = 0.0
    for i in range(values.size):
        total += abs(values[i]) ** q
    return total


def abs_power_sum_numpy(values, q):
    a = np.abs(values)
    if q == 1.0:
        return float(a.sum())
    if q == 2.0:
        return float(np.vdot(a, a).real)
    return float(np.sum(a**q))


# ---------------------------------------------------------------------------
# radial shell maxima of a spectrum


def shell_max_loops(kmag, amp, dk, nshell):
    best = np.zeros(nshell)
    at = np.full(nshell, -1.0)
    for i in range(kmag.size):
        s = int(kmag[i] / dk + 0.5)
        if s >= nshell:
            continue
        if amp[i] > best[s]:
            best[s] = amp[i]
            at[s] = kmag[i]
    return best, at


def shell_max_numpy(kmag, amp, dk, nshell):
    shell = np.floor(kmag / dk + 0.5).astype(np.int64)
    keep = shell < nshell
    shell, a, k = shell[keep], amp[keep], kmag[keep]
    best = np.zeros(nshell)
    at = np.full(nshell, -1.0)
    if shell.size == 0:
        return best, at
    # sort by (shell, amplitude) so the last entry of each shell is its max
    order = np.lexsort((a, shell))
    shell, a, k = shell[order], a[order], k[order]
    last = np.flatnonzero(np.r_[shell[1:] != shell[:-1], True])
    pos = a[last] > 0.0
    best[shell[last][pos]] = a[last][pos]
    at[shell[last][pos]] = k[last][pos]
    return best, at


# ---------------------------------------------------------------------------
# radial drift of the 3-d logarithmic potential
#
# radial part of  int (x-y)/|x-y|^2 rho(y) dy  for radial rho, |x| = r:
#   int_0^inf rho(s) s^2 K(r, s) ds,
#   K(r, s) = 2 pi [1/r + (r^2 - s^2)/(2 r^2 s) log|(r+s)/(r-s)|]
# The log singularity at s = r is multiplied by (r^2 - s^2), so the
# integrand is continuous and the trapezoid rule converges like h^2 log h.


def log_shell_sum_3d_loops(r_eval, s, weights):
    out = np.zeros(r_eval.size)
    for i in range(r_eval.size):
        r = r_eval[i]
        acc = 0.0
        for j in range(s.size):
            sj = s[j]
            if sj == 0.0:
                kern = 2.0 / r
            elif sj == r:
                kern = 1.0 / r
            else:
                kern = 1.0 / r + (r * r - sj * sj) / (2.0 * r * r * sj) * math.log(abs((r + sj) / (r - sj)))
            acc += weights[j] * kern
        out[i] = 2.0 * math.pi * acc
    return out


def log_shell_sum_3d_numpy(r_eval, s, weights):
    out = np.empty(r_eval.size)
    for i, r in enumerate(r_eval):
        kern = np.empty(s.size)
        zero = s == 0.0
        on = s == r
        reg = ~(zero | on)
        sj = s[reg]
        kern[reg] = 1.0 / r + (r * r - sj * sj) / (2.0 * r * r * sj) * np.log(np.abs((r + sj) / (r - sj)))
        kern[zero] = 2.0 / r
        kern[on] = 1.0 / r
        out[i] = 2.0 * np.pi * np.dot(weights, kern)
    return out


# ---------------------------------------------------------------------------
# principal-value Hilbert quadrature for even 1-d profiles
#
#   p.v. int_0^S rho(s) 2x/(x^2 - s^2) ds
#     = int_0^S (rho(s) - rho(x)) 2x/(x^2 - s^2) ds + rho(x) log|(x+S)/(x-S)|


def hilbert_pv_half_loops(x_eval, s, weights, rho_s, rho_x, drho_x, s_max):
    out = np.zeros(x_eval.size)
    for i in range(x_eval.size):
        x = x_eval[i]
        acc = 0.0
        for j in range(s.size):
            sj = s[j]
            if sj == x:
                val = -drho_x[i]
            else:
                val = (rho_s[j] - rho_x[i]) * 2.0 * x / (x * x - sj * sj)
            acc += weights[j] * val
        out[i] = acc + rho_x[i] * math.log(abs((x + s_max) / (x - s_max)))
    return out


def hilbert_pv_half_numpy(x_eval, s, weights, rho_s, rho_x, drho_x, s_max):
    out = np.empty(x_eval.size)
    for i, x in enumerate(x_eval):
        on = s == x
        val = np.empty(s.size)
        reg = ~on
        val[reg] = (rho_s[reg] - rho_x[i]) * 2.0 * x / (x * x - s[reg] ** 2)
        val[on] = -drho_x[i]
        out[i] = np.dot(weights, val) + rho_x[i] * np.log(abs((x + s_max) / (x - s_max)))
    return out


# ---------------------------------------------------------------------------
# multi-index binomial sum  sum_{b+g=kappa} kappa!/(b! g!) |b|^(|b|+delta) |g|^(|g|+eps)
# with the convention 0^p = 1; kappa padded to length 3.


def kahane_sum_loops(kappa, delta, eps):
    n = kappa[0] + kappa[1] + kappa[2]
    total = 0.0
    for b0 in range(kappa[0] + 1):
        c0 = math.lgamma(kappa[0] + 1) - math.lgamma(b0 + 1) - math.lgamma(kappa[0] - b0 + 1)
        for b1 in range(kappa[1] + 1):
            c1 = math.lgamma(kappa[1] + 1) - math.lgamma(b1 + 1) - math.lgamma(kappa[1] - b1 + 1)
            for b2 in range(kappa[2] + 1):
                c2 = math.lgamma(kappa[2] + 1) - math.lgamma(b2 + 1) - math.lgamma(kappa[2] - b2 + 1)
                nb = b0 + b1 + b2
                ng = n - nb
                lb = 0.0 if nb == 0 else (nb + delta) * math.log(nb)
                lg = 0.0 if ng == 0 else (ng + eps) * math.log(ng)
                total += math.exp(c0 + c1 + c2 + lb + lg)
    return total


def kahane_sum_numpy(kappa, delta, eps):
    from scipy.special import gammaln

    axes = [np.arange(int(k) + 1) for k in kappa]
    grids = np.meshgrid(*axes, indexing="ij")
    logc = np.zeros(grids[0].shape)
    for k, b in zip(kappa, grids):
        logc += gammaln(k + 1) - gammaln(b + 1) - gammaln(k - b + 1)
    n = int(np.sum(kappa))
    nb = sum(grids).astype(float)
    ng = n - nb
    with np.errstate(divide="ignore", invalid="ignore"):
        lb = np.where(nb == 0, 0.0, (nb + delta) * np.log(nb))
        lg = np.where(ng == 0, 0.0, (ng + eps) * np.log(ng))
    return float(np.sum(np.exp(logc + lb + lg)))


if USE_NUMBA:
    _abs_power_sum = _jit(abs_power_sum_loops)
    shell_max = _jit(shell_max_loops)
    log_shell_sum_3d = _jit(log_shell_sum_3d_loops)
    hilbert_pv_half = _jit(hilbert_pv_half_loops)
    kahane_sum = _jit(kahane_sum_loops)
else:
    _abs_power_sum = abs_power_sum_numpy
    shell_max = shell_max_numpy
    log_shell_sum_3d = log_shell_sum_3d_numpy
    hilbert_pv_half = hilbert_pv_half_numpy
    kahane_sum = kahane_sum_numpy


def abs_power_sum(values, q):
    """sum(|values|**q) over a flattened view."""
    return float(_abs_power_sum(np.ascontiguousarray(values).ravel(), float(q)))


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
