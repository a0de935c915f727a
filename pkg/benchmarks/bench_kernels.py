"""Compare the numba and numpy paths of the loop kernels, and put them next to an FFT-bound solver step.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Run once with PKSLAB_DISABLE_NUMBA=1 to see the end-to-end solver cost
without compiled kernels.
"""

import argparse
import math
import timeit

import numpy as np

from pkslab import _accel
from pkslab.config import preset
from pkslab.evolution import etd_evolve
from pkslab.harness import build_initial


def _best(fn, repeat):
    fn()  # warm-up (and numba compilation)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases():
    rng = np.random.default_rng(0)
    big = rng.normal(size=512 * 512)
    kmag = rng.random(256 * 256) * 40
    amp = rng.random(256 * 256)
    s = np.linspace(0, 8, 4001)
    w = np.exp(-s * s) * s**2 * (s[1] - s[0])
    r = np.linspace(0.1, 6, 200)
    kappa = np.array([7, 7, 6], dtype=np.int64)
    return {
        "abs_power_sum q=4/3": (
            lambda: _accel._abs_power_sum(big, 4 / 3) if _accel.USE_NUMBA else None,
            lambda: _accel.abs_power_sum_numpy(big, 4 / 3),
        ),
        "shell_max 256^2": (
            lambda: _accel.shell_max(kmag, amp, 0.2, 200) if _accel.USE_NUMBA else None,
            lambda: _accel.shell_max_numpy(kmag, amp, 0.2, 200),
        ),
        "log_shell_sum_3d 200x4001": (
            lambda: _accel.log_shell_sum_3d(r, s, w) if _accel.USE_NUMBA else None,
            lambda: _accel.log_shell_sum_3d_numpy(r, s, w),
        ),
        "kahane_sum |kappa|=20": (
            lambda: _accel.kahane_sum(kappa, -1.0, -1.0) if _accel.USE_NUMBA else None,
            lambda: _accel.kahane_sum_numpy(kappa, -1.0, -1.0),
        ),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    print(f"backend: {_accel.backend()}")
    print(f"{'kernel':28s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speed-up':>9s}")
    for name, (jit, ref) in kernel_cases().items():
        t_ref = _best(ref, args.repeat)
        t_jit = _best(jit, args.repeat) if _accel.USE_NUMBA else math.nan
        print(f"{name:28s} {1e3 * t_jit:11.3f} {1e3 * t_ref:11.3f} {t_ref / t_jit:9.1f}")

    cfg = preset("small_mass_2d").with_overrides({"grid.n_per_axis": 256, "grid.box_length": 32.0})
    rho0 = build_initial(cfg)
    steps = 20
    t_run = _best(lambda: etd_evolve(rho0, [steps * 0.01], dt_max=0.01), max(1, args.repeat // 2))
    ops = rho0.grid.ops
    a = ops.forward(rho0.real)
    t_fft = _best(lambda: ops.forward(ops.inverse(a)), args.repeat)
    per_step = t_run / steps
    print(f"\nETD step, 256^2: {1e3 * per_step:.2f} ms = {per_step / t_fft:.1f} forward+inverse FFT pairs ({1e3 * t_fft:.2f} ms each)")


if __name__ == "__main__":
    main()
