"""Pseudo-spectral simulator and verification harness for logarithmic-potential chemotaxis."""

from .chemo import DriftMultiplier, build_drift_multiplier, compute_drift, hls_check, radial_drift_oracle
from .config import RunConfig, preset, preset_list
from .diagnostics import (
    AnalyticityEstimate,
    DecayFit,
    analyticity_radius_space,
    analyticity_radius_time,
    blow_up_monitor,
    decay_fit,
    growth_rate_fit,
    kahane_sum_check,
    lq_norm,
    theta_functional,
)
from .evolution import (
    PicardDiagnostics,
    Trajectory,
    duhamel_apply,
    etd_evolve,
    leibniz_identity_check,
    picard_solve,
    time_derivative_ladder,
)
from .grid import Field, SpectralGrid, dealias, forward_transform, inverse_transform, make_grid, spectral_derivative
from .harness import RunReport, run_scenario, sweep
from .heat import (
    KernelBoundReport,
    apply_semigroup,
    gaussian_kernel_values,
    kernel_derivative_norm,
    small_time_vanishing_probe,
    verify_kernel_bounds,
)

__version__ = "0.1.0"
