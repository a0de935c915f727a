import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from pkslab.chemo import (
    _radial_component,
    build_drift_multiplier,
    calibrate_gamma3,
    compute_drift,
    gamma_closed_form,
    hls_check,
    radial_drift_oracle,
)
from pkslab.grid import Field, dealias, make_grid, spectral_derivative


class TestConstants:
    def test_gamma_values(self):
        assert gamma_closed_form(1) == pytest.approx(1.0)
        assert gamma_closed_form(2) == pytest.approx(1.0)
        assert gamma_closed_form(3) == pytest.approx(2 * math.pi / 3)

    def test_symbol_zero_mode_and_nyquist(self):
        g = make_grid(2, 16, 4.0)
        m = build_drift_multiplier(g).components
        assert m[0][0, 0] == 0 and m[1][0, 0] == 0
        assert np.all(m[0][8, :] == 0)
        assert np.all(m[1][:, 8] == 0)

    def test_multiplier_cached_and_grid_checked(self, gaussian):
        g = make_grid(2, 16, 4.0)
        assert build_drift_multiplier(g) is build_drift_multiplier(make_grid(2, 16, 4.0))
        with pytest.raises(ValueError, match="different grid"):
            compute_drift(gaussian(2, 32, 4.0, 0.5), build_drift_multiplier(g))


class TestSingleModes:
    """Drift of rho = cos(k x) in closed form: -gamma sin(k x) / k^(d-1)."""

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_cosine(self, dim):
        n = 16 if dim == 3 else 32
        g = make_grid(dim, n, 2 * math.pi)
        k = 3
        x = g.coordinates()[0]
        rho = Field(g, real=np.broadcast_to(np.cos(k * x), g.shape))
        drift = compute_drift(rho)
        expected = -gamma_closed_form(dim) * np.sin(k * x) / k ** (dim - 1)
        assert np.allclose(drift[0].real, np.broadcast_to(expected, g.shape), atol=1e-13)
        for comp in drift[1:]:
            assert np.max(np.abs(comp.real)) < 1e-13


class TestPoisson2D:
    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_divergence_is_minus_fluctuation(self, seed):
        g = make_grid(2, 32, 7.0)
        rho = dealias(Field(g, real=np.random.default_rng(seed).random(g.shape)))
        drift = compute_drift(rho)
        div = spectral_derivative(drift[0], (1, 0)).real + spectral_derivative(drift[1], (0, 1)).real
        assert np.allclose(div, -(rho.real - rho.real.mean()), atol=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10**6), shift=st.integers(0, 31), a=st.floats(-3, 3))
    def test_linear_and_translation_equivariant(self, seed, shift, a):
        g = make_grid(2, 32, 5.0)
        rng = np.random.default_rng(seed)
        f, h = rng.random(g.shape), rng.random(g.shape)
        lhs = compute_drift(Field(g, real=a * f + h))[0].real
        rhs = a * compute_drift(Field(g, real=f))[0].real + compute_drift(Field(g, real=h))[0].real
        assert np.allclose(lhs, rhs, atol=1e-11)
        rolled = compute_drift(Field(g, real=np.roll(f, shift, axis=0)))[0].real
        assert np.allclose(rolled, np.roll(compute_drift(Field(g, real=f))[0].real, shift, axis=0), atol=1e-12)


def _gauss_profile(s, sigma, dim, mass=1.0):
    return mass * (2 * math.pi * sigma**2) ** (-dim / 2) * np.exp(-(s**2) / (2 * sigma**2))


class TestRadialOracle:
    def test_disk_2d(self):
        # the jump at r = 1 costs O(h) in the trapezoid rule
        s = np.linspace(0, 4, 40001)
        out = radial_drift_oracle(s, (s <= 1.0).astype(float), 2, r_eval=np.array([2.0, 3.0]))
        assert out == pytest.approx([-math.pi / (2 * math.pi * 2.0), -math.pi / (2 * math.pi * 3.0)], rel=5e-4)

    @pytest.mark.parametrize("dim,coef", [(1, 1 / math.pi), (2, 1 / (2 * math.pi)), (3, 1 / (3 * math.pi))])
    def test_far_field_point_mass(self, dim, coef):
        # a narrow bump looks like a point mass: drift ~ -M coef / r
        sigma = 0.05
        s = np.linspace(0, 12 * sigma, 6001)
        prof = _gauss_profile(s, sigma, dim)
        norm = {1: 2.0, 2: 2 * math.pi, 3: 4 * math.pi}[dim]
        mass = integrate.trapezoid(norm * s ** (dim - 1) * prof, s)
        out = radial_drift_oracle(s, prof, dim, r_eval=np.array([3.0]))
        assert out[0] == pytest.approx(-mass * coef / 3.0, rel=1e-3)

    @pytest.mark.parametrize("dim,n,box", [(1, 2048, 64.0), (2, 512, 64.0)])
    def test_matches_grid_drift(self, dim, n, box):
        sigma = 0.5 if dim == 2 else 0.3
        g = make_grid(dim, n, box)
        r2 = sum(c**2 for c in g.coordinates())
        rho = Field(g, real=np.broadcast_to(_gauss_profile(np.sqrt(r2), sigma, dim), g.shape))
        drift = compute_drift(rho)
        radial = drift[0].real if dim == 1 else _radial_component(g, drift)
        r = np.abs(g.axis_coordinates) if dim == 1 else g.radius()
        signed = np.sign(g.axis_coordinates) if dim == 1 else 1.0
        sel = (r > 0.5) & (r < 2.0)
        s = np.linspace(0, 12 * sigma, 20001)
        oracle = radial_drift_oracle(s, _gauss_profile(s, sigma, dim), dim, r_eval=r[sel])
        got = (radial * signed)[sel]
        assert np.max(np.abs(got / oracle - 1)) < 5e-3

    def test_gamma3_calibration(self):
        rec = calibrate_gamma3()
        assert rec["measured"] == pytest.approx(gamma_closed_form(3), rel=0.01)
        m = build_drift_multiplier(make_grid(3, 16, 4.0), calibrate=True)
        assert m.calibration["measured"] == rec["measured"]

    def test_zero_profile(self):
        s = np.linspace(0, 1, 11)
        assert np.all(radial_drift_oracle(s, np.zeros(11), 2) == 0)

    @pytest.mark.parametrize(
        "radii,profile,kw",
        [
            (np.linspace(0, 1, 11), -np.ones(11), {}),
            (np.linspace(0.1, 1, 11), np.zeros(11), {}),
            (np.linspace(0, 1, 11), np.ones(11), {}),
            (np.linspace(0, 10, 101), np.exp(-np.linspace(0, 10, 101) ** 2), {"box_length": 4.0}),
        ],
    )
    def test_rejects_bad_profiles(self, radii, profile, kw):
        with pytest.raises(ValueError):
            radial_drift_oracle(radii, profile, 2, **kw)

    def test_rejects_bad_dimension(self):
        s = np.linspace(0, 5, 101)
        with pytest.raises(ValueError):
            radial_drift_oracle(s, np.exp(-(s**2) * 4), 4)


class TestHLS:
    def test_zero_density(self):
        g = make_grid(2, 16, 4.0)
        assert hls_check(Field(g, real=np.zeros(g.shape))).ratio == 0.0

    def test_gaussian_against_free_space_quadrature(self, gaussian):
        sigma = 0.5
        # |grad c| = (1 - exp(-r^2 / 2 sigma^2)) / (2 pi r) for a unit Gaussian
        lhs = integrate.quad(lambda r: ((1 - math.exp(-r * r / (2 * sigma**2))) / (2 * math.pi * r)) ** 4 * 2 * math.pi * r, 0, np.inf, limit=200)[0] ** 0.25
        rhs = integrate.quad(lambda r: (math.exp(-r * r / (2 * sigma**2)) / (2 * math.pi * sigma**2)) ** (4 / 3) * 2 * math.pi * r, 0, np.inf)[0] ** 0.75
        res = hls_check(gaussian(2, 512, 64.0, sigma))
        assert res.rhs == pytest.approx(rhs, rel=1e-6)
        assert res.ratio == pytest.approx(lhs / rhs, rel=0.01)

    @settings(max_examples=10, deadline=None)
    @given(a=st.floats(0.1, 10.0))
    def test_homogeneous_of_degree_zero(self, a, gaussian):
        f = gaussian(2, 64, 16.0, 1.0)
        assert hls_check(f * a).ratio == pytest.approx(hls_check(f).ratio, rel=1e-12)
