import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from pkslab.errors import ResolutionError
from pkslab.grid import Field, make_grid
from pkslab.heat import (
    apply_semigroup,
    gaussian_kernel_values,
    gaussian_lq_norm,
    implied_c0,
    kernel_derivative_norm,
    scaling_exponent,
    small_time_vanishing_probe,
    verify_kernel_bounds,
)


def _radial_lq(fn, dim, q):
    """(int_R^d |fn(|x|)|^q dx)^(1/q) by radial quadrature."""
    area = {1: 2.0, 2: 2 * math.pi, 3: 4 * math.pi}[dim]
    val, _ = integrate.quad(lambda r: area * r ** (dim - 1) * abs(fn(r)) ** q, 0, np.inf, limit=200)
    return val ** (1 / q)


class TestClosedForms:
    @pytest.mark.parametrize("dim", [1, 2, 3])
    @pytest.mark.parametrize("q", [1.0, 4 / 3, 2.0, 4.0])
    @pytest.mark.parametrize("t", [0.3, 2.0])
    def test_gaussian_lq_norm(self, dim, q, t):
        g = lambda r: (4 * math.pi * t) ** (-dim / 2) * math.exp(-r * r / (4 * t))  # noqa: E731
        assert gaussian_lq_norm(dim, t, q) == pytest.approx(_radial_lq(g, dim, q), rel=1e-8)

    def test_gaussian_linf_and_mass(self):
        assert gaussian_lq_norm(2, 1.0, math.inf) == pytest.approx(1 / (4 * math.pi))
        assert gaussian_lq_norm(3, 5.0, 1.0) == pytest.approx(1.0)

    def test_kernel_values_and_moments(self):
        t = 1 / (4 * math.pi)
        g = make_grid(2, 256, 8.0)
        f = gaussian_kernel_values(g, t)
        assert f.real[128, 128] == pytest.approx(1.0, rel=1e-14)
        assert f.integral() == pytest.approx(1.0, rel=1e-12)
        # int |x|^2 G(x, t) dx = 2 d t
        r2 = g.radius() ** 2
        assert np.sum(r2 * f.real) * g.cell_volume == pytest.approx(4 * t, rel=1e-10)

    def test_scaling_exponent(self):
        # |beta| + 2k = 3 in d = 2 at q = 2
        assert scaling_exponent(3, 2, 2.0) == -2.0
        assert scaling_exponent(0, 2, 1.0) == 0.0
        assert scaling_exponent(1, 2, math.inf) == -1.5
        assert scaling_exponent(2, 1, 2.0) == pytest.approx(-1.25)


class TestKernelDerivativeNorm:
    def test_first_derivative_l1_1d(self):
        # integral of |G'| is 2 G(0)
        assert kernel_derivative_norm((1,), 0, 1.0, 1.0) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-3)

    def test_second_derivative_sup_1d(self):
        assert kernel_derivative_norm((2,), 0, 1.0, math.inf) == pytest.approx(0.5 / math.sqrt(4 * math.pi), rel=1e-3)

    def test_time_derivative_sup_2d(self):
        # |d_t G(0, t)| = (d / 2t) G(0, t)
        assert kernel_derivative_norm((0, 0), 1, 1.0, math.inf) == pytest.approx(1 / (4 * math.pi), rel=1e-3)

    @pytest.mark.parametrize("beta", [(1,), (3,), (2, 1), (1, 0, 0)])
    def test_l2_against_plancherel(self, beta):
        dim, t = len(beta), 0.7
        total = 1.0
        for b in list(beta) + [0] * (dim - len(beta)):
            v, _ = integrate.quad(lambda x: x ** (2 * b) * math.exp(-2 * t * x * x), -np.inf, np.inf)
            total *= v
        exact = math.sqrt(total / (2 * math.pi) ** dim)
        assert kernel_derivative_norm(beta, 0, t, 2.0) == pytest.approx(exact, rel=2e-3)

    def test_exact_scaling_in_t(self):
        base = kernel_derivative_norm((1, 1), 1, 1.0, 4.0)
        e = scaling_exponent(4, 2, 4.0)
        assert kernel_derivative_norm((1, 1), 1, 9.0, 4.0) == pytest.approx(9.0**e * base, rel=1e-14)

    def test_permutation_invariance(self):
        assert kernel_derivative_norm((0, 2), 0, 1.0, 2.0) == kernel_derivative_norm((2, 0), 0, 1.0, 2.0)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            kernel_derivative_norm((1,), 0, 1.0, 0.5)
        with pytest.raises(ValueError):
            kernel_derivative_norm((1,), 0, 0.0, 2.0)
        with pytest.raises(ValueError):
            kernel_derivative_norm((7,), 3, 1.0, 2.0)


@pytest.fixture(scope="module")
def report():
    return verify_kernel_bounds(3, 1, (1.0, 2.0, math.inf), (0.1, 1.0, 10.0), dim=1)


class TestBoundReport:
    def test_entries_and_exponents(self, report):
        assert len(report.entries) == 4 * 2 * 3 * 3
        assert report.max_exponent_error <= 1e-12
        for e in report.entries:
            assert e.exponent == scaling_exponent(sum(e.beta) + 2 * e.k, 1, e.q)

    def test_ratios_and_constants(self, report):
        assert report.max_ratio <= 1.0
        assert report.implied_C0 == pytest.approx(implied_c0(1, (1.0, 2.0, math.inf)))
        assert report.implied_M0 == pytest.approx(2 * report.implied_C0)
        assert report.c0_refinement_change <= 0.01

    def test_zero_order_entries_are_hoelder_interpolation(self, report):
        zero = {e.q: e for e in report.entries if e.beta == (0,) and e.k == 0 and e.t == 1.0}
        assert zero[2.0].measured == pytest.approx(gaussian_lq_norm(1, 1.0, 2.0))
        # sharp at the endpoints, strict in between
        assert zero[1.0].ratio == pytest.approx(1.0)
        assert zero[math.inf].ratio == pytest.approx(1.0)
        assert zero[2.0].ratio < 1.0

    def test_csv(self, report):
        buf = io.StringIO()
        report.to_csv(buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "beta,k,q,t,measured,bound,ratio"
        assert len(lines) == len(report.entries) + 1

    def test_order_limit(self):
        with pytest.raises(ValueError):
            verify_kernel_bounds(6, 4, dim=1)


class TestSemigroup:
    def test_gaussian_evolves_to_wider_gaussian(self):
        g = make_grid(2, 128, 32.0)
        f = gaussian_kernel_values(g, 0.5)
        assert np.allclose(apply_semigroup(f, 1.5).real, gaussian_kernel_values(g, 2.0).real, atol=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(a=st.floats(0.0, 2.0), b=st.floats(0.0, 2.0), seed=st.integers(0, 10**6))
    def test_semigroup_property(self, a, b, seed):
        g = make_grid(1, 64, 10.0)
        f = Field(g, real=np.random.default_rng(seed).random(g.shape))
        two = apply_semigroup(apply_semigroup(f, a), b).real
        assert np.allclose(two, apply_semigroup(f, a + b).real, atol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(t=st.floats(0.01, 3.0), seed=st.integers(0, 10**6))
    def test_mass_preserved_and_sup_decreases(self, t, seed):
        g = make_grid(2, 32, 8.0)
        f = Field(g, real=np.random.default_rng(seed).random(g.shape))
        out = apply_semigroup(f, t)
        assert out.integral() == pytest.approx(f.integral(), rel=1e-12)
        assert out.real.max() <= f.real.max() + 1e-12

    def test_zero_time_is_identity(self):
        g = make_grid(2, 16, 3.0)
        f = Field(g, real=np.random.default_rng(5).random(g.shape))
        assert np.allclose(apply_semigroup(f, 0.0).real, f.real, atol=1e-15)

    def test_negative_time_rejected(self):
        g = make_grid(1, 16, 1.0)
        with pytest.raises(ValueError):
            apply_semigroup(Field(g, real=np.ones(16)), -1.0)
        with pytest.raises(ValueError):
            gaussian_kernel_values(g, 0.0)

    def test_wide_kernel_warns(self):
        with pytest.warns(UserWarning, match="wide"):
            gaussian_kernel_values(make_grid(1, 64, 16.0), 2.0)


class TestSmallTimeProbe:
    def test_vanishing_for_q_above_p(self, gaussian):
        f = gaussian(2, 512, 16.0, 0.3)
        rep = small_time_vanishing_probe(f, 1.0, math.inf, [1.0, 0.3, 0.1, 0.03, 0.01])
        assert rep.vanishing and not rep.informational
        # oracle: t / (4 pi (t + sigma^2 / 2))
        for t, v in rep.points:
            assert v == pytest.approx(t / (4 * math.pi * (t + 0.045)), rel=1e-6)

    def test_equal_exponents_informational(self, gaussian):
        f = gaussian(1, 128, 16.0, 0.5)
        rep = small_time_vanishing_probe(f, 2.0, 2.0, [1.0, 0.1])
        assert rep.informational and not rep.vanishing

    def test_guards(self, gaussian):
        f = gaussian(1, 64, 16.0, 0.5)
        with pytest.raises(ResolutionError):
            small_time_vanishing_probe(f, 1.0, 2.0, [1.0, 1e-4])
        with pytest.raises(ValueError):
            small_time_vanishing_probe(f, 1.0, 2.0, [0.5, 1.0])
