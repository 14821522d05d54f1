import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import betainc

from holderlab import _streams
from holderlab import kernels as kn
from oracles import cap_area_fraction, exterior_integral, planar_arc_measure, radial_cdf_quadrature, sphere_integral


# ---------------------------------------------------------------------------
# classical kernel
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("n", [2, 3])
def test_poisson_normalization(n):
    rng = np.random.default_rng(10 + n)
    for _ in range(5):
        x = rng.normal(size=n)
        x *= 0.7 * rng.random() ** (1 / n) / np.linalg.norm(x)
        total = sphere_integral(lambda y: kn.poisson_kernel(x, y), n)
        assert total == pytest.approx(1.0, abs=1e-9)


def test_poisson_kernel_at_center_is_uniform():
    assert kn.poisson_kernel([0, 0, 0], [1, 0, 0]) == pytest.approx(1 / (4 * math.pi))
    assert kn.poisson_kernel([0, 0], [0, 2], r=2) == pytest.approx(1 / (2 * math.pi * 2))


@pytest.mark.parametrize("x,y", [([1.0, 0.0], [0.0, 1.0]), ([0.1, 0.0], [0.5, 0.5]), ([0.1, 0.0], [1.0, 0.0, 0.0])])
def test_poisson_kernel_rejects(x, y):
    with pytest.raises(ValueError):
        kn.poisson_kernel(x, y)


# ---------------------------------------------------------------------------
# cap measures
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("theta", [math.pi / 6, math.pi / 2, 5 * math.pi / 6])
def test_mean_value_identity(n, theta):
    cap = kn.CapBoundaryData.indicator(theta, np.eye(n)[0])
    assert kn.cap_harmonic_measure(np.zeros(n), cap) == pytest.approx(cap_area_fraction(theta, n), abs=1e-9)


@pytest.mark.parametrize("x", [(0.3, 0.1), (-0.5, 0.2), (0.0, -0.7), (0.8, 0.0)])
@pytest.mark.parametrize("theta", [0.3, 1.2, 2.5])
def test_planar_arc_closed_form(x, theta):
    cap = kn.CapBoundaryData.indicator(theta, (1.0, 0.0))
    assert kn.cap_harmonic_measure(np.array(x), cap) == pytest.approx(planar_arc_measure(x, theta), abs=1e-8)


def test_three_dim_off_axis_against_grid():
    cap = kn.CapBoundaryData.indicator(0.9, (0.0, 0.0, 1.0))
    x = np.array([0.2, -0.3, 0.25])
    grid = sphere_integral(lambda y: kn.poisson_kernel(x, y) * (y[:, 2] >= math.cos(0.9)), 3, m=1200, q=1600)
    assert kn.cap_harmonic_measure(x, cap) == pytest.approx(grid, abs=2e-3)

def test_cap_and_complement_sum_to_one():
    axis = (0.0, 1.0, 0.0)
    x = np.array([0.1, 0.4, -0.2])
    cap = kn.CapBoundaryData.indicator(1.1, axis)
    comp = kn.CapBoundaryData(axis, 1.1, 1.1, 0.0, 1.0)
    assert kn.cap_harmonic_measure(x, cap) + kn.cap_harmonic_measure(x, comp) == pytest.approx(1.0, abs=1e-9)


def test_ramp_data_between_levels():
    g = kn.CapBoundaryData.g_nu(0.5, (1.0, 0.0), low=0.2, high=1.0)
    assert g.inner_angle == pytest.approx(2 * math.asin(0.125))
    assert g.outer_angle == pytest.approx(2 * math.asin(0.25))
    v = kn.cap_harmonic_measure(np.array([0.1, 0.1]), g)
    assert 0.2 < v < 1.0
    assert g.evaluate([[1.0, 0.0], [-1.0, 0.0]]).tolist() == [0.2, 1.0]


@pytest.mark.parametrize("inner,outer", [(0.0, 1.0), (1.0, 0.5), (1.0, 4.0)])
def test_cap_data_validation(inner, outer):
    with pytest.raises(ValueError):
        kn.CapBoundaryData((1.0, 0.0), inner, outer)


def test_one_dimensional_cap():
    cap = kn.CapBoundaryData.indicator(0.5, (1.0,))
    # harmonic measure of the endpoint +1 of (-1, 1) from x is (1 + x) / 2
    assert kn.cap_harmonic_measure(np.array([0.4]), cap) == pytest.approx(0.7)


# ---------------------------------------------------------------------------
# decay constants
# ---------------------------------------------------------------------------


def test_mu_full_sphere_is_one():
    assert kn.mu_for_cap_angle(math.pi, 0.5, 3) == 1.0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.1, 0.9))
def test_mu_for_cap_angle_is_minimum_at_antipode(frac, tau2):
    theta = frac * math.pi
    mu = kn.mu_for_cap_angle(theta, tau2, 2)
    cap = kn.CapBoundaryData.indicator(theta, (1.0, 0.0))
    assert mu == pytest.approx(kn.cap_harmonic_measure(np.array([-tau2, 0.0]), cap), abs=1e-9)
    assert 0.0 < mu < cap_area_fraction(theta, 2) + 1e-12


def test_mu_cap_planar_closed_form():
    theta = 2 * math.asin(0.3 / 4)
    assert kn.mu_cap(0.3, 0.5, 2) == pytest.approx(planar_arc_measure((-0.5, 0.0), theta), abs=1e-10)
    assert kn.mu_cap(0.3, 0.5, 2) == pytest.approx(0.015955, abs=5e-6)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_mu_monotone(n):
    vals = [kn.mu_cap(nu, 0.5, n) for nu in (0.2, 0.5, 0.9)]
    assert vals == sorted(vals)
    vals = [kn.mu_cap(0.5, t, n) for t in (0.7, 0.5, 0.2)]
    assert vals == sorted(vals)


def test_mu_h1_lower_formula_and_bound():
    assert kn.mu_h1_lower(1.0, 0.5, 2) == pytest.approx(0.5 / (2 * math.pi * 1.5))
    # a cap's harmonic measure dominates the measure-only bound for the same area
    theta = 0.7
    area = 2 * theta
    assert kn.mu_h1_lower(area, 0.5, 2) <= kn.mu_for_cap_angle(theta, 0.5, 2)
    with pytest.raises(ValueError):
        kn.mu_h1_lower(7.0, 0.5, 2)


def test_mu_h3_lower_in_range():
    v = kn.mu_h3_lower(0.5, 0.25, 0.5, 2, 1.0)
    assert 0 < v < 1
    assert kn.mu_h3_lower(1.0, 0.25, 0.5, 2, 1.0) == pytest.approx(2 * v)


def test_alpha_of():
    assert kn.alpha_of(0.75, 0.25) == pytest.approx(1.0)
    assert kn.alpha_of(0.5, 0.5) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        kn.alpha_of(0.0, 0.5)


def test_constant_chaser_example():
    beta, C = kn.constant_chaser(0.5, 0.5, 0.0, 1.0)
    assert beta == 0.5
    assert C == pytest.approx(0.5 / (math.sqrt(0.5) - 0.5), rel=1e-11)
    assert kn.chaser_lhs(0.5, 0.5, beta, C) <= 1.0


@settings(max_examples=200)
@given(st.floats(1e-4, 0.999), st.floats(1e-3, 0.99), st.floats(0.0, 100.0))
def test_constant_chaser_feasible(mu, tau1, c_aux):
    beta, C = kn.constant_chaser(mu, tau1, c_aux)
    assert 0 < beta < kn.alpha_of(mu, tau1)
    assert C >= 1.0
    assert kn.chaser_lhs(mu, tau1, beta, C, c_aux) <= 1.0


def test_constant_chaser_respects_cap():
    beta, _ = kn.constant_chaser(0.9, 0.5, 0.0, alpha_cap=0.4)
    assert beta == 0.2
    with pytest.raises(ValueError):
        kn.constant_chaser(0.5, 0.5, 0.0, alpha_cap=0.0)


def test_exponent_budget_conditions():
    b = kn.exponent_budget(0.3, 0.25, 0.5, 2)
    assert b.mu == kn.mu_cap(0.3, 0.5, 2)
    assert b.alpha == pytest.approx(math.log1p(-b.mu) / math.log(0.25))
    assert kn.chaser_lhs(b.mu, b.tau1, b.beta, b.C_hat) <= 1
    cap = kn.exponent_budget(0.5, 0.25, 0.5, 2, condition="cap", cap_angle=math.pi / 4)
    assert cap.mu == pytest.approx(kn.mu_for_cap_angle(math.pi / 4, 0.5, 2))
    # integrability caps beta: 2 - n/p = 0.4
    assert kn.exponent_budget(0.9, 0.25, 0.5, 2, condition="cap", cap_angle=3.0, p=1.25).beta == pytest.approx(0.2)
    assert kn.exponent_budget(0.5, 0.25, 0.5, 2, condition="h1").mu_source == "h1"
    assert kn.exponent_budget(0.5, 0.25, 0.5, 2, condition="h3", s=1.0).mu > 0
    d = b.to_dict()
    assert d["p"] == "inf" and d["mu"] == b.mu
    for kw in ({"condition": "h3"}, {"condition": "cap"}, {"condition": "x"}, {"p": 1.0}):
        with pytest.raises(ValueError):
            kn.exponent_budget(0.3, 0.25, 0.5, 2, **kw)


# ---------------------------------------------------------------------------
# fractional kernel and sampler
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("n,s,x", [(1, 1.0, [0.3]), (2, 1.0, [0.2, 0.1]), (2, 0.5, [0.0, -0.4]), (1, 1.5, [0.0])])
def test_fractional_kernel_normalized(n, s, x):
    assert exterior_integral(x, n, s) == pytest.approx(1.0, abs=1e-4)


def test_radial_cdf_matches_closed_form_for_cauchy():
    for rho in (1.01, 1.5, 3.0, 40.0):
        assert radial_cdf_quadrature(rho, 1.0) == pytest.approx(2 / math.pi * math.acos(1 / rho), abs=1e-10)


@pytest.mark.parametrize("n,s", [(1, 1.0), (2, 0.5), (3, 1.5)])
def test_centered_exit_radius_law(n, s):
    rng = _streams.generator(42, n)
    y = kn.sample_fractional_exit(np.zeros(n), 2.0, s, rng, size=20_000)
    w = (2.0 / np.linalg.norm(y, axis=1)) ** 2
    assert np.all(w < 1)
    # W = r^2/|Y|^2 is Beta(s/2, 1 - s/2): compare empirical quartiles with the CDF
    for q in (0.25, 0.5, 0.75):
        assert betainc(s / 2, 1 - s / 2, np.quantile(w, q)) == pytest.approx(q, abs=0.02)


def test_off_center_exit_mean_of_test_function():
    """E[h(Y)] for h = 1{|Y| > 3} against the kernel integral, started off center."""
    s = 1.0
    x = np.array([0.5, 0.0])
    rng = _streams.generator(5)
    y = kn.sample_fractional_exit(x, 1.0, s, rng, size=40_000)
    emp = np.mean(np.linalg.norm(y, axis=1) > 3)

    def angular(rho):
        val, _ = integrate.quad(
            lambda t: kn.fractional_poisson_kernel(x, np.array([rho * math.cos(t), rho * math.sin(t)]), 1.0, 2, s) * rho,
            0, 2 * math.pi, epsabs=1e-12,
        )
        return val

    exact, _ = integrate.quad(angular, 3.0, math.inf, epsabs=1e-10)
    assert abs(emp - exact) < 4 * math.sqrt(exact * (1 - exact) / 40_000)


def test_sampler_validation_and_centering():
    rng = _streams.generator(0)
    y = kn.sample_fractional_exit([2.0, 2.0], 0.5, 1.0, rng, size=100, center=[2.0, 2.0])
    assert np.all(np.linalg.norm(y - 2.0, axis=1) > 0.5)
    with pytest.raises(ValueError):
        kn.sample_fractional_exit([1.0, 0.0], 1.0, 1.0, rng)
    with pytest.raises(ValueError):
        kn.sample_fractional_exit([0.0, 0.0], 1.0, 2.0, rng)
    with pytest.raises(kn.RejectionCapExceeded):
        kn.sample_fractional_exit([0.9, 0.0], 1.0, 1.0, rng, size=10, max_rounds=0)


def test_fractional_kernel_rejects_sphere_points():
    with pytest.raises(ValueError):
        kn.fractional_poisson_kernel([0.0], [1.0], 1.0)


def test_fractional_kernel_cauchy_closed_form():
    for y in (1.5, -3.0, 10.0):
        expect = 1 / math.pi / math.sqrt(y * y - 1) / abs(y)
        assert kn.fractional_poisson_kernel([0.0], [y], 1.0, s=1.0) == pytest.approx(expect, rel=1e-14)


def test_fractional_kernel_scaling_and_rotation():
    x = np.array([0.2, -0.1, 0.3])
    y = np.array([1.4, 0.5, -0.9])
    k = kn.fractional_poisson_kernel(x, y, 1.0, s=0.7)
    assert kn.fractional_poisson_kernel(2 * x, 2 * y, 2.0, s=0.7) == pytest.approx(k / 8, rel=1e-13)
    q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(3, 3)))
    assert kn.fractional_poisson_kernel(q @ x, q @ y, 1.0, s=0.7) == pytest.approx(k, rel=1e-12)


def test_poisson_kernel_rotation_invariant():
    x = np.array([0.2, -0.1, 0.3])
    y = np.array([0.6, 0.0, 0.8])
    q, _ = np.linalg.qr(np.random.default_rng(2).normal(size=(3, 3)))
    assert kn.poisson_kernel(q @ x, q @ y) == pytest.approx(kn.poisson_kernel(x, y), rel=1e-12)


def test_centered_exit_far_indicator():
    """P(|Y| > 2r) from x = 0 in n = 2, s = 1 against quadrature of the kernel."""
    rng = _streams.generator(12)
    y = kn.sample_fractional_exit(np.zeros(2), 1.0, 1.0, rng, size=50_000)
    emp = np.mean(np.linalg.norm(y, axis=1) > 2)
    exact, _ = integrate.quad(
        lambda rho: 2 * math.pi * rho * kn.fractional_poisson_kernel([0.0, 0.0], [rho, 0.0], 1.0, s=1.0), 2, math.inf
    )
    assert abs(emp - exact) < 3 * math.sqrt(exact * (1 - exact) / 50_000)


def test_cap_measure_monotone_and_additive():
    x = np.array([0.3, -0.2, 0.1])
    axis = (1.0, 0.0, 0.0)
    vals = [kn.cap_harmonic_measure(x, kn.CapBoundaryData.indicator(t, axis)) for t in (0.4, 0.9, 1.7, 2.6)]
    assert vals == sorted(vals) and 0 <= vals[0] and vals[-1] <= 1
    # cap(0.9) = cap(0.4) + band(0.4, 0.9); the band is the difference of two complements
    band = kn.cap_harmonic_measure(x, kn.CapBoundaryData(axis, 0.4, 0.4, 0.0, 1.0)) - kn.cap_harmonic_measure(
        x, kn.CapBoundaryData(axis, 0.9, 0.9, 0.0, 1.0)
    )
    assert vals[0] + band == pytest.approx(vals[1], abs=1e-9)


@given(st.floats(1e-6, 0.999), st.floats(1e-3, 0.999))
def test_alpha_identity(mu, tau1):
    assert tau1 ** kn.alpha_of(mu, tau1) == pytest.approx(1 - mu, rel=1e-12)


def test_cap_measure_grows_toward_the_cap():
    cap = kn.CapBoundaryData.indicator(math.pi / 2, (1.0, 0.0, 0.0))
    center = kn.cap_harmonic_measure(np.zeros(3), cap)
    on_axis = kn.cap_harmonic_measure(np.array([0.5, 0.0, 0.0]), cap)
    assert on_axis > center == pytest.approx(0.5)
    # closed form on the axis for the hemisphere in n = 3: (1 + |x| - (1 - |x|^2)/sqrt(1 + |x|^2)) / 2 ... via MC
    rng = np.random.default_rng(0)
    y = rng.normal(size=(200_000, 3))
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    mc = np.mean(kn.poisson_kernel(np.array([0.5, 0, 0]), y) * (y[:, 0] >= 0)) * 4 * math.pi
    assert on_axis == pytest.approx(mc, abs=0.01)


def test_mu_cap_decreases_with_nu():
    vals = [kn.mu_cap(nu, 0.5, 3) for nu in (0.4, 0.2, 0.1)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_mu_h1_lower_examples():
    area = kn.sphere_area(3)
    assert kn.mu_h1_lower(area / 2, 0.5, 3) == pytest.approx(1 / 9)
    assert kn.mu_h1_lower(kn.sphere_area(2), 0.0, 2) == pytest.approx(1.0)


@pytest.mark.parametrize("n", [2, 3])
def test_mu_h1_lower_below_cap_minimum_on_grid(n):
    for theta in (0.3, 0.8, 1.5):
        area = kn.sphere_area(n) * cap_area_fraction(theta, n)
        for tau2 in (0.2, 0.5, 0.8):
            assert kn.mu_h1_lower(area, tau2, n) <= kn.mu_for_cap_angle(theta, tau2, n) + 1e-12


def test_alpha_of_examples():
    assert kn.alpha_of(0.75, 0.5) == pytest.approx(2.0)
    assert kn.alpha_of(1e-12, 0.5) < 1e-11


def test_constant_chaser_near_full_decay():
    beta, C = kn.constant_chaser(1 - 1e-9, 0.5, 0.0, alpha_cap=1.0)
    assert beta == 0.5 and math.isfinite(C)
