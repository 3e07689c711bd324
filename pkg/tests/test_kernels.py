import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlgeom import kernels


E1 = np.array([1.0, 0.0])


def test_ball_indicator_closed_form_moments():
    k = kernels.ball_indicator(2)
    m = kernels.moments(k)
    assert m.mass.finite
    assert m.mass.value == pytest.approx(math.pi, rel=1e-12)
    # half of the first absolute moment: (1/2) * 2*pi * int_0^1 r^2 dr
    assert m.first_moment_half.value == pytest.approx(math.pi / 3, rel=1e-12)
    assert m.radial_first_moment.value == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert m.second_moment.value == pytest.approx(math.pi / 2, rel=1e-12)
    assert m.hyperplane_second.value == pytest.approx(2.0 / 3.0, rel=1e-9)
    assert m.hyperplane_spread < 1e-9


def test_ball_indicator_3d_moments():
    k = kernels.ball_indicator(3)
    m = kernels.moments(k)
    assert m.mass.value == pytest.approx(4 * math.pi / 3, rel=1e-12)
    assert m.hyperplane_second.value == pytest.approx(math.pi / 2, rel=1e-9)


@pytest.mark.parametrize("sigma", [0.25, 0.5, 0.75])
def test_fractional_hyperplane_moment_matches_power_law(sigma):
    # kernel r^{-2-sigma} truncated at 1, d=2: the moment over a line
    # through the origin is 2/(1-sigma)
    k = kernels.fractional(2, sigma, 1.0)
    val = kernels.hyperplane_second_moment(k, E1)
    assert val == pytest.approx(2.0 / (1.0 - sigma), rel=1e-10)


def test_fractional_pointwise_values():
    k = kernels.fractional(2, 0.5, 1.0)
    assert kernels.evaluate(k, np.array([0.25, 0.0])) == pytest.approx(32.0)
    assert kernels.evaluate(k, np.array([2.0, 0.0])) == 0.0
    with pytest.raises(kernels.KernelDomainError):
        kernels.evaluate(k, np.zeros(2))


def test_untruncated_fractional_divergence_flags():
    k = kernels.fractional(2, 0.5, math.inf)
    m = kernels.moments(k)
    assert not m.mass.finite and math.isinf(float(m.mass))
    assert not m.first_moment.finite
    assert not m.second_moment.finite
    assert not m.hyperplane_second.finite


def test_gaussian_and_exponential_moments():
    g = kernels.gaussian(2)
    assert kernels.moments(g).mass.value == pytest.approx(math.pi, rel=1e-12)

    e = kernels.exponential_fractional(2, 0.5, 1.0)
    me = kernels.moments(e)
    assert not me.mass.finite  # r^{-2.5} at the origin is not integrable in d=2
    assert me.first_moment.value == pytest.approx(2 * math.pi * math.gamma(0.5), rel=1e-12)


def test_triangular_window_mass():
    k = kernels.triangular_window()
    assert kernels.moments(k).mass.value == pytest.approx(1.0, rel=1e-12)


def test_rescale_composes_exactly():
    k = kernels.fractional(2, 0.5, 1.0)
    a = kernels.rescale(kernels.rescale(k, 0.5), 0.25)
    b = kernels.rescale(k, 0.125)
    assert a.scale == b.scale
    z = np.array([0.03, -0.01])
    assert kernels.evaluate(a, z) == kernels.evaluate(b, z)


def test_rescale_pointwise_scaling():
    k = kernels.ball_indicator(2)
    ke = kernels.rescale(k, 0.5)
    # eps^-d * K(z/eps) with eps an exact binary float
    assert kernels.evaluate(ke, np.array([0.25, 0.0])) == 4.0
    assert ke.support_radius == 0.5
    with pytest.raises(kernels.KernelDomainError):
        kernels.rescale(k, 0.0)


@pytest.mark.parametrize("d", [2, 3])
def test_zgrid_antipodal_pairing_is_exact(d):
    k = kernels.ball_indicator(d)
    g = kernels.zgrid(k)
    assert np.array_equal(g.nodes[g.antipode], -g.nodes)
    assert np.array_equal(g.antipode[g.antipode], np.arange(len(g)))


@pytest.mark.parametrize("d,mass", [(2, math.pi), (3, 4 * math.pi / 3)])
def test_zgrid_quadrature_recovers_mass(d, mass):
    k = kernels.ball_indicator(d)
    g = kernels.zgrid(k)
    got = float(np.sum(g.weights * kernels.evaluate(k, g.nodes)))
    assert got == pytest.approx(mass, rel=1e-9)


def test_zgrid_needs_truncation():
    with pytest.raises(kernels.KernelDomainError):
        kernels.zgrid(kernels.fractional(2, 0.5, math.inf))


def test_hyperplane_moment_matrix_structure():
    k2 = kernels.ball_indicator(2)
    M = kernels.hyperplane_moment_matrix(k2, E1)
    expect = np.array([[0.0, 0.0], [0.0, 2.0 / 3.0]])
    assert np.allclose(M, expect, atol=1e-10)

    k3 = kernels.ball_indicator(3)
    e = np.array([0.0, 0.0, 1.0])
    M3 = kernels.hyperplane_moment_matrix(k3, e)
    kappa = kernels.hyperplane_second_moment(k3, e)
    expect3 = (kappa / 2) * (np.eye(3) - np.outer(e, e))
    assert np.allclose(M3, expect3, atol=1e-9)
    assert abs(np.trace(M3) - kappa) < 1e-9


def test_parabolic_mass_small_opening_matches_moment():
    # mass of { |z.e| <= lam |z_perp|^2 / 2 } divided by lam approaches the
    # hyperplane moment as the parabola flattens
    k = kernels.ball_indicator(2)
    kappa = kernels.hyperplane_second_moment(k, E1)
    lam = 0.01
    mass = kernels.parabolic_mass(k, E1, lam)
    assert mass / lam == pytest.approx(kappa, rel=1e-3)


def test_parabolic_mass_rejects_1d():
    with pytest.raises(kernels.KernelDomainError):
        kernels.parabolic_mass(kernels.triangular_window(), np.array([1.0]), 1.0)


def test_validate_summable_and_fast_decay():
    trunc = kernels.fractional(2, 0.5, 1.0)
    assert kernels.validate(trunc, "summK").passed
    assert kernels.validate(trunc, "fastK").passed

    untrunc = kernels.fractional(2, 0.5, math.inf)
    assert kernels.validate(untrunc, "summK").passed
    assert not kernels.validate(untrunc, "fastK").passed


@pytest.mark.parametrize(
    "factory",
    [
        lambda: kernels.ball_indicator(2),
        lambda: kernels.fractional(2, 0.5, 1.0),
        lambda: kernels.gaussian(2),
        lambda: kernels.exponential_fractional(2, 0.5, 1.0),
    ],
)
def test_validate_curvature_set(factory):
    report = kernels.validate(factory(), "curvature-set")
    assert report.passed, [c.name for c in report.checks if not c.passed]


def test_validate_unknown_set():
    with pytest.raises(ValueError):
        kernels.validate(kernels.ball_indicator(2), "no-such-set")


def test_constructor_argument_checks():
    with pytest.raises(kernels.KernelDomainError):
        kernels.fractional(2, 1.0, 1.0)  # sigma must stay below 1
    with pytest.raises(kernels.KernelDomainError):
        kernels.ball_indicator(2, radius=-1.0)
    with pytest.raises(kernels.KernelDomainError):
        kernels.gaussian(4)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(min_value=1e-6, max_value=2.0, allow_nan=False),
    st.floats(min_value=0.0, max_value=2 * math.pi, allow_nan=False),
)
def test_evaluate_is_even(r, theta):
    z = r * np.array([math.cos(theta), math.sin(theta)])
    k = kernels.fractional(2, 0.5, 1.5)
    assert kernels.evaluate(k, z) == kernels.evaluate(k, -z)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=0.01, max_value=10.0, allow_nan=False))
def test_rescale_keeps_first_moment_linear(eps):
    # the first absolute moment of the rescaled kernel is eps times the original
    k = kernels.ball_indicator(2)
    base = kernels.absolute_moment(k, 1)
    scaled = kernels.absolute_moment(kernels.rescale(k, eps), 1)
    assert scaled.value == pytest.approx(eps * base.value, rel=1e-12)
