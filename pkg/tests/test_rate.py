import math

import numpy as np
import pytest

from nlgeom import kernels, rate
from nlgeom.fields import Box, GridField
from nlgeom.rate import (
    Potential,
    Profile1D,
    RateDomainError,
    averaged_slope,
    e1d,
    e1d_limit,
    e1d_lower_bound,
    effective_kernel,
    rate_ddim,
    rate_limit_ddim,
    regularity_criterion,
    slicing_check,
)

QUAD = Potential.quadratic()
G_BALL = kernels.ball_indicator(d=2)


def parabola(n=1601):
    return Profile1D.from_function(lambda x: np.clip(1.0 - x * x, 0.0, None), (-1.0, 1.0), n)


def radial_bump(box):
    r2 = np.sum(box.centers() ** 2, axis=-1)
    vals = np.clip(1.0 - r2, 0.0, None) ** 2
    return GridField(box, vals.reshape(box.resolution), "phase")


@pytest.fixture(scope="module")
def bump64():
    return radial_bump(Box.cube(1.1, 64))


@pytest.fixture(scope="module")
def bump_sweep(bump64):
    """Rate values and spline-limit for the shared eps sweep."""
    eps = (0.2, 0.1, 0.05)
    vals = [rate_ddim(bump64, G_BALL, QUAD, e) for e in eps]
    return eps, vals, rate_limit_ddim(bump64, G_BALL, QUAD)


# ---------------------------------------------------------------------------
# potentials


def test_potential_requires_vanishing_value_and_slope_at_zero():
    with pytest.raises(RateDomainError):
        Potential(f=lambda t: np.asarray(t) ** 2 + 1.0, d2f=lambda t: np.full_like(t, 2.0))
    with pytest.raises(RateDomainError):
        Potential(f=np.abs, d2f=lambda t: np.zeros_like(t))


def test_potential_convexity_constant_is_checked():
    with pytest.raises(RateDomainError):
        Potential(f=lambda t: np.asarray(t) ** 2, d2f=lambda t: np.full_like(t, 2.0), alpha=3.0)
    soft = Potential.soft_quartic()
    assert soft.alpha == 2.0 and soft.c is None


# ---------------------------------------------------------------------------
# averaged slope


def test_averaged_slope_constant_window_inside():
    u = Profile1D((-1.0, 1.0), np.ones(41))
    assert averaged_slope(u, -0.3, 0.2) == pytest.approx(1.0, abs=1e-14)


def test_averaged_slope_affine_midpoint():
    u = Profile1D.from_function(lambda t: t, (0.0, 1.0), 201)
    assert averaged_slope(u, 0.2, 0.1) == pytest.approx(0.25, abs=1e-14)


def test_averaged_slope_outside_support():
    u = Profile1D((0.0, 1.0), np.linspace(0, 1, 33))
    assert averaged_slope(u, 2.5, 0.3) == 0.0
    with pytest.raises(RateDomainError):
        averaged_slope(u, 0.0, -0.1)


# ---------------------------------------------------------------------------
# 1D rate energy


def test_e1d_constant_profile_is_zero():
    u = Profile1D((-1.0, 1.0), np.zeros(512))
    assert e1d(u, QUAD, 0.05) == 0.0


def test_e1d_parabola_converges_to_limit():
    # E_0 = (1/12) int 4x^2 = 2/9 for f = t^2
    target = 2.0 / 9.0
    gaps = []
    for eps, n in ((1e-1, 801), (1e-2, 3201), (1e-3, 16001)):
        u = parabola(n)
        val = e1d(u, QUAD, eps)
        gaps.append(abs(val - target))
        # f'' = 2 upper bound: E_eps <= int |u'|^2 = 8/3
        assert val <= 8.0 / 3.0 + 1e-12
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[-1] < 0.02 * target


def test_e1d_rejects_coarse_sampling():
    with pytest.raises(RateDomainError):
        e1d(parabola(65), QUAD, 0.01)
    with pytest.raises(RateDomainError):
        e1d(parabola(), QUAD, 0.0)


def test_e1d_limit_closed_forms():
    assert e1d_limit(Profile1D((-1, 1), np.full(128, 0.7)), QUAD) == 0.0
    assert e1d_limit(parabola(6401), QUAD) == pytest.approx(2.0 / 9.0, rel=1e-3)


def test_e1d_limit_flags_jump_profile():
    vals = np.where(np.linspace(0, 1, 513) < 0.5, 0.0, 1.0)
    assert math.isinf(e1d_limit(Profile1D((0.0, 1.0), vals), QUAD))


def test_triangular_second_moment_constant():
    # the 1/24 in the limit density traces back to int_0^1 (r - 1/2)^2 dr
    x, w = np.polynomial.legendre.leggauss(8)
    nodes = 0.5 * (x + 1.0)
    val = 0.5 * np.sum(w * (nodes - 0.5) ** 2)
    assert val == pytest.approx(1.0 / 12.0, abs=1e-10)


def test_e1d_lower_bound_parabola():
    u = parabola()
    eps = 0.05
    val = e1d(u, QUAD, eps)
    bound = e1d_lower_bound(u, QUAD, eps)
    # for f = t^2 the bound is an identity, so only discretization noise
    # separates the two sides; slack is measured against the raw magnitude
    scale = np.trapezoid(QUAD.f(u.values), dx=u.spacing) / eps**2
    assert val >= bound - 1e-6 * scale
    assert bound > 0.9 * val


def test_e1d_lower_bound_requires_convexity_constant():
    flat = Potential(f=lambda t: np.asarray(t, dtype=float) ** 4,
                     d2f=lambda t: 12.0 * np.square(t))
    with pytest.raises(RateDomainError):
        e1d_lower_bound(parabola(), flat, 0.05)


def test_triangular_window_mass_is_one():
    for eps in (0.5, 0.05, 0.003):
        w = kernels.rescale(kernels.triangular_window(), eps)
        assert float(kernels.absolute_moment(w, 0.0)) == pytest.approx(1.0, abs=1e-10)


def test_random_profiles_nonnegative_and_above_lower_bound():
    rng = np.random.default_rng(0)
    eps = 0.02
    xx = np.linspace(-1.0, 1.0, 1601)
    for _ in range(100):
        coef = rng.normal(size=6) / np.arange(1, 7)
        vals = sum(c * np.sin(k * np.pi * (xx + 1) / 2) for k, c in enumerate(coef, 1))
        u = Profile1D((-1.0, 1.0), vals)
        val = e1d(u, QUAD, eps)
        scale = max(np.trapezoid(QUAD.f(u.values), dx=u.spacing) / eps**2, 1e-30)
        assert val >= -1e-9 * scale
        assert val >= e1d_lower_bound(u, QUAD, eps) - 1e-6 * scale


def test_e1d_gap_shrinks_for_smooth_profile():
    # C^2 profile: |E_eps - E_0| non-increasing along the sweep
    fn = lambda x: np.clip(1.0 - x * x, 0.0, None) ** 3
    gaps = []
    for eps, n in ((1e-1, 801), (1e-2, 3201), (1e-3, 16001)):
        u = Profile1D.from_function(fn, (-1.0, 1.0), n)
        gaps.append(abs(e1d(u, QUAD, eps) - e1d_limit(u, QUAD)))
    assert all(b <= a * 1.1 for a, b in zip(gaps, gaps[1:]))


# ---------------------------------------------------------------------------
# d-dimensional rate energy


def test_rate_ddim_constant_field_all_zero():
    for d, n in ((2, 32), (3, 12)):
        box = Box.cube(0.6, n, d=d)
        u = GridField(box, np.full(box.resolution, 0.4), "phase", outside=0.4)
        rv = rate_ddim(u, kernels.ball_indicator(d=d, radius=0.5), QUAD, 0.1,
                       n_angular=8 if d == 2 else (4, 8), order=4)
        assert rv.f_eps == 0.0 and rv.f_0 == 0.0 and rv.e_eps == 0.0


def test_rate_ddim_requires_flat_boundary():
    box = Box.cube(1.0, 32)
    ramp = GridField(box, box.centers()[..., 0].reshape(box.resolution), "level-set")
    with pytest.raises(RateDomainError):
        rate_ddim(ramp, G_BALL, QUAD, 0.1)


def test_rate_ddim_dimension_guard():
    box = Box((-1.0,), (2.0,), (64,))
    u = GridField(box, np.zeros(box.resolution), "phase")
    with pytest.raises(RateDomainError):
        rate_ddim(u, kernels.ball_indicator(d=2), QUAD, 0.1)


def test_rate_ddim_rotation_invariance(bump64):
    rot = GridField(bump64.box, np.rot90(bump64.values).copy(), "phase")
    a = rate_ddim(bump64, G_BALL, QUAD, 0.1)
    b = rate_ddim(rot, G_BALL, QUAD, 0.1)
    assert abs(a.e_eps - b.e_eps) <= 1e-8 * abs(a.e_eps)


def test_rate_ddim_converges_to_limit(bump_sweep):
    eps, vals, limit = bump_sweep
    gaps = [abs(v.e_eps - limit) for v in vals]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[-1] < 0.05 * limit


def test_rate_scaling_eps_times_energy_vanishes(bump_sweep):
    eps, vals, _ = bump_sweep
    prods = [e * v.e_eps for e, v in zip(eps, vals)]
    assert prods[0] > prods[1] > prods[2]
    # per halving the product contracts by a factor 2 up to the finite-eps
    # deficit of E_eps (which approaches its limit from below for f = t^2)
    assert prods[0] / prods[1] > 1.9
    assert prods[1] / prods[2] > 1.9


def test_rate_limit_affine_field_zero():
    box = Box.cube(1.0, 48)
    cc = box.centers()
    u = GridField(box, (0.3 * cc[..., 0] - 0.2 * cc[..., 1] + 0.5).reshape(box.resolution),
                  "level-set")
    assert abs(rate_limit_ddim(u, G_BALL, QUAD)) < 1e-10


def test_rate_limit_matches_closed_form(bump64):
    # exact continuum value for the bump: pi^2/3; the grid value carries the
    # interpolant's smoothing of the curvature jump at |x| = 1
    val = rate_limit_ddim(bump64, G_BALL, QUAD)
    assert val == pytest.approx(math.pi**2 / 3.0, rel=0.04)


def test_slicing_assembly_matches_direct(bump64):
    rep = slicing_check(bump64, G_BALL, QUAD, 0.1)
    assert rep.direct > 0 and rep.assembled > 0
    assert rep.rel_gap < 0.01


def test_slicing_requires_2d():
    box = Box.cube(0.5, 8, d=3)
    u = GridField(box, np.zeros(box.resolution), "phase")
    with pytest.raises(RateDomainError):
        slicing_check(u, kernels.ball_indicator(d=3), QUAD, 0.1)


# ---------------------------------------------------------------------------
# effective kernel


def test_effective_kernel_radius_factors():
    assert rate.EFFECTIVE_RADIUS_FACTOR == {2: 1.0, 3: 0.5}


@pytest.mark.parametrize("d", [2, 3])
def test_effective_kernel_positive_and_mass_preserving(d):
    G = kernels.annulus_indicator(d=d, r0=0.2, r1=1.0)
    Gt = effective_kernel(G)
    mass_in = float(kernels.absolute_moment(G, 0.0))
    mass_out = float(kernels.absolute_moment(Gt, 0.0))
    assert mass_out == pytest.approx(mass_in, rel=1e-3)

    beta = rate.EFFECTIVE_RADIUS_FACTOR[d]
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(1000, d))
    radii = 0.99 * beta * rng.random((1000, 1)) ** (1.0 / d)
    pts *= radii / np.linalg.norm(pts, axis=1, keepdims=True)
    assert kernels.evaluate(Gt, pts).min() > 0.0


def test_effective_kernel_needs_compact_support():
    with pytest.raises(RateDomainError):
        effective_kernel(kernels.fractional(2, 0.5, math.inf))


# ---------------------------------------------------------------------------
# regularity criterion


def test_regularity_smooth_field_within_bound(bump64):
    rep = regularity_criterion(bump64, G_BALL, QUAD, [0.1, 0.05], n_angular=32)
    assert rep.eps == (0.1, 0.05)
    assert rep.within_bound
    assert rep.growth_ratio < 1.2


def test_regularity_constant_field_trivial():
    box = Box.cube(1.0, 32)
    u = GridField(box, np.zeros(box.resolution), "phase")
    rep = regularity_criterion(u, G_BALL, QUAD, [0.1], n_angular=8)
    assert rep.e_eps == (0.0,) and rep.bound == 0.0
    assert rep.within_bound


def test_regularity_flags_gradient_kink():
    # tent profile in x1 under a smooth window in x2: Lipschitz but the
    # gradient jumps across three lines, so the energies grow as eps shrinks
    box = Box.cube(1.1, 192)
    cc = box.centers()
    vals = (np.clip(0.5 - np.abs(cc[..., 0]), 0.0, None)
            * np.clip(1.0 - (cc[..., 1] / 0.9) ** 2, 0.0, None) ** 2)
    u = GridField(box, vals.reshape(box.resolution), "phase")
    rep = regularity_criterion(u, G_BALL, QUAD, [0.1, 0.025], n_angular=16)
    assert rep.growth_ratio > 2.0


def test_regularity_needs_bounded_curvature():
    box = Box.cube(1.0, 32)
    u = GridField(box, np.zeros(box.resolution), "phase")
    with pytest.raises(RateDomainError):
        regularity_criterion(u, G_BALL, Potential.soft_quartic(), [0.1])
