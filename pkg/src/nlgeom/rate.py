"""Second-order rate energies for nonlocal-to-local approximation.

For a convex potential f, the defect between a local energy built from
slopes and its nonlocal counterpart built from averaged difference
quotients is nonnegative and of order eps^2.  This module computes the
rescaled defect (the rate energy), its local limit density f''(u)|u'|^2/24,
a triangular-window lower bound, and the d-dimensional versions coupled to
an even interaction kernel, together with the slice decomposition that
reduces the d-dimensional rate to a family of 1D ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage
from scipy.integrate import cumulative_trapezoid, simpson

from . import kernels
from .fields import GridField
from .kernels import Kernel


class RateDomainError(ValueError):
    pass


# ---------------------------------------------------------------------------
# potentials and 1D profiles


@dataclass(frozen=True)
class Potential:
    """Convex integrand together with its curvature data.

    ``alpha`` is a lower bound for f'' (0 when unknown), ``c`` an upper
    bound (None when f'' is unbounded); both are used by the bound
    operations, not by the energies themselves.
    """

    f: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray]
    alpha: float = 0.0
    c: float | None = None
    name: str = ""

    def __post_init__(self):
        if abs(float(self.f(0.0))) > 1e-12:
            raise RateDomainError("potential must vanish at 0")
        if abs(float(self.f(1e-6))) > 1e-11:
            raise RateDomainError("potential must have zero slope at 0")
        t = np.linspace(0.0, 2.0, 9)
        curv = np.asarray(self.d2f(t), dtype=float)
        if self.alpha > 0 and np.any(curv < self.alpha - 1e-9):
            raise RateDomainError("f'' drops below the declared convexity constant")
        if self.c is not None and np.any(curv > self.c + 1e-9):
            raise RateDomainError("f'' exceeds the declared upper bound")

    @staticmethod
    def quadratic() -> "Potential":
        return Potential(
            f=lambda t: np.square(t),
            d2f=lambda t: np.full_like(np.asarray(t, dtype=float), 2.0),
            alpha=2.0,
            c=2.0,
            name="t^2",
        )

    @staticmethod
    def soft_quartic() -> "Potential":
        # f'' = 2 + 3 t^2: strictly convex but with unbounded curvature
        return Potential(
            f=lambda t: np.square(t) + 0.25 * np.asarray(t, dtype=float) ** 4,
            d2f=lambda t: 2.0 + 3.0 * np.square(t),
            alpha=2.0,
            c=None,
            name="t^2 + t^4/4",
        )


class Profile1D:
    """Samples of a 1D profile on a uniform grid over [a, b], zero outside."""

    def __init__(self, interval, values):
        a, b = (float(v) for v in interval)
        if not a < b:
            raise RateDomainError("empty interval")
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 1 or len(vals) < 4:
            raise RateDomainError("need a 1D profile with at least 4 samples")
        self.interval = (a, b)
        self.values = vals
        self.grid = np.linspace(a, b, len(vals))
        self.spacing = (b - a) / (len(vals) - 1)

    @classmethod
    def from_function(cls, fn, interval, n: int) -> "Profile1D":
        a, b = interval
        t = np.linspace(a, b, n)
        return cls(interval, np.asarray(fn(t), dtype=float))

    def at(self, x) -> np.ndarray:
        """Piecewise-linear value, zero outside the interval."""
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.grid, self.values, left=0.0, right=0.0)
        a, b = self.interval
        return np.where((x < a) | (x > b), 0.0, out)

    def antiderivative(self, x) -> np.ndarray:
        """Exact running integral of the interpolant from -infinity to x."""
        return _running_integral(self.values[None, :], self.interval[0], self.spacing, np.asarray(x, dtype=float))[0]

    def derivative_values(self) -> np.ndarray:
        return np.gradient(self.values, self.spacing)

    def derivative_energy(self, stride: int = 1) -> float:
        v = self.values[::stride]
        h = self.spacing * stride
        return float(np.sum(np.diff(v) ** 2) / h)


def _running_integral(rows: np.ndarray, a: float, h: float, x: np.ndarray) -> np.ndarray:
    """Running integrals of piecewise-linear rows (m, n) at query points x (k,).

    Exact for the interpolant with zero extension; returns shape (m, k).
    """
    n = rows.shape[1]
    U = cumulative_trapezoid(rows, dx=h, axis=1, initial=0.0)
    b = a + (n - 1) * h
    idx = np.clip(((x - a) // h).astype(int), 0, n - 2)
    s = x - (a + idx * h)
    head = rows[:, idx]
    slope = (rows[:, idx + 1] - rows[:, idx]) / h
    part = U[:, idx] + head * s + 0.5 * slope * s * s
    part = np.where(x[None, :] <= a, 0.0, part)
    return np.where(x[None, :] >= b, U[:, -1:], part)


def _values_at(rows: np.ndarray, a: float, h: float, x: np.ndarray) -> np.ndarray:
    n = rows.shape[1]
    b = a + (n - 1) * h
    idx = np.clip(((x - a) // h).astype(int), 0, n - 2)
    s = (x - (a + idx * h)) / h
    vals = rows[:, idx] * (1.0 - s) + rows[:, idx + 1] * s
    return np.where((x[None, :] < a) | (x[None, :] > b), 0.0, vals)


def averaged_slope(u: Profile1D, x, eps: float):
    """Mean of u over the forward window (x, x + eps); exact for affine u."""
    if eps <= 0:
        raise RateDomainError("window width must be positive")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0
    xq = np.atleast_1d(x)
    out = (u.antiderivative(xq + eps) - u.antiderivative(xq)) / eps
    return float(out[0]) if single else out


def _e1d_rows(rows: np.ndarray, a: float, h: float, f: Potential, eps: float) -> np.ndarray:
    """Rate energies of profile rows sharing one grid; vectorized over rows."""
    n = rows.shape[1]
    b = a + (n - 1) * h
    # resolve both the eps-scale undulation of the window average and the
    # sub-eps kinks of the interpolant itself; sampling only at the profile
    # nodes inflates int f(u) by (dx^2/6) int |u'|^2, which the eps^{-2}
    # normalization then amplifies into a visible bias
    dx = min(eps / 16.0, h / 2.0)
    xs = np.arange(a - eps, b + dx, dx)
    u_x = _values_at(rows, a, h, xs)
    U_hi = _running_integral(rows, a, h, xs + eps)
    U_lo = _running_integral(rows, a, h, xs)
    slopes = (U_hi - U_lo) / eps
    integrand = f.f(u_x) - f.f(slopes)
    return simpson(integrand, dx=dx, axis=1) / (eps * eps)


def e1d(u: Profile1D, f: Potential, eps: float) -> float:
    """Rescaled defect between f of the profile and f of its window averages.

    Nonnegative for convex f by Jensen's inequality; second-order accurate,
    hence the eps^{-2} normalization converges.
    """
    if eps <= 0:
        raise RateDomainError("window width must be positive")
    if u.spacing > eps / 8.0:
        raise RateDomainError(
            f"profile spacing {u.spacing:.3g} too coarse for eps={eps:.3g}; need <= eps/8"
        )
    return float(_e1d_rows(u.values[None, :], u.interval[0], u.spacing, f, eps)[0])


def e1d_limit(u: Profile1D, f: Potential) -> float:
    """Pointwise limit density: (1/24) integral of f''(u) |u'|^2.

    Returns inf when the discrete derivative energy keeps growing under
    coarsening reversal (profile not in H^1, e.g. a step).
    """
    e_fine = u.derivative_energy(1)
    e_mid = u.derivative_energy(2)
    if e_fine > 1e-12 and e_fine > 1.9 * e_mid:
        return math.inf
    v = u.derivative_values()
    dens = f.d2f(u.values) * v * v
    return float(np.trapezoid(dens, dx=u.spacing)) / 24.0


def e1d_lower_bound(u: Profile1D, f: Potential, eps: float) -> float:
    """Triangular-window lower bound (alpha/4) iint H_eps(r) ((u(y+r)-u(y))/eps)^2.

    H is the unit triangle (1-|r|)+ scaled to a probability density of width
    eps; requires a positive convexity constant on the potential.
    """
    if f.alpha <= 0:
        raise RateDomainError("lower bound needs a potential with alpha > 0")
    if eps <= 0:
        raise RateDomainError("window width must be positive")
    window = kernels.rescale(kernels.triangular_window(), eps)
    gl_x, gl_w = np.polynomial.legendre.leggauss(16)
    r_half = 0.5 * eps * (gl_x + 1.0)          # nodes in (0, eps)
    w_half = 0.5 * eps * gl_w
    r_nodes = np.concatenate([-r_half[::-1], r_half])
    r_w = np.concatenate([w_half[::-1], w_half])
    h_vals = kernels.evaluate(window, r_nodes[:, None])

    a, b = u.interval
    dy = eps / 16.0
    ys = np.arange(a - eps, b + eps + dy, dy)
    u_y = u.at(ys)
    acc = 0.0
    for r, w, hv in zip(r_nodes, r_w, h_vals):
        diff = (u.at(ys + r) - u_y) / eps
        acc += w * hv * np.trapezoid(diff * diff, dx=dy)
    return 0.25 * f.alpha * float(acc)


# ---------------------------------------------------------------------------
# d-dimensional rate energies


@dataclass(frozen=True)
class RateValue:
    eps: float
    f_eps: float
    f_0: float

    @property
    def e_eps(self) -> float:
        return (self.f_0 - self.f_eps) / (self.eps * self.eps)


def _check_flat_outside(u: GridField) -> None:
    vals = u.values
    scale = max(float(np.ptp(vals)), 1e-30)
    ring = []
    for axis in range(vals.ndim):
        ring.append(np.take(vals, 0, axis=axis).ravel())
        ring.append(np.take(vals, -1, axis=axis).ravel())
    gap = float(np.max(np.abs(np.concatenate(ring) - u.outside)))
    if gap > 1e-9 * scale:
        raise RateDomainError(
            "the field must match its constant extension on the window boundary "
            f"(max boundary gap {gap:.3g})"
        )


def _expanded_centers(u: GridField, margin: float) -> tuple[np.ndarray, tuple]:
    h = u.spacing
    pads = [int(math.ceil(margin / h[i])) for i in range(u.d)]
    axes = []
    for i in range(u.d):
        n = u.box.resolution[i] + 2 * pads[i]
        axes.append(u.box.origin[i] - pads[i] * h[i] + h[i] * (np.arange(n) + 0.5))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    return pts.reshape(-1, u.d), pts.shape[:-1]


def _z_nodes(G: Kernel, r_lo_frac: float, n_angular, panels_per_decade, order):
    r_eff = G.effective_radius()
    if not math.isfinite(r_eff):
        raise RateDomainError("kernel needs a bounded quadrature window")
    rs, ws = kernels.radial_rule(G, r_lo_frac * r_eff, r_eff, panels_per_decade, order)
    dirs, wa = kernels.angular_rule(G.d, n_angular)
    return rs, ws, dirs, wa


class _SplineSampler:
    """Cubic-spline view of a grid field, constant outside the window.

    The multilinear interpolant has gradient jumps across every cell face,
    which a second-order defect quotient picks up as a spurious O(h/eps)
    contribution; a C^2 interpolant does not.  The values are padded with
    the outside constant, prefiltered once, and evaluated through
    ``map_coordinates`` with ``prefilter=False``.  Queries must stay within
    ``margin`` of the window (the pad keeps them clear of the stencil edge).
    """

    def __init__(self, u: GridField, margin: float):
        h = u.spacing
        pads = tuple(int(math.ceil(margin / h[i])) + 4 for i in range(u.d))
        padded = np.pad(u.values, [(p, p) for p in pads], constant_values=u.outside)
        self._coeffs = ndimage.spline_filter(padded, order=3, mode="nearest")
        self._origin = np.asarray(u.box.origin, dtype=float) - np.asarray(pads) * h
        self._h = h

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        coords = (pts - self._origin) / self._h - 0.5
        return ndimage.map_coordinates(
            self._coeffs, np.moveaxis(coords, -1, 0), order=3, prefilter=False, mode="nearest"
        )


def _x_quadrature(u: GridField, margin: float, oversample: int):
    """Product-Gauss nodes and weights for the x-integral, cell by cell.

    ``oversample=1`` is the plain cell-center sum; higher orders resolve
    sub-cell structure (needed when the field has gradient kinks, whose
    defect density varies on the cell scale).
    """
    pts, _ = _expanded_centers(u, margin)
    cell = float(np.prod(u.spacing))
    if oversample <= 1:
        return pts, np.full(len(pts), cell)
    g, gw = np.polynomial.legendre.leggauss(oversample)
    axes_off = [0.5 * u.spacing[i] * g for i in range(u.d)]
    offs = np.stack(np.meshgrid(*axes_off, indexing="ij"), axis=-1).reshape(-1, u.d)
    axes_w = np.meshgrid(*([0.5 * gw] * u.d), indexing="ij")
    sub_w = np.prod(np.stack(axes_w, axis=0), axis=0).reshape(-1)
    full = (pts[:, None, :] + offs[None, :, :]).reshape(-1, u.d)
    return full, np.tile(sub_w * cell, len(pts))


def rate_ddim(
    u: GridField,
    G: Kernel,
    f: Potential,
    eps: float,
    r_lo_frac: float = 1e-2,
    n_angular=None,
    panels_per_decade: float = 2.0,
    order: int = 6,
    x_oversample: int = 2,
) -> RateValue:
    """Kernel-weighted rate energy on a grid field.

    F_eps integrates f of the averaged difference quotient |u(x+eps z)-u(x)|
    /(eps|z|) against G(z); F_0 replaces the quotient by the directional
    slope |grad u . z_hat|.  The rate is (F_0 - F_eps)/eps^2, nonnegative for
    convex f.  Both terms sample one cubic-spline interpolant on one grid --
    the slope through a tiny symmetric probe -- so their discretization
    errors cancel in the difference instead of swamping the O(eps^2) defect.
    The field must agree with its constant extension on the window boundary
    so all differences vanish far away.
    """
    if u.d not in (2, 3):
        raise RateDomainError("grid rate energies support d in {2, 3}")
    if eps <= 0:
        raise RateDomainError("eps must be positive")
    _check_flat_outside(u)
    if np.ptp(u.values) == 0.0:
        # identically the extension constant: every difference vanishes
        return RateValue(eps, 0.0, 0.0)
    rs, ws, dirs, wa = _z_nodes(G, r_lo_frac, n_angular, panels_per_decade, order)
    kv = G.profile_at(rs)
    delta = 1e-3 * float(np.min(u.spacing))

    reach = eps * float(rs.max())
    spl = _SplineSampler(u, 2.0 * reach + delta)
    pts, xw = _x_quadrature(u, reach, x_oversample)
    u_x = spl(pts)
    radial_w = ws * rs ** (u.d - 1) * kv
    radial_total = float(np.sum(radial_w))

    f_0 = 0.0
    f_eps = 0.0
    for d_hat, w_ang in zip(dirs, wa):
        probe = np.abs(spl(pts + delta * d_hat) - spl(pts - delta * d_hat)) / (2.0 * delta)
        f_0 += radial_total * w_ang * float(np.sum(f.f(probe) * xw))
        shifted = spl(pts[None, :, :] + (eps * rs)[:, None, None] * d_hat)
        quot = np.abs(shifted - u_x[None, :]) / (eps * rs)[:, None]
        f_eps += w_ang * float(np.sum(radial_w[:, None] * f.f(quot) * xw[None, :]))
    return RateValue(eps, f_eps, f_0)


def rate_limit_ddim(
    u: GridField,
    G: Kernel,
    f: Potential,
    r_lo_frac: float = 1e-2,
    n_angular=None,
    panels_per_decade: float = 2.0,
    order: int = 6,
    x_oversample: int = 2,
) -> float:
    """Limit of the grid rate energies:

        (1/24) iint G(z) |z|^2 f''(|grad u . z_hat|) (z_hat^T hess u z_hat)^2.

    Directional slope and bend come from symmetric probes of the same
    cubic-spline interpolant the rate energies sample, so the two converge
    to a common value as eps shrinks.  The values are extended by odd
    reflection before prefiltering, which keeps affine trends exact right
    up to the window edge (an affine field reports 0).
    """
    if u.d not in (2, 3):
        raise RateDomainError("grid rate energies support d in {2, 3}")
    rs, ws, dirs, wa = _z_nodes(G, r_lo_frac, n_angular, panels_per_decade, order)
    kv = G.profile_at(rs)
    second_moment = float(np.sum(ws * rs ** (u.d + 1) * kv))

    pad = 12
    padded = np.pad(u.values, pad, mode="reflect", reflect_type="odd")
    coeffs = ndimage.spline_filter(padded, order=3, mode="nearest")
    origin = np.asarray(u.box.origin, dtype=float) - pad * u.spacing

    def sample(pts):
        coords = (pts - origin) / u.spacing - 0.5
        return ndimage.map_coordinates(
            coeffs, np.moveaxis(coords, -1, 0), order=3, prefilter=False, mode="nearest"
        )

    pts, xw = _x_quadrature(u, 0.0, x_oversample)
    delta = 1e-2 * float(np.min(u.spacing))
    u_x = sample(pts)
    acc = 0.0
    for d_hat, w_ang in zip(dirs, wa):
        plus = sample(pts + delta * d_hat)
        minus = sample(pts - delta * d_hat)
        slope = np.abs(plus - minus) / (2.0 * delta)
        bend = (plus - 2.0 * u_x + minus) / (delta * delta)
        acc += w_ang * float(np.sum(f.d2f(slope) * bend * bend * xw))
    return second_moment * acc / 24.0


@dataclass(frozen=True)
class SlicingReport:
    eps: float
    direct: float
    assembled: float

    @property
    def rel_gap(self) -> float:
        return abs(self.direct - self.assembled) / max(abs(self.direct), 1e-300)


def slicing_check(
    u: GridField,
    G: Kernel,
    f: Potential,
    eps: float,
    n_angular: int = 16,
    r_lo: float = 0.25,
    order: int = 6,
) -> SlicingReport:
    """Cross-check: the grid rate energy equals its line-slice assembly.

    Both sides share one z-quadrature (radius x direction product).  The
    direct side evaluates the defect integrand on the grid; the assembled
    side extracts 1D profiles of the directional derivative along lines,
    feeds them through the 1D rate energy at width eps*|z|, and recombines
    with weight G(z)|z|^2.
    """
    if u.d != 2:
        raise RateDomainError("the slice assembly cross-check runs in d=2")
    _check_flat_outside(u)
    r_eff = G.effective_radius()
    rs, ws = kernels.gauss_log_panels(r_lo * r_eff, r_eff, 4.0, order)
    dirs, wa = kernels.angular_rule(2, n_angular)
    kv = G.profile_at(rs)
    cell = float(np.prod(u.spacing))
    h = float(np.min(u.spacing))
    delta = 1e-3 * h

    center = np.asarray(u.box.origin) + 0.5 * np.asarray(u.box.size)
    half_diag = 0.5 * float(np.linalg.norm(u.box.size))
    # one interpolant serves both sides; lines overshoot the window corners
    spl = _SplineSampler(u, 2.0 * half_diag + eps * r_eff + delta)

    pts, _ = _expanded_centers(u, eps * r_eff)
    u_x = spl(pts)
    radial_w = ws * rs * kv

    direct = 0.0
    for d_hat, w_ang in zip(dirs, wa):
        probe = np.abs(spl(pts + delta * d_hat) - spl(pts - delta * d_hat)) / (2.0 * delta)
        base = float(np.sum(f.f(probe)))
        shifted = spl(pts[None, :, :] + (eps * rs)[:, None, None] * d_hat)
        quot = np.abs(shifted - u_x[None, :]) / (eps * rs)[:, None]
        per_radius = base - np.sum(f.f(quot), axis=1)
        direct += w_ang * float(np.sum(radial_w * per_radius)) * cell
    direct /= eps * eps

    # slice assembly: one batch of lines per direction, reused for all radii
    assembled = 0.0
    half = len(dirs) // 2
    dt = eps * rs.min() / 8.0
    for d_hat, w_ang in zip(dirs[:half], wa[:half]):
        perp = np.array([-d_hat[1], d_hat[0]])
        xi = np.arange(-half_diag, half_diag + h, h)
        t_lo = -(half_diag + eps * r_eff)
        t = np.arange(t_lo, -t_lo + dt, dt)
        line_pts = (
            center[None, None, :]
            + xi[:, None, None] * perp[None, None, :]
            + t[None, :, None] * d_hat[None, None, :]
        )
        v = (spl(line_pts + delta * d_hat) - spl(line_pts - delta * d_hat)) / (2.0 * delta)
        for r, wr in zip(rs, radial_w):
            energies = _e1d_rows(v, t_lo, dt, f, eps * r)
            assembled += wr * (2.0 * w_ang) * (r * r) * float(np.sum(energies)) * h
    return SlicingReport(eps, direct, assembled)


# ---------------------------------------------------------------------------
# effective kernel of the window average


EFFECTIVE_RADIUS_FACTOR = {2: 1.0, 3: 0.5}


def effective_kernel(G: Kernel, order: int = 48) -> Kernel:
    """Triangle-window average of the mass-preserving rescales of G.

    The result integrates G_t(z) = t^{-d} G(z/t) against the unit triangle
    weight in t; it keeps the total mass of G and is strictly positive on a
    ball whose radius is a known dimensional fraction of the support of G.
    """
    r1 = G.effective_radius()
    if not math.isfinite(r1):
        raise RateDomainError("effective kernel needs a compactly supported input")
    d = G.d
    r0 = G.r0 if G.r0 > 0 else 0.0
    gl_x, gl_w = np.polynomial.legendre.leggauss(order)

    def profile(rho):
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        lo = np.maximum(rho / r1, 1e-12)
        hi = np.minimum(rho / r0, 1.0) if r0 > 0 else np.ones_like(rho)
        out = np.zeros_like(rho)
        ok = lo < hi
        if np.any(ok):
            llo, lhi = np.log(lo[ok]), np.log(hi[ok])
            mid = 0.5 * (llo + lhi)[:, None] + 0.5 * (lhi - llo)[:, None] * gl_x[None, :]
            r = np.exp(mid)
            wq = 0.5 * (lhi - llo)[:, None] * gl_w[None, :] * r
            vals = 2.0 * (1.0 - r) * r ** (-d) * G.profile_at(rho[ok, None] / r)
            out[ok] = np.sum(wq * vals, axis=1)
        return out if out.shape else float(out)

    return kernels.custom_radial(profile, d=d, r_max=r1, sigma=0.0)


# ---------------------------------------------------------------------------
# regularity criterion


@dataclass(frozen=True)
class RegularityReport:
    eps: tuple
    e_eps: tuple
    bound: float

    @property
    def within_bound(self) -> bool:
        return max(self.e_eps) <= self.bound * (1.0 + 1e-9)

    @property
    def growth_ratio(self) -> float:
        return self.e_eps[-1] / max(self.e_eps[0], 1e-300)


def regularity_criterion(
    u: GridField, G: Kernel, f: Potential, eps_list: Sequence[float], **rate_kwargs
) -> RegularityReport:
    """Rate energies against the curvature-capped upper bound.

    The bound (c/2) (int G|z|^2) (int |hess u|^2) is finite exactly when the
    field has square-integrable second differences; rate energies staying
    below it indicate that regularity, while growth under eps-refinement
    (large ``growth_ratio``) flags a gradient kink.
    """
    if f.c is None:
        raise RateDomainError("regularity criterion needs a potential with bounded f''")
    eps_sorted = tuple(sorted((float(e) for e in eps_list), reverse=True))
    rate_kwargs.setdefault("x_oversample", 2)
    values = tuple(rate_ddim(u, G, f, e, **rate_kwargs).e_eps for e in eps_sorted)

    h = u.spacing
    grad = np.gradient(u.values, *h)
    core = (slice(2, -2),) * u.d
    hess_sq = sum(
        np.gradient(grad[i], h[j], axis=j)[core] ** 2
        for i in range(u.d)
        for j in range(u.d)
    )
    hess_energy = float(np.sum(hess_sq)) * float(np.prod(h))
    bound = 0.5 * f.c * kernels.absolute_moment(G, 2.0).value * hess_energy
    return RegularityReport(eps_sorted, values, bound)
