"""Radial interaction kernels: evaluation, rescaling, moments, assumption checks.

Every built-in kernel is radial, even, and nonnegative.  A kernel is an
immutable description (family tag plus parameters); evaluation and quadrature
never mutate it, so instances can be shared freely across worker processes.

Quadrature conventions
----------------------
Radial integrals use composite Gauss-Legendre panels in log-radius between
profile breakpoints, which resolves both power-law singularities at the
origin and sharp cutoff radii.  Full-dimension node sets (:func:`zgrid`)
combine the radial rule with angular rules chosen so that every node has its
exact antipode on the grid; several callers pair nodes with their antipodes
to cancel odd integrands exactly, so do not break this symmetry.

Divergent moments are detected analytically from the family's origin and
tail exponents and reported with an explicit ``finite=False`` flag rather
than a sentinel number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, special

FAMILIES = (
    "ball-indicator",
    "annulus-indicator",
    "fractional-truncated",
    "gaussian",
    "exponential-fractional",
    "custom-radial-profile",
)

#: surface measure of the unit sphere S^{d-1} for d = 1, 2, 3
SPHERE_SURFACE = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}

_DEF_GL_ORDER = 8
_DEF_PANELS_PER_DECADE = 3
_DEF_ANGULAR = {1: 2, 2: 64, 3: (16, 32)}  # d=3: (polar GL, azimuth trapezoid)
_RMIN_FACTOR = 1e-6


class KernelDomainError(ValueError):
    """Raised for evaluations or rescalings outside a kernel's domain."""


# --------------------------------------------------------------------------
# kernel description


@dataclass(frozen=True)
class Kernel:
    """Immutable description of a radial interaction weight.

    The evaluation rule is ``K(z) = amplitude * scale**(-d) * base(|z|/scale)``
    where ``base`` is the family's unit-scale radial profile.  ``scale`` is the
    concentration parameter touched by :func:`rescale`; composing rescales
    multiplies scales exactly, so rescale(rescale(k, a), b) == rescale(k, a*b).

    Parameters
    ----------
    family:
        One of :data:`FAMILIES`.
    d:
        Ambient dimension, 1, 2 or 3.
    sigma:
        Origin singularity exponent: profile ~ r**(-d-sigma) near 0.
        Zero for bounded families.
    s:
        Tail decay exponent used by the fractional-decay check.
    r0, r1:
        Inner/outer cutoff radii of the unit-scale profile.  ``r1`` may be
        ``math.inf`` for the untruncated power law (useful to exercise the
        divergence flags).
    amplitude:
        Nonnegative multiplier.
    scale:
        Concentration scale; see above.
    profile:
        Unit-scale radial profile for the custom family, ignored otherwise.
        Must accept and return numpy arrays.
    """

    family: str
    d: int
    sigma: float = 0.0
    s: float = 0.5
    r0: float = 0.0
    r1: float = 1.0
    amplitude: float = 1.0
    scale: float = 1.0
    profile: Callable[[np.ndarray], np.ndarray] | None = field(
        default=None, compare=False
    )

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KernelDomainError(f"unknown kernel family {self.family!r}")
        if self.d not in (1, 2, 3):
            raise KernelDomainError("dimension must be 1, 2 or 3")
        if not 0.0 <= self.sigma < 1.0:
            raise KernelDomainError("origin exponent must lie in [0, 1)")
        if self.s <= 0.0:
            raise KernelDomainError("tail exponent must be positive")
        if self.r0 < 0.0 or self.r1 <= 0.0 or self.r1 <= self.r0:
            raise KernelDomainError("need 0 <= r0 < r1")
        if self.amplitude < 0.0:
            raise KernelDomainError("amplitude must be nonnegative")
        if self.scale <= 0.0 or not math.isfinite(self.scale):
            raise KernelDomainError("scale must be positive and finite")
        if self.family == "custom-radial-profile":
            if self.profile is None:
                raise KernelDomainError("custom family requires a profile")
            if not math.isfinite(self.r1):
                raise KernelDomainError("custom profiles must be truncated")
        if math.isinf(self.r1) and self.family != "fractional-truncated":
            raise KernelDomainError("only the power-law family may be untruncated")

    # -- structural metadata ------------------------------------------------

    @property
    def radial(self) -> bool:
        return True  # every supported family is radial

    @property
    def singular(self) -> bool:
        """True when K blows up at the origin."""
        return self.sigma > 0.0 and self.family in (
            "fractional-truncated",
            "exponential-fractional",
            "custom-radial-profile",
        ) and self.r0 == 0.0

    @property
    def compact_support(self) -> bool:
        return self.family in (
            "ball-indicator",
            "annulus-indicator",
            "custom-radial-profile",
        ) or (self.family == "fractional-truncated" and math.isfinite(self.r1))

    @property
    def support_radius(self) -> float:
        """Radius beyond which K vanishes identically (inf if never)."""
        if self.compact_support:
            return self.r1 * self.scale
        return math.inf

    def effective_radius(self, tol: float = 1e-16) -> float:
        """Radius capturing the profile up to a ``tol`` pointwise cutoff."""
        if self.compact_support:
            return self.support_radius
        if self.family == "gaussian":
            return self.r1 * self.scale * math.sqrt(-math.log(tol))
        if self.family == "exponential-fractional":
            return self.r1 * self.scale * (-math.log(tol))
        return self.r1 * self.scale  # untruncated power law: caller truncates

    def breakpoints(self) -> list[float]:
        """Radii where the radial profile is not smooth (scaled units)."""
        pts = []
        if self.family == "annulus-indicator" and self.r0 > 0.0:
            pts.append(self.r0 * self.scale)
        if self.compact_support:
            pts.append(self.r1 * self.scale)
        return pts

    def quadrature_rmin(self) -> float:
        """Default inner radius for full-dimension quadrature grids."""
        return _RMIN_FACTOR * max(self.effective_radius(), self.scale)

    # -- evaluation ---------------------------------------------------------

    def _base(self, u: np.ndarray) -> np.ndarray:
        """Unit-scale radial profile at radii ``u >= 0``."""
        fam = self.family
        if fam == "ball-indicator":
            return (u <= self.r1).astype(float)
        if fam == "annulus-indicator":
            return ((u >= self.r0) & (u <= self.r1)).astype(float)
        if fam == "fractional-truncated":
            with np.errstate(divide="ignore"):
                vals = np.where(u > 0.0, u, 1.0) ** (-self.d - self.sigma)
            vals = np.where(u > 0.0, vals, np.inf)
            if math.isfinite(self.r1):
                vals = np.where(u <= self.r1, vals, 0.0)
            return vals
        if fam == "gaussian":
            return np.exp(-((u / self.r1) ** 2))
        if fam == "exponential-fractional":
            with np.errstate(divide="ignore"):
                vals = np.where(u > 0.0, u, 1.0) ** (-self.d - self.sigma)
            vals = np.where(u > 0.0, vals, np.inf)
            return vals * np.exp(-u / self.r1)
        # custom
        vals = np.asarray(self.profile(np.asarray(u, dtype=float)), dtype=float)
        return np.where(u <= self.r1, vals, 0.0)

    def profile_at(self, r) -> np.ndarray:
        """Radial profile K̄(r) of the (scaled) kernel at radii ``r``."""
        r = np.asarray(r, dtype=float)
        pref = self.amplitude * self.scale ** (-self.d)
        return pref * self._base(r / self.scale)

    def eval(self, z) -> np.ndarray:
        """Evaluate K at points ``z`` of shape (..., d) or (d,)."""
        return evaluate(self, z)

    def origin_exponent(self) -> float:
        """p such that K̄(r) ~ r**(-p) as r -> 0 (0 for bounded kernels)."""
        return (self.d + self.sigma) if self.singular else 0.0


def evaluate(kernel: Kernel, z) -> np.ndarray:
    """Pointwise kernel weight K(z); exactly even in z for all families."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != kernel.d:
        raise KernelDomainError(
            f"points have dimension {z.shape[-1]}, kernel has d={kernel.d}"
        )
    r = np.sqrt(np.sum(z * z, axis=-1))
    if kernel.singular and np.any(r == 0.0):
        raise KernelDomainError("kernel is singular at the origin; got z = 0")
    return kernel.profile_at(r)


def rescale(kernel: Kernel, eps: float) -> Kernel:
    """Concentrated copy K_eps(z) = eps**(-d) K(z/eps).

    Mass-preserving for integrable kernels; composes exactly:
    ``rescale(rescale(k, a), b)`` evaluates identically to ``rescale(k, a*b)``.
    """
    if not (eps > 0.0) or not math.isfinite(eps):
        raise KernelDomainError(f"rescale needs eps > 0, got {eps}")
    return replace(kernel, scale=kernel.scale * eps)


# --------------------------------------------------------------------------
# constructors for the built-in families


def ball_indicator(d: int = 2, radius: float = 1.0, amplitude: float = 1.0) -> Kernel:
    return Kernel("ball-indicator", d, r1=radius, amplitude=amplitude)


def annulus_indicator(
    d: int = 2, r0: float = 0.2, r1: float = 1.0, amplitude: float = 1.0
) -> Kernel:
    return Kernel("annulus-indicator", d, r0=r0, r1=r1, amplitude=amplitude)


def fractional(
    d: int = 2,
    sigma: float = 0.5,
    radius: float = 1.0,
    s: float | None = None,
    amplitude: float = 1.0,
) -> Kernel:
    """Truncated power law r**(-d-sigma); ``radius=math.inf`` removes the cutoff."""
    return Kernel(
        "fractional-truncated",
        d,
        sigma=sigma,
        s=sigma if s is None else s,
        r1=radius,
        amplitude=amplitude,
    )


def gaussian(d: int = 2, width: float = 1.0, amplitude: float = 1.0) -> Kernel:
    return Kernel("gaussian", d, r1=width, amplitude=amplitude)


def exponential_fractional(
    d: int = 2, sigma: float = 0.5, decay_length: float = 1.0, amplitude: float = 1.0
) -> Kernel:
    return Kernel(
        "exponential-fractional", d, sigma=sigma, r1=decay_length, amplitude=amplitude
    )


def custom_radial(
    profile: Callable[[np.ndarray], np.ndarray],
    d: int,
    r_max: float,
    sigma: float = 0.0,
    amplitude: float = 1.0,
) -> Kernel:
    """Custom radial profile truncated at ``r_max``.

    The truncation is explicit: moment reports carry a note with the cutoff
    radius and the profile value there, so the dropped tail is never silent.
    ``sigma`` declares the origin exponent when the profile is singular.
    """
    return Kernel(
        "custom-radial-profile",
        d,
        sigma=sigma,
        r1=r_max,
        amplitude=amplitude,
        profile=profile,
    )


def triangular_window() -> Kernel:
    """1D triangle (1 - |r|)+ — the averaging window of the rate bounds."""
    return custom_radial(lambda r: np.clip(1.0 - r, 0.0, None), d=1, r_max=1.0)


# --------------------------------------------------------------------------
# radial quadrature building blocks


def gauss_log_panels(
    r_lo: float,
    r_hi: float,
    panels_per_decade: float = _DEF_PANELS_PER_DECADE,
    order: int = _DEF_GL_ORDER,
    min_panels: int = 2,
) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for ∫_{r_lo}^{r_hi} g(r) dr, Gauss-Legendre in log r.

    Accurate to near machine precision for power laws and other profiles that
    are smooth in log-radius.
    """
    if not (0.0 < r_lo < r_hi):
        raise ValueError("need 0 < r_lo < r_hi")
    span = math.log(r_hi / r_lo)
    n_panels = max(min_panels, math.ceil(span / math.log(10.0) * panels_per_decade))
    x, w = leggauss(order)
    edges = np.linspace(math.log(r_lo), math.log(r_hi), n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    u = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wu = (half[:, None] * w[None, :]).ravel()
    r = np.exp(u)
    return r, wu * r  # substitution r = e^u brings a factor r


def radial_rule(
    kernel: Kernel,
    r_lo: float,
    r_hi: float,
    panels_per_decade: float = _DEF_PANELS_PER_DECADE,
    order: int = _DEF_GL_ORDER,
) -> tuple[np.ndarray, np.ndarray]:
    """Log-Gauss radial rule on [r_lo, r_hi] split at profile breakpoints."""
    cuts = sorted({r_lo, r_hi} | {b for b in kernel.breakpoints() if r_lo < b < r_hi})
    rs, ws = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        r, w = gauss_log_panels(lo, hi, panels_per_decade, order)
        rs.append(r)
        ws.append(w)
    return np.concatenate(rs), np.concatenate(ws)


def angular_rule(d: int, n_angular=None) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions and weights integrating over S^{d-1} exactly antipodally.

    The second half of the grid is the exact floating-point negation of the
    first half (node i + n/2 is -node i), so odd integrands cancel to the
    last bit when accumulated in antipodal pairs.  d=1 uses {+1, -1}; d=2 a
    midpoint trapezoid rule in angle; d=3 a Gauss-Legendre x trapezoid
    product rule on the sphere.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        n = n_angular if n_angular is not None else _DEF_ANGULAR[2]
        n += n % 2
        theta = (np.arange(n // 2) + 0.5) * (2.0 * math.pi / n)
        half = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        dirs = np.concatenate([half, -half])
        return dirs, np.full(n, 2.0 * math.pi / n)
    n_mu, n_phi = n_angular if n_angular is not None else _DEF_ANGULAR[3]
    n_mu += n_mu % 2  # even order: no equatorial node, hemispheres mirror
    mu, wmu = leggauss(n_mu)
    upper = mu > 0.0
    mu_u, wmu_u = mu[upper], wmu[upper]
    phi = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
    sin_t = np.sqrt(1.0 - mu_u**2)
    half = np.stack(
        [
            np.outer(sin_t, np.cos(phi)).ravel(),
            np.outer(sin_t, np.sin(phi)).ravel(),
            np.outer(mu_u, np.ones(n_phi)).ravel(),
        ],
        axis=-1,
    )
    dirs = np.concatenate([half, -half])
    w_half = np.outer(wmu_u, np.full(n_phi, 2.0 * math.pi / n_phi)).ravel()
    return dirs, np.concatenate([w_half, w_half])


@dataclass(frozen=True)
class ZGrid:
    """Product radial x angular quadrature grid for d-dimensional z-integrals.

    ``nodes[i]`` carries weight ``weights[i]`` already including the r^{d-1}
    area factor, so ``sum(w * f(nodes))`` approximates ∫ f(z) dz over the
    annulus r_lo <= |z| <= r_hi.  ``antipode`` maps each node index to the
    index of its exact antipodal node.
    """

    nodes: np.ndarray
    weights: np.ndarray
    radii: np.ndarray
    r_lo: float
    r_hi: float
    antipode: np.ndarray

    def __len__(self):
        return len(self.weights)


def zgrid(
    kernel: Kernel,
    r_lo: float | None = None,
    r_hi: float | None = None,
    n_angular=None,
    panels_per_decade: float = _DEF_PANELS_PER_DECADE,
    order: int = _DEF_GL_ORDER,
) -> ZGrid:
    """Quadrature grid adapted to the kernel's support and breakpoints."""
    d = kernel.d
    if r_hi is None:
        r_hi = kernel.effective_radius()
        if not math.isfinite(r_hi):
            raise KernelDomainError("untruncated kernel needs an explicit r_hi")
    if r_lo is None:
        r_lo = kernel.quadrature_rmin()
    if not r_lo < r_hi:
        raise ValueError(f"empty radial range [{r_lo}, {r_hi}]")
    r, wr = radial_rule(kernel, r_lo, r_hi, panels_per_decade, order)
    dirs, wa = angular_rule(d, n_angular)
    na = len(wa)
    nodes = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    weights = (wr[:, None] * (r[:, None] ** (d - 1)) * wa[None, :]).ravel()
    radii = np.repeat(r, na)
    # mirrored construction: the angular antipode of index j is j +- na/2
    ang_ant = (np.arange(na) + na // 2) % na
    if not np.array_equal(dirs[ang_ant], -dirs):
        raise AssertionError("angular grid lost exact antipodal symmetry")
    base = np.arange(len(r))[:, None] * na
    antipode = (base + ang_ant[None, :]).ravel()
    return ZGrid(nodes, weights, radii, r_lo, r_hi, antipode)


# --------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class Moment:
    """A kernel integral together with finiteness flag and error estimate."""

    value: float
    finite: bool = True
    err: float = 0.0

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class KernelMoments:
    """Standard integral summaries of a kernel.

    ``first_moment_half`` is half the first absolute moment, the constant
    controlling total-variation upper bounds; ``radial_first_moment`` is the
    distinct radial normalization ∫ r^d K̄(r) dr that rescales the profile to
    a multiple of the classical curvature.  The two are intentionally kept as
    separately named quantities and are never interchanged.
    """

    mass: Moment
    first_moment: Moment
    first_moment_half: Moment
    radial_first_moment: Moment
    second_moment: Moment
    hyperplane_second: Moment
    hyperplane_spread: float
    parabolic: tuple[tuple[float, float], ...]
    notes: tuple[str, ...] = ()


def _radial_moment(kernel: Kernel, q: float) -> Moment:
    """∫_0^∞ r^q K̄(r) dr for the scaled profile, with divergence detection."""
    k = kernel
    pref = k.amplitude * k.scale ** (q + 1 - k.d)
    # origin/tail convergence from the family exponents
    if k.singular and q - k.origin_exponent() <= -1.0:
        return Moment(math.inf, False)
    if not math.isfinite(k.r1) and q - (k.d + k.sigma) >= -1.0:
        return Moment(math.inf, False)
    fam = k.family
    if fam == "ball-indicator":
        val = k.r1 ** (q + 1) / (q + 1)
        return Moment(pref * val, True, abs(pref * val) * 1e-15)
    if fam == "annulus-indicator":
        val = (k.r1 ** (q + 1) - k.r0 ** (q + 1)) / (q + 1)
        return Moment(pref * val, True, abs(pref * val) * 1e-15)
    if fam == "fractional-truncated":
        a = q - k.d - k.sigma
        # reaching here means both endpoints converge, so r1 is finite
        val = k.r1 ** (a + 1) / (a + 1)
        return Moment(pref * val, True, abs(pref * val) * 1e-15)
    if fam == "gaussian":
        val = 0.5 * k.r1 ** (q + 1) * special.gamma(0.5 * (q + 1))
        return Moment(pref * val, True, abs(pref * val) * 1e-15)
    if fam == "exponential-fractional":
        a = q - k.d - k.sigma
        val = k.r1 ** (a + 1) * special.gamma(a + 1)
        return Moment(pref * val, True, abs(pref * val) * 1e-14)
    # custom: adaptive quadrature on [0, r1]; QAGS absorbs endpoint power laws
    val, err = integrate.quad(
        lambda r: float(k._base(np.array([r]))[0]) * r**q,
        0.0,
        k.r1,
        limit=200,
    )
    return Moment(pref * val, True, pref * err)


def absolute_moment(kernel: Kernel, power: float) -> Moment:
    """∫ K(z) |z|^power dz over all of R^d."""
    m = _radial_moment(kernel, kernel.d - 1 + power)
    if not m.finite:
        return m
    s = SPHERE_SURFACE[kernel.d]
    return Moment(s * m.value, True, s * m.err)


def tail_mass(kernel: Kernel, r: float) -> float:
    """∫_{|z| > r} K(z) dz (finite for every r > 0 on supported families)."""
    if r <= 0.0:
        m = absolute_moment(kernel, 0.0)
        return m.value
    k = kernel
    if not math.isfinite(k.r1):
        # untruncated power law: closed-form tail
        if k.sigma <= 0.0:
            return math.inf
        pref = SPHERE_SURFACE[k.d] * k.amplitude * k.scale**k.sigma
        return pref * r ** (-k.sigma) / k.sigma
    hi = kernel.effective_radius()
    if r >= hi:
        return 0.0
    rs, ws = radial_rule(kernel, r, hi)
    vals = kernel.profile_at(rs)
    d = kernel.d
    return SPHERE_SURFACE[d] * float(np.sum(ws * rs ** (d - 1) * vals))


def _origin_remainder(kernel: Kernel, q: float, r_lo: float) -> float:
    """∫_0^{r_lo} r^q K̄(r) dr from the profile's origin power law.

    Exact for indicator and pure power-law profiles, O(r_lo) relative for the
    smoothly modulated ones; used to close the inner gap left by quadrature
    rules that start at a positive radius.
    """
    p = kernel.origin_exponent()
    expo = q - p + 1.0
    if expo <= 0.0:
        return math.inf
    val = float(kernel.profile_at(np.array([r_lo]))[0])
    return val * r_lo ** (q + 1) / expo


def hyperplane_basis(d: int, e: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of the hyperplane orthogonal to e."""
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    if d == 2:
        return np.array([[-e[1], e[0]]])
    pick = np.argmin(np.abs(e))
    v = np.zeros(3)
    v[pick] = 1.0
    t1 = v - np.dot(v, e) * e
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(e, t1)
    return np.stack([t1, t2])


def hyperplane_second_moment(
    kernel: Kernel,
    e,
    n_angular: int = 64,
    panels_per_decade: float = 4.0,
    order: int = _DEF_GL_ORDER,
) -> float:
    """∫_{e⊥} K(z) |z|^2 dH^{d-1}(z) by quadrature on the hyperplane.

    For radial kernels the value is independent of ``e`` (the same radii are
    sampled whatever the direction), which the moment report cross-checks.
    """
    k = kernel
    d = k.d
    if d == 1:
        return 0.0  # the orthogonal "hyperplane" is the single point 0
    if not math.isfinite(k.r1):
        # integrand ~ r^{-sigma} at infinity: diverges for every sigma < 1
        return math.inf
    r_lo = k.quadrature_rmin()
    r_hi = k.effective_radius()
    rs, ws = radial_rule(k, r_lo, r_hi, panels_per_decade, order)
    vals = k.profile_at(rs)
    if d == 2:
        # line integral: two rays along the unit normal of e
        radial = float(np.sum(ws * vals * rs**2)) + _origin_remainder(k, 2.0, r_lo)
        return 2.0 * radial
    # d == 3: polar rule on the plane
    radial = float(np.sum(ws * vals * rs**3)) + _origin_remainder(k, 3.0, r_lo)
    return 2.0 * math.pi * radial


def hyperplane_moment_matrix(
    kernel: Kernel,
    e,
    n_angular: int = 256,
    panels_per_decade: float = 4.0,
    order: int = _DEF_GL_ORDER,
) -> np.ndarray:
    """Second-moment matrix ∫_{e⊥} K(z) z⊗z dH^{d-1}(z) (d x d, PSD, M e = 0)."""
    k = kernel
    d = k.d
    e = np.asarray(e, dtype=float)
    if d == 1:
        return np.zeros((1, 1))
    basis = hyperplane_basis(d, e)
    r_lo = k.quadrature_rmin()
    r_hi = k.effective_radius()
    rs, ws = radial_rule(k, r_lo, r_hi, panels_per_decade, order)
    vals = k.profile_at(rs)
    if d == 2:
        t = basis[0]
        coef = 2.0 * (float(np.sum(ws * vals * rs**2)) + _origin_remainder(k, 2.0, r_lo))
        return coef * np.outer(t, t)
    # plane nodes: r * (cos φ t1 + sin φ t2); the φ-average of u⊗u is isotropic
    # in the plane, so integrate the radial part and distribute evenly.
    coef = 2.0 * math.pi * (
        float(np.sum(ws * vals * rs**3)) + _origin_remainder(k, 3.0, r_lo)
    )
    t1, t2 = basis
    return 0.5 * coef * (np.outer(t1, t1) + np.outer(t2, t2))


def parabolic_mass(
    kernel: Kernel,
    e,
    lam: float,
    rho_max: float | None = None,
    n_rho: int = 160,
    inner_order: int = 16,
) -> float:
    """Mass of K over the parabolic slab {|y·e| <= (lam/2)|y_perp|^2}.

    ``rho_max`` optionally restricts the tangential radius (the cylinder used
    by graph-based curvature bounds).  Radial kernels only; the integral is
    then independent of ``e``.
    """
    if lam <= 0.0:
        return 0.0
    k = kernel
    d = k.d
    if d == 1:
        raise KernelDomainError("parabolic regions need d >= 2")
    r_eff = k.effective_radius()
    if not math.isfinite(r_eff):
        raise KernelDomainError(
            "parabolic mass needs a bounded quadrature window; truncate the kernel"
        )
    hi = r_eff if rho_max is None else min(rho_max, r_eff)
    lo = k.quadrature_rmin()
    if hi <= lo:
        return 0.0
    rho, wr = gauss_log_panels(lo, hi, panels_per_decade=6, order=8)
    x, w = leggauss(inner_order)
    total = 0.0
    a_hi = np.minimum(0.5 * lam * rho**2, r_eff)
    # inner integral over the normal coordinate a in [0, a_hi(rho)]
    half = 0.5 * a_hi
    a_nodes = half[:, None] * (x[None, :] + 1.0)
    r_full = np.sqrt(a_nodes**2 + rho[:, None] ** 2)
    vals = k.profile_at(r_full)
    inner = (half[:, None] * w[None, :] * vals).sum(axis=1)
    if d == 2:
        total = 4.0 * float(np.sum(wr * inner))
    else:
        total = 4.0 * math.pi * float(np.sum(wr * rho * inner))
    return total


def moments(kernel: Kernel) -> KernelMoments:
    """Integral summaries with explicit infinity flags and error estimates."""
    mass = absolute_moment(kernel, 0.0)
    first = absolute_moment(kernel, 1.0)
    half = Moment(0.5 * first.value, first.finite, 0.5 * first.err)
    radial_first = _radial_moment(kernel, kernel.d)
    second = absolute_moment(kernel, 2.0)
    if kernel.d >= 2:
        dirs, _ = angular_rule(kernel.d, 8 if kernel.d == 2 else (4, 4))
        kappas = [hyperplane_second_moment(kernel, e) for e in dirs[: len(dirs) // 2]]
        kv = float(np.mean(kappas))
        if math.isfinite(kv):
            spread = float(np.ptp(kappas) / kv) if kv > 0 else 0.0
            hyper = Moment(kv, True, abs(kv) * 1e-12)
        else:
            spread = 0.0
            hyper = Moment(math.inf, False)
    else:
        hyper = Moment(0.0, True, 0.0)
        spread = 0.0
    if kernel.d >= 2 and math.isfinite(kernel.effective_radius()):
        e1 = np.zeros(kernel.d)
        e1[0] = 1.0
        para = tuple(
            (lam, parabolic_mass(kernel, e1, lam)) for lam in (0.25, 1.0, 4.0)
        )
    else:
        para = ()
    notes = []
    if kernel.family == "custom-radial-profile":
        edge = float(kernel.profile_at(np.array([kernel.support_radius * 0.999999]))[0])
        notes.append(
            f"profile truncated at r={kernel.support_radius:.6g}"
            f" (profile value there: {edge:.3g}); tail beyond is dropped"
        )
    return KernelMoments(
        mass=mass,
        first_moment=first,
        first_moment_half=half,
        radial_first_moment=radial_first,
        second_moment=second,
        hyperplane_second=hyper,
        hyperplane_spread=spread,
        parabolic=para,
        notes=tuple(notes),
    )


# --------------------------------------------------------------------------
# assumption checks


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: dict
    note: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    assumption_set: str
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


ASSUMPTION_SETS = ("summK", "fastK", "curvature-set")


def _check_summability(kernel: Kernel) -> CheckResult:
    """∫ K (1 ∧ |z|) dz finite: first moment near 0, plain mass beyond 1."""
    inner = _segment_moment(kernel, kernel.d, 0.0, min(1.0, kernel.effective_radius()))
    outer = tail_mass(kernel, 1.0)
    finite = math.isfinite(inner) and math.isfinite(outer)
    return CheckResult(
        "truncated-first-moment",
        finite,
        {"inner": inner, "outer": outer, "total": inner + outer},
    )


def _segment_moment(kernel: Kernel, q: float, lo: float, hi: float) -> float:
    """∫_lo^hi r^q K̄(r) dr (scaled profile), tolerant of origin singularities."""
    if hi <= lo:
        return 0.0
    k = kernel
    rem = 0.0
    if lo == 0.0:
        if k.singular and q - k.origin_exponent() <= -1.0:
            return math.inf
        lo = min(1e-9 * hi, 1e-12)
        rem = _origin_remainder(k, q, lo)
    rs, ws = radial_rule(kernel, lo, min(hi, kernel.effective_radius()), 5, 10)
    return float(np.sum(ws * rs**q * kernel.profile_at(rs))) + rem


def validate(kernel: Kernel, assumption_set: str) -> AssumptionReport:
    """Numerically check a named kernel assumption set; report, never raise."""
    if assumption_set not in ASSUMPTION_SETS:
        raise KernelDomainError(f"unknown assumption set {assumption_set!r}")
    checks: list[CheckResult] = []
    if assumption_set == "summK":
        checks.append(_check_summability(kernel))
    elif assumption_set == "fastK":
        m = absolute_moment(kernel, 1.0)
        checks.append(
            CheckResult(
                "first-moment-finite",
                m.finite,
                {"first_moment": m.value if m.finite else math.inf},
            )
        )
    else:
        checks.extend(_curvature_set_checks(kernel))
    return AssumptionReport(assumption_set, tuple(checks))


def _curvature_set_checks(kernel: Kernel) -> list[CheckResult]:
    k = kernel
    out = []
    if not math.isfinite(k.effective_radius()):
        return [
            CheckResult(
                "bounded-quadrature-window",
                False,
                {"note": "unbounded support; truncate the kernel before checking"},
            )
        ]
    ref = min(k.effective_radius(), 1.0 if k.compact_support else k.scale * k.r1)
    # 1) r * mass outside B(0, r) -> 0 along a decreasing radius sequence;
    #    fit the decay exponent so slowly decaying kernels still register
    radii = [0.1 * ref, 0.05 * ref, 0.025 * ref]
    vals = [r * tail_mass(k, r) for r in radii]
    decreasing = all(b < a for a, b in zip(vals, vals[1:]))
    slope = float(np.polyfit(np.log(radii), np.log(np.maximum(vals, 1e-300)), 1)[0])
    out.append(
        CheckResult(
            "origin-tail-product",
            decreasing and slope >= 0.05,
            {"radii": radii, "values": vals, "decay_exponent": slope},
            "r * ∫_{|z|>r} K must decay as r -> 0",
        )
    )
    if k.d == 1:
        return out
    e1 = np.zeros(k.d)
    e1[0] = 1.0
    kappa = hyperplane_second_moment(k, e1)
    # 2) parabolic slab masses finite for each sampled opening
    lam_grid = [0.25, 1.0, 4.0]
    masses = [parabolic_mass(k, e1, lam) for lam in lam_grid]
    out.append(
        CheckResult(
            "parabolic-mass-finite",
            all(math.isfinite(v) for v in masses),
            {"lambda": lam_grid, "mass": masses},
        )
    )
    # 3) small-opening ratio bounded (and consistent with the hyperplane moment)
    lam_small = [0.4, 0.2, 0.1]
    ratios = [parabolic_mass(k, e1, lam) / lam for lam in lam_small]
    bound = 2.0 * kappa + 1e-12
    out.append(
        CheckResult(
            "small-opening-ratio",
            all(v <= bound for v in ratios),
            {"lambda": lam_small, "ratio": ratios, "hyperplane_second": kappa},
            "mass(Q_lam)/lam stays bounded as lam -> 0",
        )
    )
    # 4) wide-opening ratio vanishes
    lam_large = [4.0, 16.0, 64.0]
    ratios_l = [parabolic_mass(k, e1, lam) / lam for lam in lam_large]
    out.append(
        CheckResult(
            "wide-opening-decay",
            all(b < a for a, b in zip(ratios_l, ratios_l[1:]))
            and ratios_l[-1] < 0.5 * ratios_l[0],
            {"lambda": lam_large, "ratio": ratios_l},
        )
    )
    # 5) decay at least as fast as the reference power law beyond radius 1
    hi = max(2.0 * ref, 4.0)
    rr = np.geomspace(1.0, hi, 48)
    prof = k.profile_at(rr) * rr ** (k.d + 1 + k.s)
    growing = prof[-1] > prof[0] * 1.05 and prof[-1] > 1e-300
    out.append(
        CheckResult(
            "power-tail-domination",
            not growing,
            {"m": float(prof.max()), "at_one": float(prof[0]), "far": float(prof[-1])},
            "K(y) |y|^{d+1+s} must not grow at infinity",
        )
    )
    return out


def satisfies(kernel: Kernel, assumption_set: str) -> bool:
    return validate(kernel, assumption_set).passed
