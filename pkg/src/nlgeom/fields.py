"""Grids, shapes, and the differential / slicing utilities built on them.

Two representations of "a set" coexist here: analytic :class:`Shape` objects
(exact membership tests, signed distances, boundary samples) and sampled
:class:`GridField` values on a uniform box grid.  Every shape is the
superlevel set ``{phi > 0}`` of its canonical level function, so the inner
unit normal is the direction of ``grad phi``.  Fields extend outside their
box by a constant chosen at construction (default 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import ndimage


class FieldDomainError(ValueError):
    """Raised when a grid/shape operation is used outside its contract."""


TAGS = ("indicator", "phase", "level-set")


# --------------------------------------------------------------------------
# boxes and grid fields


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with a uniform cell grid (d = 1, 2 or 3)."""

    origin: tuple
    size: tuple
    resolution: tuple

    def __post_init__(self):
        origin = tuple(float(v) for v in np.atleast_1d(self.origin))
        size = tuple(float(v) for v in np.atleast_1d(self.size))
        res = tuple(int(v) for v in np.atleast_1d(self.resolution))
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "resolution", res)
        d = len(origin)
        if not (1 <= d <= 3) or len(size) != d or len(res) != d:
            raise FieldDomainError("origin/size/resolution must share d in 1..3")
        if any(s <= 0 for s in size):
            raise FieldDomainError("box side lengths must be positive")
        if any(n < 4 for n in res):
            raise FieldDomainError("need at least 4 cells per axis")

    @property
    def d(self) -> int:
        return len(self.origin)

    @property
    def spacing(self) -> np.ndarray:
        return np.asarray(self.size) / np.asarray(self.resolution)

    def axis_centers(self, axis: int) -> np.ndarray:
        h = self.size[axis] / self.resolution[axis]
        return self.origin[axis] + h * (np.arange(self.resolution[axis]) + 0.5)

    def centers(self) -> np.ndarray:
        """Cell-center coordinates, shape ``resolution + (d,)`` (x-first)."""
        axes = [self.axis_centers(i) for i in range(self.d)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack(grids, axis=-1)

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        lo = np.asarray(self.origin)
        hi = lo + np.asarray(self.size)
        return np.all((p >= lo) & (p <= hi), axis=-1)

    @staticmethod
    def cube(half_width: float, n: int, d: int = 2) -> "Box":
        """Symmetric box [-w, w]^d with n cells per axis."""
        return Box((-half_width,) * d, (2 * half_width,) * d, (n,) * d)


@dataclass(frozen=True)
class GridField:
    """Scalar samples at the cell centers of a :class:`Box`.

    ``tag`` records the semantics: ``indicator`` (values in {0,1}),
    ``phase`` (values in [0,1]) or ``level-set`` (arbitrary reals).
    ``outside`` is the constant extension value beyond the box.
    """

    box: Box
    values: np.ndarray
    tag: str = "level-set"
    outside: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.box.resolution:
            raise FieldDomainError(
                f"values shape {vals.shape} != resolution {self.box.resolution}"
            )
        if self.tag not in TAGS:
            raise FieldDomainError(f"unknown tag {self.tag!r}; expected one of {TAGS}")
        if self.tag == "indicator" and not np.all((vals == 0.0) | (vals == 1.0)):
            raise FieldDomainError("indicator fields must take values in {0, 1}")
        if self.tag == "phase" and (vals.min() < 0.0 or vals.max() > 1.0):
            raise FieldDomainError("phase fields must take values in [0, 1]")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "outside", float(self.outside))

    @property
    def d(self) -> int:
        return self.box.d

    @property
    def spacing(self) -> np.ndarray:
        return self.box.spacing

    def with_values(self, values, tag: str | None = None) -> "GridField":
        return replace(self, values=np.asarray(values, dtype=float),
                       tag=self.tag if tag is None else tag)

    def sample(self, points) -> np.ndarray:
        """Multilinear interpolation at arbitrary points (constant outside)."""
        pts = np.asarray(points, dtype=float)
        lead = pts.shape[:-1]
        p = pts.reshape(-1, self.d)
        h = self.spacing
        coords = [(p[:, i] - self.box.origin[i]) / h[i] - 0.5 for i in range(self.d)]
        out = ndimage.map_coordinates(
            self.values, np.array(coords), order=1, mode="constant",
            cval=self.outside,
        )
        return out.reshape(lead) if lead else float(out[0])

    def cell_index(self, x) -> tuple:
        """Index of the cell whose center is nearest to x (clipped to grid)."""
        x = np.asarray(x, dtype=float)
        h = self.spacing
        idx = np.floor((x - np.asarray(self.box.origin)) / h).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.box.resolution) - 1)
        return tuple(int(i) for i in idx)


# --------------------------------------------------------------------------
# shapes


class BoundarySample(NamedTuple):
    points: np.ndarray   # (n, d)
    normals: np.ndarray  # (n, d) inner unit normals (direction of grad phi)
    weights: np.ndarray  # (n,) surface measure weights


class Shape:
    """Base class: a set given as {phi > 0} with phi positive inside."""

    d: int

    def phi(self, x) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x) -> np.ndarray:
        return np.asarray(self.phi(x)) > 0.0

    def indicator(self, x) -> np.ndarray:
        return self.contains(x).astype(float)

    def signed_distance(self, x) -> np.ndarray:
        raise FieldDomainError(f"{type(self).__name__} has no exact signed distance")

    def grad_phi(self, x) -> np.ndarray:
        # numeric fallback; analytic shapes override
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        h = 1e-6
        g = np.empty_like(pts)
        for i in range(self.d):
            e = np.zeros(self.d)
            e[i] = h
            g[:, i] = (np.asarray(self.phi(pts + e)) - np.asarray(self.phi(pts - e))) / (2 * h)
        return g[0] if single else g

    def boundary_sample(self, n: int) -> BoundarySample:
        raise FieldDomainError(f"{type(self).__name__} has no boundary sampler")


@dataclass(frozen=True)
class Ball(Shape):
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0:
            raise FieldDomainError("ball radius must be positive")
        if not (1 <= len(c) <= 3):
            raise FieldDomainError("ball center must have d in 1..3")

    @property
    def d(self) -> int:
        return len(self.center)

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        r = np.sqrt(np.sum((x - np.asarray(self.center)) ** 2, axis=-1))
        return self.radius - r

    signed_distance = phi

    def grad_phi(self, x):
        x = np.asarray(x, dtype=float)
        u = x - np.asarray(self.center)
        r = np.sqrt(np.sum(u * u, axis=-1, keepdims=True))
        return -u / np.where(r == 0.0, 1.0, r)

    def hess_phi(self, x):
        x = np.asarray(x, dtype=float)
        u = x - np.asarray(self.center)
        r = np.sqrt(np.sum(u * u, axis=-1))
        uhat = u / r[..., None]
        eye = np.eye(self.d)
        return -(eye - uhat[..., :, None] * uhat[..., None, :]) / r[..., None, None]

    def boundary_sample(self, n: int) -> BoundarySample:
        c = np.asarray(self.center)
        if self.d == 2:
            theta = 2 * math.pi * (np.arange(n) + 0.5) / n
            u = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
            pts = c + self.radius * u
            w = np.full(n, 2 * math.pi * self.radius / n)
            return BoundarySample(pts, -u, w)
        if self.d == 3:
            # product rule: Gauss-Legendre in the polar cosine, uniform azimuth
            n_mu = max(4, int(round(math.sqrt(n / 2))))
            n_ph = 2 * n_mu
            mu, wmu = np.polynomial.legendre.leggauss(n_mu)
            ph = 2 * math.pi * (np.arange(n_ph) + 0.5) / n_ph
            s = np.sqrt(1 - mu**2)
            u = np.stack(
                [
                    np.outer(s, np.cos(ph)).ravel(),
                    np.outer(s, np.sin(ph)).ravel(),
                    np.outer(mu, np.ones(n_ph)).ravel(),
                ],
                axis=-1,
            )
            w = (np.outer(wmu, np.ones(n_ph)) * (2 * math.pi / n_ph)).ravel()
            return BoundarySample(c + self.radius * u, -u, w * self.radius**2)
        pts = np.array([[self.center[0] - self.radius], [self.center[0] + self.radius]])
        normals = np.array([[1.0], [-1.0]])
        return BoundarySample(pts, normals, np.ones(2))


@dataclass(frozen=True)
class Halfspace(Shape):
    """The open side {x : x . normal > offset} (normal is normalized)."""

    normal: tuple
    offset: float = 0.0

    def __post_init__(self):
        nv = np.atleast_1d(np.asarray(self.normal, dtype=float))
        norm = float(np.linalg.norm(nv))
        if norm == 0.0:
            raise FieldDomainError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", tuple(nv / norm))
        object.__setattr__(self, "offset", float(self.offset) / norm)

    @property
    def d(self) -> int:
        return len(self.normal)

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        return x @ np.asarray(self.normal) - self.offset

    signed_distance = phi

    def grad_phi(self, x):
        x = np.asarray(x, dtype=float)
        n = np.asarray(self.normal)
        return np.broadcast_to(n, x.shape).copy()

    def hess_phi(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.d, self.d))

    def boundary_sample(self, n: int, extent: float = 8.0) -> BoundarySample:
        """Uniform patch of the boundary plane around the perpendicular foot.

        The plane is unbounded, so callers windowing by a shape should keep
        the window inside ``extent/2`` of the foot point.
        """
        nv = np.asarray(self.normal)
        foot = self.offset * nv
        if self.d == 2:
            t = np.array([-nv[1], nv[0]])
            s = extent * ((np.arange(n) + 0.5) / n - 0.5)
            pts = foot[None, :] + s[:, None] * t[None, :]
            w = np.full(n, extent / n)
            return BoundarySample(pts, np.tile(nv, (n, 1)), w)
        if self.d == 3:
            t1 = np.array([-nv[1], nv[0], 0.0])
            if np.linalg.norm(t1) < 1e-12:
                t1 = np.array([1.0, 0.0, 0.0])
            t1 = t1 / np.linalg.norm(t1)
            t2 = np.cross(nv, t1)
            m = max(2, int(round(math.sqrt(n))))
            s = extent * ((np.arange(m) + 0.5) / m - 0.5)
            a, b = np.meshgrid(s, s, indexing="ij")
            pts = foot + a.ravel()[:, None] * t1 + b.ravel()[:, None] * t2
            w = np.full(m * m, (extent / m) ** 2)
            return BoundarySample(pts, np.tile(nv, (m * m, 1)), w)
        return BoundarySample(foot[None, :], nv[None, :], np.ones(1))


@dataclass(frozen=True)
class AxisBox(Shape):
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not all(a < b for a, b in zip(lo, hi)):
            raise FieldDomainError("need lo < hi componentwise")

    @property
    def d(self) -> int:
        return len(self.lo)

    def phi(self, x):
        # exact signed distance: inner L-inf margin inside, minus the
        # Euclidean distance to the box outside
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        inner = np.minimum(x - lo, hi - x).min(axis=-1)
        outer = np.maximum(np.maximum(lo - x, x - hi), 0.0)
        dist_out = np.sqrt(np.sum(outer**2, axis=-1))
        return np.where(dist_out > 0.0, -dist_out, inner)

    signed_distance = phi


@dataclass(frozen=True)
class ConvexPolygon(Shape):
    """Convex polygon in the plane; vertices are stored counter-clockwise."""

    vertices: tuple

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise FieldDomainError("need >= 3 planar vertices")
        area2 = float(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))
        if area2 < 0:
            v = v[::-1]
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        if np.any(cross < -1e-12 * np.max(np.abs(v))):
            raise FieldDomainError("vertices do not bound a convex polygon")
        object.__setattr__(self, "vertices", tuple(map(tuple, v)))

    @property
    def d(self) -> int:
        return 2

    def _arrays(self):
        v = np.asarray(self.vertices)
        e = np.roll(v, -1, axis=0) - v
        length = np.linalg.norm(e, axis=1)
        outward = np.stack([e[:, 1], -e[:, 0]], axis=-1) / length[:, None]
        return v, e, length, outward

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        v, e, length, outward = self._arrays()
        # inward distance to every edge line; the minimum is exact inside
        diff = pts[:, None, :] - v[None, :, :]
        line_d = -np.einsum("peq,eq->pe", diff, outward)
        inside = line_d.min(axis=1)
        # outside: exact distance to the nearest edge segment
        t = np.clip(np.einsum("peq,eq->pe", diff, e) / length[None, :] ** 2, 0.0, 1.0)
        proj = v[None, :, :] + t[..., None] * e[None, :, :]
        seg_d = np.linalg.norm(pts[:, None, :] - proj, axis=-1).min(axis=1)
        out = np.where(inside >= 0.0, inside, -seg_d)
        return out if x.ndim > 1 else float(out[0])

    signed_distance = phi

    def boundary_sample(self, n: int) -> BoundarySample:
        v, e, length, outward = self._arrays()
        total = float(length.sum())
        pts, nrm, wts = [], [], []
        for i in range(len(length)):
            ni = max(1, int(round(n * length[i] / total)))
            t = (np.arange(ni) + 0.5) / ni
            pts.append(v[i] + t[:, None] * e[i])
            nrm.append(np.repeat(-outward[i][None, :], ni, axis=0))
            wts.append(np.full(ni, length[i] / ni))
        return BoundarySample(np.concatenate(pts), np.concatenate(nrm), np.concatenate(wts))


class GridIndicator(Shape):
    """Set of grid cells (piecewise-constant membership, cell-center metric)."""

    def __init__(self, field: GridField, level: float = 0.5):
        if field.tag not in ("indicator", "phase"):
            raise FieldDomainError("grid indicator needs an indicator/phase field")
        self.field = field
        self.level = float(level)
        self.d = field.d

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        f = self.field
        idx = np.floor((pts - np.asarray(f.box.origin)) / f.spacing).astype(int)
        inside_box = np.all((idx >= 0) & (idx < np.asarray(f.box.resolution)), axis=1)
        vals = np.full(len(pts), f.outside)
        if inside_box.any():
            ii = tuple(idx[inside_box].T)
            vals[inside_box] = f.values[ii]
        out = vals - self.level
        return out if x.ndim > 1 else float(out[0])

    def cell_count(self) -> int:
        return int(np.count_nonzero(self.field.values > self.level))


class LevelShape(Shape):
    """Set {phi > 0} of a user-supplied level function (ellipses, graphs...)."""

    def __init__(
        self,
        phi_fn: Callable[[np.ndarray], np.ndarray],
        d: int,
        grad_fn: Callable[[np.ndarray], np.ndarray] | None = None,
        hess_fn: Callable[[np.ndarray], np.ndarray] | None = None,
        boundary_fn: Callable[[np.ndarray], np.ndarray] | None = None,
        name: str = "",
    ):
        self.d = d
        self._phi = phi_fn
        self._grad = grad_fn
        self._hess = hess_fn
        self._boundary = boundary_fn
        self.name = name

    def phi(self, x):
        return self._phi(np.asarray(x, dtype=float))

    def grad_phi(self, x):
        if self._grad is not None:
            return self._grad(np.asarray(x, dtype=float))
        return super().grad_phi(x)

    def hess_phi(self, x):
        if self._hess is None:
            raise FieldDomainError("no Hessian available for this level shape")
        return self._hess(np.asarray(x, dtype=float))

    def boundary_sample(self, n: int) -> BoundarySample:
        if self._boundary is None:
            raise FieldDomainError("no boundary parametrization for this level shape")
        t = (np.arange(n) + 0.5) / n
        pts = np.asarray(self._boundary(t), dtype=float)
        # weights from the closed-curve chord lengths, normals from grad phi
        nxt = np.roll(pts, -1, axis=0)
        prv = np.roll(pts, 1, axis=0)
        w = 0.5 * (np.linalg.norm(nxt - pts, axis=1) + np.linalg.norm(pts - prv, axis=1))
        g = np.atleast_2d(self.grad_phi(pts))
        g = g / np.linalg.norm(g, axis=1, keepdims=True)
        return BoundarySample(pts, g, w)


class _Combo(Shape):
    def __init__(self, shapes: Sequence[Shape], reducer, name: str):
        ds = {s.d for s in shapes}
        if len(ds) != 1:
            raise FieldDomainError("combined shapes must share dimension")
        self.d = ds.pop()
        self.shapes = tuple(shapes)
        self._reduce = reducer
        self.name = name

    def phi(self, x):
        vals = [np.asarray(s.phi(x)) for s in self.shapes]
        return self._reduce(np.stack(vals, axis=0), axis=0)


def intersect(*shapes: Shape) -> Shape:
    return _Combo(shapes, np.min, "intersection")


def union(*shapes: Shape) -> Shape:
    return _Combo(shapes, np.max, "union")


def complement(shape: Shape) -> Shape:
    out = LevelShape(lambda x: -np.asarray(shape.phi(x)), shape.d, name="complement")
    return out


def empty_shape(d: int) -> Shape:
    return LevelShape(lambda x: np.full(np.asarray(x).shape[:-1], -1.0), d, name="empty")


# --------------------------------------------------------------------------
# grid <-> shape operations


def rasterize(shape: Shape, box: Box, mode: str = "indicator", subsamples: int = 4) -> GridField:
    """Sample a shape on a box grid.

    ``indicator`` tests cell centers; ``phase`` averages membership over a
    subsamples^d stencil per cell (area fraction); ``level-set`` stores the
    canonical level function itself.
    """
    if shape.d != box.d:
        raise FieldDomainError("shape/box dimension mismatch")
    if mode == "indicator":
        vals = shape.indicator(box.centers())
        return GridField(box, vals, tag="indicator")
    if mode == "level-set":
        return GridField(box, np.asarray(shape.phi(box.centers()), dtype=float))
    if mode != "phase":
        raise FieldDomainError(f"unknown rasterize mode {mode!r}")
    h = box.spacing
    acc = np.zeros(box.resolution)
    offs = (np.arange(subsamples) + 0.5) / subsamples - 0.5
    centers = box.centers()
    grids = np.meshgrid(*([offs] * box.d), indexing="ij")
    for shift in zip(*(g.ravel() for g in grids)):
        delta = np.asarray(shift) * h
        acc += shape.contains(centers + delta)
    return GridField(box, acc / subsamples**box.d, tag="phase")


def differentiate(field: GridField, x) -> tuple[np.ndarray, np.ndarray]:
    """Second-order central gradient and Hessian at the grid point nearest x.

    The point must sit at least one cell away from the box boundary, and the
    field must be differentiable in kind (level-set or phase tag).
    """
    if field.tag == "indicator":
        raise FieldDomainError("cannot differentiate an indicator field")
    idx = field.cell_index(x)
    res = field.box.resolution
    if any(i < 1 or i > n - 2 for i, n in zip(idx, res)):
        raise FieldDomainError(f"point {x} is in the boundary cell ring")
    u = field.values
    h = field.spacing
    d = field.d
    grad = np.empty(d)
    hess = np.empty((d, d))

    def at(off):
        return u[tuple(i + o for i, o in zip(idx, off))]

    for i in range(d):
        ei = tuple(1 if j == i else 0 for j in range(d))
        mei = tuple(-v for v in ei)
        grad[i] = (at(ei) - at(mei)) / (2 * h[i])
        hess[i, i] = (at(ei) - 2 * at((0,) * d) + at(mei)) / h[i] ** 2
        for j in range(i + 1, d):
            ej = tuple(1 if k == j else 0 for k in range(d))
            pp = tuple(a + b for a, b in zip(ei, ej))
            mm = tuple(-v for v in pp)
            pm = tuple(a - b for a, b in zip(ei, ej))
            mp = tuple(-v for v in pm)
            hess[i, j] = hess[j, i] = (at(pp) + at(mm) - at(pm) - at(mp)) / (4 * h[i] * h[j])
    return grad, hess


class SliceSamples(NamedTuple):
    t: np.ndarray
    values: np.ndarray


def line_slice(field: GridField, direction, offset, spacing: float | None = None) -> SliceSamples:
    """Sample u along the line t -> offset + t * direction (unit direction).

    Samples are multilinear interpolations at spacing <= the smallest cell
    size, restricted to the part of the line inside the box; an empty sample
    set is returned when the line misses the box.
    """
    zhat = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(zhat) - 1.0) > 1e-12:
        raise FieldDomainError("direction must be a unit vector")
    xi = np.asarray(offset, dtype=float)
    # clip to the cell-center hull, where interpolation has full support
    lo = np.asarray(field.box.origin) + 0.5 * field.spacing
    hi = np.asarray(field.box.origin) + np.asarray(field.box.size) - 0.5 * field.spacing
    # slab clipping for the parameter range
    t0, t1 = -np.inf, np.inf
    for i in range(field.d):
        if zhat[i] == 0.0:
            if not (lo[i] <= xi[i] <= hi[i]):
                return SliceSamples(np.empty(0), np.empty(0))
            continue
        a = (lo[i] - xi[i]) / zhat[i]
        b = (hi[i] - xi[i]) / zhat[i]
        t0 = max(t0, min(a, b))
        t1 = min(t1, max(a, b))
    if not (t1 > t0) or not np.isfinite(t0) or not np.isfinite(t1):
        return SliceSamples(np.empty(0), np.empty(0))
    h = float(field.spacing.min()) if spacing is None else float(spacing)
    n = max(2, int(math.ceil((t1 - t0) / h)) + 1)
    t = np.linspace(t0, t1, n)
    pts = xi[None, :] + t[:, None] * zhat[None, :]
    return SliceSamples(t, np.asarray(field.sample(pts)))


def superlevel(field: GridField, c: float) -> GridIndicator:
    """Cells with value >= c (non-strict), as a grid-indicator shape."""
    vals = (field.values >= c).astype(float)
    ind = GridField(field.box, vals, tag="indicator",
                    outside=float(field.outside >= c))
    return GridIndicator(ind)


# --------------------------------------------------------------------------
# persistence


def save_field(field: GridField, path) -> None:
    """Plain text: header lines then one %.17g value per cell, row-major."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"d {field.d}\n")
        fh.write("origin " + " ".join("%.17g" % v for v in field.box.origin) + "\n")
        fh.write("size " + " ".join("%.17g" % v for v in field.box.size) + "\n")
        fh.write("resolution " + " ".join(str(v) for v in field.box.resolution) + "\n")
        fh.write(f"tag {field.tag}\n")
        fh.write("outside %.17g\n" % field.outside)
        for v in field.values.ravel(order="C"):
            fh.write("%.17g\n" % v)


def load_field(path) -> GridField:
    with open(path, "r", encoding="utf-8") as fh:
        header = {}
        for _ in range(6):
            key, _, rest = fh.readline().strip().partition(" ")
            header[key] = rest
        d = int(header["d"])
        origin = tuple(float(v) for v in header["origin"].split())
        size = tuple(float(v) for v in header["size"].split())
        res = tuple(int(v) for v in header["resolution"].split())
        if len(origin) != d or len(size) != d or len(res) != d:
            raise FieldDomainError("inconsistent grid file header")
        vals = np.loadtxt(fh).reshape(res)
    box = Box(origin, size, res)
    return GridField(box, vals, tag=header["tag"], outside=float(header["outside"]))


def slice_to_csv(samples: SliceSamples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,value\n")
        for t, v in zip(samples.t, samples.values):
            fh.write("%.17g,%.17g\n" % (t, v))
