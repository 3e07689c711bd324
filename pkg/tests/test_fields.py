import math

import numpy as np
import pytest

from nlgeom import fields
from nlgeom.fields import (
    AxisBox,
    Ball,
    Box,
    ConvexPolygon,
    FieldDomainError,
    GridField,
    Halfspace,
    differentiate,
    empty_shape,
    line_slice,
    rasterize,
    superlevel,
)


@pytest.fixture
def unit_box():
    return Box.cube(1.0, 64)


def test_rasterize_ball_cell_count(unit_box):
    # area-count oracle: pi * 0.25 / (2/64)^2 ~ 804
    ind = rasterize(Ball((0.0, 0.0), 0.5), unit_box)
    assert ind.tag == "indicator"
    count = int(ind.values.sum())
    assert 804 - 40 <= count <= 804 + 40


def test_rasterize_halfspace_exact_half(unit_box):
    ind = rasterize(Halfspace((1.0, 0.0), 0.0), unit_box)
    assert ind.values.sum() == 64 * 64 / 2


def test_rasterize_empty(unit_box):
    assert rasterize(empty_shape(2), unit_box).values.sum() == 0.0


def test_rasterize_phase_area(unit_box):
    ph = rasterize(Ball((0.0, 0.0), 0.5), unit_box, mode="phase")
    assert ph.tag == "phase"
    area = float(ph.values.sum()) * (2.0 / 64) ** 2
    assert area == pytest.approx(math.pi * 0.25, rel=2e-3)


def _aligned_box():
    # 64^2 grid with h = 1/64 placing (0.5, 0) exactly on a cell center
    h = 1.0 / 64
    return Box((0.5 - 31.5 * h, -31.5 * h), (1.0, 1.0), (64, 64))


def test_differentiate_linear_exact():
    box = _aligned_box()
    c = box.centers()
    f = GridField(box, c[..., 0])
    grad, hess = differentiate(f, (0.5, 0.0))
    assert np.allclose(grad, [1.0, 0.0], atol=1e-12)
    assert np.abs(hess).max() < 1e-12


def test_differentiate_radial_hessian():
    box = _aligned_box()
    c = box.centers()
    f = GridField(box, np.sqrt(np.sum(c**2, axis=-1)))
    _, hess = differentiate(f, (0.5, 0.0))
    # Hessian of |y| at (0.5, 0): tangential entry 1/R = 2
    assert hess[1, 1] == pytest.approx(2.0, rel=1e-2)
    assert abs(hess[0, 0]) < 1e-6


def test_differentiate_quadratic_exact():
    box = _aligned_box()
    c = box.centers()
    f = GridField(box, 0.5 * np.sum(c**2, axis=-1))
    _, hess = differentiate(f, (0.5, 0.0))
    assert np.abs(hess - np.eye(2)).max() < 1e-10


def test_differentiate_rejects_boundary_and_indicator(unit_box):
    c = unit_box.centers()
    f = GridField(unit_box, c[..., 0])
    with pytest.raises(FieldDomainError):
        differentiate(f, (-1.0, -1.0))
    ind = rasterize(Ball((0, 0), 0.5), unit_box)
    with pytest.raises(FieldDomainError):
        differentiate(ind, (0.0, 0.0))


def test_slice_linear_is_exact(unit_box):
    f = GridField(unit_box, unit_box.centers()[..., 0])
    sl = line_slice(f, (1.0, 0.0), (0.0, 0.0))
    assert len(sl.t) > 32
    assert np.abs(sl.values - sl.t).max() < 1e-12


def test_slice_halfspace_step(unit_box):
    ind = rasterize(Halfspace((1.0, 0.0), 0.0), unit_box)
    f = GridField(unit_box, ind.values, tag="phase")
    sl = line_slice(f, (1.0, 0.0), (0.0, 0.3))
    h = 2.0 / 64
    assert np.all(sl.values[sl.t < -h] == 0.0)
    assert np.all(sl.values[sl.t > h] == 1.0)


def test_slice_diagonal_sine(unit_box):
    f = GridField(unit_box, np.sin(np.pi * unit_box.centers()[..., 0]))
    z = np.array([1.0, 1.0]) / math.sqrt(2)
    sl = line_slice(f, z, (0.0, 0.0))
    keep = np.abs(sl.t) < 1.2
    err = np.abs(sl.values - np.sin(np.pi * sl.t / math.sqrt(2)))[keep].max()
    assert err < 3e-3  # O(h^2) at h = 1/32


def test_slice_misses_box(unit_box):
    f = GridField(unit_box, unit_box.centers()[..., 0])
    sl = line_slice(f, (0.0, 1.0), (5.0, 0.0))
    assert len(sl.t) == 0


def test_superlevel_monotone_and_extremes(unit_box):
    phi = GridField(unit_box, np.sqrt(np.sum(unit_box.centers() ** 2, axis=-1)) - 0.5)
    full = superlevel(phi, phi.values.min() - 1.0)
    none = superlevel(phi, phi.values.max() + 1.0)
    assert full.cell_count() == 64 * 64
    assert none.cell_count() == 0
    lo = superlevel(phi, 0.0)
    hi = superlevel(phi, 0.2)
    assert hi.cell_count() <= lo.cell_count()
    # cells of the higher level are a subset of the lower level's
    assert np.all(hi.field.values <= lo.field.values)


def test_superlevel_is_disk_complement(unit_box):
    phi = GridField(unit_box, np.sqrt(np.sum(unit_box.centers() ** 2, axis=-1)) - 0.5)
    sup = superlevel(phi, 0.0)
    oracle = rasterize(fields.complement(Ball((0, 0), 0.5)), unit_box)
    assert np.array_equal(sup.field.values, oracle.values)


def test_superlevel_membership_is_nonstrict():
    box = Box((0.0,) * 2, (1.0,) * 2, (4, 4))
    f = GridField(box, np.full((4, 4), 0.25))
    assert superlevel(f, 0.25).cell_count() == 16


def test_slice_of_rasterized_matches_membership():
    box = Box.cube(1.0, 128)
    ball = Ball((0.1, -0.05), 0.55)
    ind = rasterize(ball, box)
    f = GridField(box, ind.values, tag="phase")
    z = np.array([math.cos(0.3), math.sin(0.3)])
    sl = line_slice(f, z, (0.0, 0.0))
    pts = np.asarray([0.0, 0.0]) + sl.t[:, None] * z
    agree = (sl.values > 0.5) == ball.contains(pts)
    assert agree.mean() >= 0.98


def test_grid_file_round_trip(tmp_path, unit_box):
    rng = np.random.default_rng(7)
    f = GridField(unit_box, rng.standard_normal(unit_box.resolution),
                  tag="level-set", outside=-0.25)
    path = tmp_path / "field.grid"
    fields.save_field(f, path)
    back = fields.load_field(path)
    assert back.box == f.box
    assert back.tag == f.tag and back.outside == f.outside
    assert np.array_equal(back.values, f.values)


def test_polygon_matches_axis_box_distance():
    sq = ConvexPolygon(((0, 0), (1, 0), (1, 1), (0, 1)))
    ab = AxisBox((0, 0), (1, 1))
    pts = np.random.default_rng(0).uniform(-0.5, 1.5, (300, 2))
    assert np.abs(sq.phi(pts) - ab.phi(pts)).max() < 1e-12


def test_polygon_rejects_nonconvex():
    with pytest.raises(FieldDomainError):
        ConvexPolygon(((0, 0), (2, 0), (1, 0.5), (2, 2), (0, 2)))


def test_ball_boundary_sample_measure_and_normals():
    b = Ball((0.2, -0.1), 0.5)
    bs = b.boundary_sample(128)
    assert bs.weights.sum() == pytest.approx(math.pi, rel=1e-12)
    # inner normals point back toward the center
    toward = np.einsum("ij,ij->i", bs.normals, bs.points - np.array([0.2, -0.1]))
    assert np.allclose(toward, -0.5, atol=1e-12)

    b3 = Ball((0, 0, 0), 2.0)
    bs3 = b3.boundary_sample(500)
    assert bs3.weights.sum() == pytest.approx(16 * math.pi, rel=1e-12)


def test_combinators():
    ball = Ball((0.0, 0.0), 0.5)
    right = Halfspace((1.0, 0.0), 0.0)
    half_disk = fields.intersect(ball, right)
    assert half_disk.contains(np.array([0.2, 0.0]))
    assert not half_disk.contains(np.array([-0.2, 0.0]))
    u = fields.union(ball, right)
    assert u.contains(np.array([5.0, 0.0]))
    assert not u.contains(np.array([-5.0, 0.0]))


def test_grid_field_validation(unit_box):
    with pytest.raises(FieldDomainError):
        GridField(unit_box, np.ones((3, 3)))
    with pytest.raises(FieldDomainError):
        GridField(unit_box, 0.5 * np.ones(unit_box.resolution), tag="indicator")
    with pytest.raises(FieldDomainError):
        GridField(unit_box, 2.0 * np.ones(unit_box.resolution), tag="phase")
    with pytest.raises(FieldDomainError):
        Box((0, 0), (1, 1), (2, 2))  # too coarse


def test_sample_constant_extension(unit_box):
    f = GridField(unit_box, np.ones(unit_box.resolution), outside=7.0)
    far = f.sample(np.array([[10.0, 0.0]]))
    assert far[0] == 7.0
