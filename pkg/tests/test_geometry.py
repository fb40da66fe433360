"""Mask algebra, value containers and geometry serialization."""

import math

import numpy as np
import pytest

import stridect as st
from stridect.errors import InvalidArgumentError, ShapeMismatchError


# ---------------------------------------------------------------------------
# sparse masks


def test_mask_every_twelfth_of_720():
    m = st.make_sparse_mask(720, 12)
    assert m.n_active == 60
    assert np.array_equal(m.active_indices, np.arange(0, 720, 12))


def test_mask_full():
    m = st.make_sparse_mask(720, 1)
    assert m.n_active == 720
    assert m.active.all()


def test_mask_eight_views_stride_two():
    m = st.make_sparse_mask(8, 2)
    assert np.array_equal(m.active_indices, [0, 2, 4, 6])
    assert not m.active[[1, 3, 5, 7]].any()


def test_mask_validation():
    with pytest.raises(InvalidArgumentError):
        st.make_sparse_mask(10, 0)
    with pytest.raises(InvalidArgumentError):
        st.make_sparse_mask(10, 11)
    with pytest.raises(InvalidArgumentError):
        st.make_sparse_mask(0, 1)


def test_mask_count_matches_ceil():
    for n in (1, 2, 3, 5, 8, 97, 256, 720, 1023, 1024):
        for r in range(1, n + 1):
            assert st.make_sparse_mask(n, r).n_active == math.ceil(n / r)


def test_mask_active_readonly():
    m = st.make_sparse_mask(8, 2)
    with pytest.raises(ValueError):
        m.active[0] = False


# ---------------------------------------------------------------------------
# apply_mask


def _sino(values, geometry=None):
    return st.Sinogram(np.asarray(values, dtype=np.float64), geometry)


def test_apply_mask_small():
    s = _sino([[1.0, 2.0], [3.0, 4.0]])
    out = st.apply_mask(s, st.make_sparse_mask(2, 2))
    assert np.array_equal(out.values, [[1.0, 2.0], [0.0, 0.0]])


def test_apply_mask_full_identity():
    rng = np.random.default_rng(0)
    s = _sino(rng.normal(size=(9, 5)))
    out = st.apply_mask(s, st.make_sparse_mask(9, 1))
    assert np.array_equal(out.values, s.values)


def test_apply_mask_idempotent():
    rng = np.random.default_rng(1)
    s = _sino(rng.normal(size=(12, 7)))
    m = st.make_sparse_mask(12, 3)
    once = st.apply_mask(s, m)
    twice = st.apply_mask(once, m)
    assert np.array_equal(once.values, twice.values)


def test_apply_mask_linear():
    rng = np.random.default_rng(2)
    m = st.make_sparse_mask(10, 4)
    for _ in range(5):
        s1 = rng.normal(size=(10, 6))
        s2 = rng.normal(size=(10, 6))
        a, b = rng.normal(size=2)
        lhs = st.apply_mask(_sino(a * s1 + b * s2), m).values
        rhs = a * st.apply_mask(_sino(s1), m).values + b * st.apply_mask(_sino(s2), m).values
        assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_apply_mask_view_mismatch():
    with pytest.raises(ShapeMismatchError):
        st.apply_mask(_sino(np.zeros((5, 3))), st.make_sparse_mask(6, 2))


def test_apply_mask_keeps_geometry():
    g = st.desk_geometry(6, 4, 16)
    s = _sino(np.ones((6, 4)), g)
    assert st.apply_mask(s, st.make_sparse_mask(6, 2)).geometry is g


def test_mask_rows_plain_array():
    vals = np.arange(12.0).reshape(4, 3)
    active = np.array([True, False, True, False])
    out = st.mask_rows(vals, active)
    assert np.array_equal(out[0], vals[0])
    assert not out[1].any()
    with pytest.raises(ShapeMismatchError):
        st.mask_rows(vals, np.ones(5, bool))


# ---------------------------------------------------------------------------
# fan-beam geometry


def test_geometry_kv_roundtrip():
    g = st.desk_geometry(90, 128, 64)
    g2 = st.FanBeamGeometry.from_kv(g.to_kv())
    assert g2.source_to_center == g.source_to_center
    assert g2.center_to_detector == g.center_to_detector
    assert g2.detector_width == g.detector_width
    assert g2.angular_range == g.angular_range
    assert (g2.n_views, g2.n_detectors) == (g.n_views, g.n_detectors)


def test_geometry_kv_errors():
    g = st.desk_geometry(6, 4, 16)
    text = g.to_kv()
    with pytest.raises(InvalidArgumentError):
        st.FanBeamGeometry.from_kv(text.replace("sod_mm", "sad_mm"))
    with pytest.raises(InvalidArgumentError):
        st.FanBeamGeometry.from_kv(text + "extra=1\n")
    with pytest.raises(InvalidArgumentError):
        st.FanBeamGeometry.from_kv(text + "not a pair\n")
    missing = "\n".join(text.splitlines()[1:])
    with pytest.raises(InvalidArgumentError):
        st.FanBeamGeometry.from_kv(missing)


def test_geometry_validation():
    with pytest.raises(InvalidArgumentError):
        st.FanBeamGeometry(-1.0, 1.0, 4, 4, 1.0)
    with pytest.raises(InvalidArgumentError):
        st.FanBeamGeometry(1.0, 1.0, 4, 4, -1.0)
    with pytest.raises(InvalidArgumentError):
        st.FanBeamGeometry(1.0, 1.0, 0, 4, 1.0)
    with pytest.raises(InvalidArgumentError):
        st.FanBeamGeometry(1.0, 1.0, 4, 4, 1.0, angular_range=(1.0, 1.0))


def test_view_angles_exclude_endpoint():
    g = st.desk_geometry(720, 8, 16)
    ang = g.view_angles
    assert ang.shape == (720,)
    assert ang[0] == 0.0
    assert ang[-1] < 2.0 * math.pi


def test_detector_offsets_centered():
    g = st.desk_geometry(4, 33, 16)
    off = g.detector_offsets
    assert abs(off.mean()) < 1e-12
    assert off[16] == 0.0
    assert np.allclose(np.diff(off), g.detector_spacing)


def test_virtual_detector_scaling():
    g = st.desk_geometry(4, 8, 16)
    assert g.magnification == pytest.approx(2.0)
    assert np.allclose(g.virtual_detector_coords, g.detector_offsets / 2.0)


def test_desk_geometry_ratios_and_fov():
    for nx, px in ((64, 1.0), (256, 1.0), (64, 0.5)):
        g = st.desk_geometry(10, 16, nx, pixel_size=px)
        assert g.center_to_detector == pytest.approx(g.source_to_center)
        assert g.detector_width / g.source_to_center == pytest.approx(413.0 / 400.0)
        half_fan = math.atan((g.detector_width / 2.0) /
                             (g.source_to_center + g.center_to_detector))
        fov = g.source_to_center * math.sin(half_fan)
        half_diag = math.sqrt(2.0) * nx * px / 2.0
        assert fov == pytest.approx(1.02 * half_diag, rel=1e-9)


# ---------------------------------------------------------------------------
# containers


def test_image_grid_axes_and_validation():
    img = st.ImageGrid(4, 3, 0.5, np.zeros((3, 4)))
    assert abs(img.xs.mean()) < 1e-12
    assert np.allclose(np.diff(img.xs), 0.5)
    assert img.ys.shape == (3,)
    with pytest.raises(ShapeMismatchError):
        st.ImageGrid(4, 3, 0.5, np.zeros((4, 3)))
    with pytest.raises(InvalidArgumentError):
        st.ImageGrid(4, 3, 0.5, np.full((3, 4), np.nan))
    with pytest.raises(InvalidArgumentError):
        st.ImageGrid(4, 3, -1.0, np.zeros((3, 4)))


def test_image_grid_values_readonly():
    img = st.ImageGrid(2, 2, 1.0, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        img.values[0, 0] = 1.0
    img2 = img.with_values(np.ones((2, 2)))
    assert img2.pixel_size == img.pixel_size
    assert img2.values[0, 0] == 1.0


def test_sinogram_validation():
    with pytest.raises(ShapeMismatchError):
        st.Sinogram(np.zeros(5))
    with pytest.raises(InvalidArgumentError):
        st.Sinogram(np.full((2, 2), np.inf))
    g = st.desk_geometry(6, 4, 16)
    with pytest.raises(ShapeMismatchError):
        st.Sinogram(np.zeros((5, 4)), g)
    s = st.Sinogram(np.zeros((6, 4)), g)
    assert (s.n_views, s.n_detectors) == (6, 4)
    with pytest.raises(ValueError):
        s.values[0, 0] = 1.0
    assert s.with_values(np.ones((6, 4))).geometry is g
