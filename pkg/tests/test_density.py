import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hotspot_shift.density import (
    DensityGrid,
    GridSpec,
    PlanarPoint,
    kde,
    kernel_matrix,
    project,
    read_esri_ascii,
    select_bandwidth,
    unproject,
    write_esri_ascii,
)
from hotspot_shift.errors import DegenerateDataError, GeometryError, ProjectionDomainError

LAT0, LON0 = 40.75, -73.99


def spec(width=5000.0, height=5000.0, cs=25.0):
    return GridSpec(LAT0, LON0, width, height, cs)


# -- projection -----------------------------------------------------------------


def test_origin_projects_to_zero():
    assert project(LAT0, LON0, LAT0, LON0) == PlanarPoint(0.0, 0.0)


def test_north_offset():
    p = project(LAT0 + 0.01, LON0, LAT0, LON0)
    assert p.x == 0
    assert p.y == pytest.approx(1111.949, abs=1e-3)  # 6371000 * 0.01 * pi / 180


def test_east_offset():
    p = project(LAT0, LON0 + 0.01, LAT0, LON0)
    assert p.x == pytest.approx(842.374, abs=1e-3)  # with cos(40.75 deg) = 0.757565


def test_projection_domain():
    with pytest.raises(ProjectionDomainError):
        project(LAT0 + 2.5, LON0, LAT0, LON0)


@given(dlat=st.floats(-1.5, 1.5), dlon=st.floats(-1.5, 1.5))
def test_unproject_inverts_project(dlat, dlon):
    x, y = project(LAT0 + dlat, LON0 + dlon, LAT0, LON0)
    lat, lon = unproject(x, y, LAT0, LON0)
    assert lat == pytest.approx(LAT0 + dlat, abs=1e-9)
    assert lon == pytest.approx(LON0 + dlon, abs=1e-9)


# -- grid spec ---------------------------------------------------------------------


def test_grid_counts_round_up():
    g = GridSpec(LAT0, LON0, 1001.0, 500.0, 100.0)
    assert (g.nx, g.ny) == (11, 5)


def test_grid_cell_limit():
    with pytest.raises(GeometryError):
        GridSpec(LAT0, LON0, 1e6, 1e6, 1.0)


def test_grid_non_positive_cell():
    with pytest.raises(GeometryError):
        GridSpec(LAT0, LON0, 100.0, 100.0, 0.0)


def test_covering_grid_pads_every_point():
    lats = np.array([40.70, 40.72, 40.75])
    lons = np.array([-74.00, -73.95, -73.97])
    g = GridSpec.covering(lats, lons, 100.0, 800.0)
    x, y = g.project(lats, lons)
    assert x.min() == pytest.approx(800.0)
    assert y.min() == pytest.approx(800.0)
    assert g.nx * g.cell_size_m - x.max() >= 800.0 - 1e-6
    assert g.ny * g.cell_size_m - y.max() >= 800.0 - 1e-6


# -- kde ---------------------------------------------------------------------------


def test_single_point_peak_is_gaussian_peak():
    s = spec()
    grid = kde([s.cell_center(100, 100)], s, 100.0)
    assert grid.values[100, 100] == pytest.approx(1 / (2 * math.pi * 100.0**2), rel=1e-12)
    assert grid.values.max() == grid.values[100, 100]


def test_mass_interior_points():
    h = 100.0
    s = spec(cs=h / 4)
    rng = np.random.default_rng(0)
    pts = rng.uniform(4 * h + 1, 5000 - 4 * h - 1, (300, 2))
    mass = kde(pts, s, h).mass
    assert 0.99 <= mass <= 1.0


def test_epanechnikov_mass_and_support():
    h = 200.0
    s = spec(cs=10.0)
    p = s.cell_center(250, 250)
    grid = kde([p], s, h, "epanechnikov")
    assert 0.99 <= grid.mass <= 1.0 + 1e-9
    rows, cols = np.nonzero(grid.values)
    r = np.hypot((cols + 0.5) * 10 - p.x, (rows + 0.5) * 10 - p.y)
    assert r.max() < h
    assert grid.values.max() == pytest.approx(2 / (math.pi * h * h))


def test_two_point_midpoint_value():
    s = spec()
    h = 150.0
    a, b = s.cell_center(50, 40), s.cell_center(50, 60)
    grid = kde([a, b], s, h)
    mid = s.cell_center(50, 50)
    k = lambda p: math.exp(-((mid.x - p.x) ** 2 + (mid.y - p.y) ** 2) / (2 * h * h)) / (2 * math.pi * h * h)
    assert grid.values[50, 50] == pytest.approx((k(a) + k(b)) / 2, rel=1e-12)


def test_mass_leaks_at_edge():
    s = spec()
    grid = kde([(0.0, 2500.0)], s, 100.0)
    assert grid.mass == pytest.approx(0.5, abs=0.01)
    assert grid.leakage == pytest.approx(0.5, abs=0.01)


def test_kde_rejects_empty_and_bad_bandwidth():
    with pytest.raises(ValueError):
        kde([], spec(), 100.0)
    with pytest.raises(ValueError):
        kde([(1.0, 1.0)], spec(), 0.0)
    with pytest.raises(ValueError):
        kde([(1.0, 1.0)], spec(), 10.0, kernel="box")


def test_kernel_matrix_matches_kde():
    rng = np.random.default_rng(2)
    s = spec(2000, 1500, 50)
    pts = rng.uniform(0, 1500, (40, 2))
    K = kernel_matrix(pts, s, 120.0)
    grid = kde(pts, s, 120.0)
    np.testing.assert_allclose(np.asarray(K.sum(axis=0)).reshape(s.shape) / len(pts), grid.values, rtol=1e-12, atol=1e-20)


points_st = st.lists(
    st.tuples(st.floats(600, 2400), st.floats(600, 2400)), min_size=1, max_size=12
)


@settings(max_examples=30, deadline=None)
@given(pts=points_st, h=st.floats(40, 150))
def test_non_negative(pts, h):
    assert (kde(pts, spec(3000, 3000, 50), h).values >= 0).all()


@settings(max_examples=25, deadline=None)
@given(pts=points_st, h=st.floats(40, 150))
def test_translation_by_one_cell(pts, h):
    s = spec(3000, 3000, 50)
    base = kde(pts, s, h).values
    moved = kde([(x + 50, y) for x, y in pts], s, h).values
    # interior columns only: the leftmost column of `moved` may gain mass from outside
    np.testing.assert_allclose(moved[:, 1:], base[:, :-1], rtol=1e-12, atol=1e-22)


@settings(max_examples=25, deadline=None)
@given(pts=points_st, h=st.floats(40, 150))
def test_mirror_symmetry(pts, h):
    s = spec(3000, 3000, 50)
    width = s.nx * s.cell_size_m
    base = kde(pts, s, h).values
    mirrored = kde([(width - x, y) for x, y in pts], s, h).values
    np.testing.assert_allclose(mirrored, base[:, ::-1], rtol=1e-9, atol=1e-20)


@settings(max_examples=25, deadline=None)
@given(a=points_st, b=points_st, h=st.floats(40, 150))
def test_linearity_in_points(a, b, h):
    s = spec(3000, 3000, 50)
    both = kde(a + b, s, h).values * (len(a) + len(b))
    parts = kde(a, s, h).values * len(a) + kde(b, s, h).values * len(b)
    np.testing.assert_allclose(both, parts, rtol=1e-9, atol=1e-20)


# -- bandwidth ---------------------------------------------------------------------


def test_fixed_bandwidth():
    assert select_bandwidth([(0, 0)], "fixed(250)") == 250.0
    assert select_bandwidth([], 250) == 250.0


def test_silverman_formula():
    rng = np.random.default_rng(0)
    pts = rng.normal(0, 1000, (1000, 2))
    sx, sy = pts.std(axis=0, ddof=1)
    expected = (sx + sy) / 2 * 1000 ** (-1 / 6)  # (4 / (d + 2)) ** (1 / (d + 4)) == 1 for d == 2
    assert select_bandwidth(pts, "silverman") == pytest.approx(expected, rel=1e-12)
    assert 300 < expected < 330
    assert select_bandwidth(pts, "scott") == pytest.approx(expected, rel=1e-12)


def test_silverman_degenerate():
    with pytest.raises(DegenerateDataError, match="fixed"):
        select_bandwidth([(5, 5)] * 10, "silverman")
    with pytest.raises(DegenerateDataError):
        select_bandwidth([(5, 5)], "scott")


def test_unknown_rule():
    with pytest.raises(ValueError):
        select_bandwidth([(0, 0), (1, 1)], "isj")


# -- ESRI ASCII ----------------------------------------------------------------------


def test_esri_roundtrip(tmp_path):
    s = GridSpec(LAT0, LON0, 1000.0, 600.0, 100.0)
    grid = kde([(300.0, 200.0), (650.0, 420.0)], s, 120.0)
    path = write_esri_ascii(grid, tmp_path / "g.asc", {"seed": "3"})
    text = path.read_text().splitlines()
    assert text[:6] == ["ncols 10", "nrows 6", "xllcorner 0.0", "yllcorner 0.0", "cellsize 100.0", "NODATA_value -9999"]
    # north row first
    assert float(text[6].split()[0]) == grid.values[-1, 0]
    meta = (tmp_path / "g.asc.meta").read_text()
    assert "origin_lat=40.75" in meta and "config.seed=3" in meta and "kernel=gaussian" in meta
    back = read_esri_ascii(path)
    assert back.spec == s
    np.testing.assert_array_equal(back.values, grid.values)
    assert back.bandwidth_m == 120.0 and back.n_points == 2


def test_density_grid_shape_check():
    with pytest.raises(GeometryError):
        DensityGrid(spec(100, 100, 10), np.zeros((3, 3)), 10.0, 1)
