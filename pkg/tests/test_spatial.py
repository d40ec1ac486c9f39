import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sensorplace.errors import ArityError, ParameterError, UndefinedError, ValidationError
from sensorplace.spatial import StudyArea, clark_evans, gini, raster_grid, voronoi_areas

UNIT = StudyArea([(0, 0), (1, 0), (1, 1), (0, 1)])


def test_lattice_clark_evans():
    s = clark_evans([(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)], UNIT)
    assert s.r_obs == pytest.approx(0.5, abs=1e-12)
    assert s.r_exp == pytest.approx(0.25, abs=1e-12)
    assert s.R == pytest.approx(2.0, abs=1e-12)


def test_two_point_clark_evans():
    s = clark_evans([(0.25, 0.5), (0.75, 0.5)], UNIT)
    assert s.r_exp == pytest.approx(1 / (2 * math.sqrt(2)), abs=1e-12)
    assert s.R == pytest.approx(math.sqrt(2), abs=1e-12)


def test_clark_evans_needs_two_points():
    with pytest.raises(ArityError):
        clark_evans([(0.5, 0.5)], UNIT)


def test_csr_sanity():
    rng = np.random.default_rng(0)
    R = [clark_evans(rng.random((100, 2)), UNIT).R for _ in range(500)]
    assert 0.9 <= np.mean(R) <= 1.1


def test_gini_fixtures():
    assert gini([5, 5, 5]) == 0.0
    assert gini([1, 3]) == pytest.approx(0.25, abs=1e-12)
    assert gini([0, 1]) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(UndefinedError):
        gini([0, 0])


def gini_oracle(a):
    a = np.asarray(a, dtype=float)
    k = a.size
    return np.abs(a[:, None] - a[None, :]).sum() / (2 * k * k * a.mean())


@given(st.lists(st.one_of(st.just(0.0), st.floats(1e-6, 1e6)), min_size=1, max_size=30), st.floats(1e-3, 1e3))
@settings(max_examples=100, deadline=None)
def test_gini_matches_double_sum_and_is_scale_invariant(areas, c):
    if sum(areas) <= 0:
        return
    g = gini(areas)
    assert g == pytest.approx(gini_oracle(areas), abs=1e-9)
    assert 0 <= g < 1
    assert gini(np.asarray(areas) * c) == pytest.approx(g, abs=1e-12)


def test_voronoi_single_site_takes_everything():
    p = voronoi_areas([(0.3, 0.3)], UNIT, resolution=0.01)
    assert p.areas[0] == pytest.approx(1.0, abs=1e-12)


def test_voronoi_mirror_symmetry():
    p = voronoi_areas([(0.25, 0.5), (0.75, 0.5)], UNIT, resolution=0.01)
    assert p.areas[0] == p.areas[1]


def test_voronoi_tie_goes_to_lower_id():
    # 2x1 grid of cells: centre (0.5, 0.5) with res 1 is equidistant to both sites
    p = voronoi_areas([(0.0, 0.5), (1.0, 0.5)], UNIT, ids=[9, 3], resolution=1.0)
    assert p.areas[3] == 1.0 and p.areas[9] == 0.0


def test_raster_areas_sum_to_cell_count():
    rng = np.random.default_rng(1)
    area = StudyArea([(0, 0), (10, 0), (10, 4), (5, 8), (0, 4)])
    pts = [(float(x), float(y)) for x, y in rng.uniform(1, 4, (12, 2))]
    grid = raster_grid(area, 0.05)
    p = voronoi_areas(pts, area, grid=grid)
    assert sum(p.areas.values()) == pytest.approx(grid.n_cells * grid.cell_area, rel=0, abs=1e-9)


def test_raster_converges_and_matches_exact():
    pts = [(0.1 + 0.2 * i, 0.15 + 0.3 * (i % 3)) for i in range(5)]
    coarse = voronoi_areas(pts, UNIT, resolution=0.004)
    fine = voronoi_areas(pts, UNIT, resolution=0.002)
    exact = voronoi_areas(pts, UNIT, method="exact")
    assert sum(exact.areas.values()) == pytest.approx(1.0, rel=1e-6)
    for i in range(5):
        assert abs(coarse.areas[i] - fine.areas[i]) < 0.05 * fine.areas[i]
        assert fine.areas[i] == pytest.approx(exact.areas[i], rel=0.02)


def test_voronoi_errors():
    with pytest.raises(ParameterError):
        voronoi_areas([(0.5, 0.5)], UNIT, resolution=0)
    with pytest.raises(ValidationError):
        voronoi_areas([(2.0, 0.5)], UNIT)


def test_bounding_box_study_area():
    a = StudyArea.from_points([(0, 0), (100, 50)])
    assert a.derived
    assert a.bounds == pytest.approx((-1.0, -0.5, 101.0, 50.5))
