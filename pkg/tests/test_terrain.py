import io
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from terradeploy.terrain import (
    FitConfig, GaussianBump, HeightGrid, HeightmapError, TerrainModel, elevation, fit_gaussians,
    grid_rmse, load_heightmap, model_from_json, model_to_json, random_model, write_esri_ascii,
)

ONE = TerrainModel((GaussianBump(100.0, 0.0, 0.0, 100.0, 100.0),))


def test_peak_value(backend):
    assert elevation(ONE, 0.0, 0.0, backend) == 100.0


def test_empty_model_is_flat(backend):
    m = TerrainModel()
    assert elevation(m, 123.0, -4e5, backend) == 0.0
    assert np.all(elevation(m, np.linspace(0, 1, 7), 3.0, backend) == 0.0)


def test_one_sigma_offset_matches_mpmath(backend):
    mpmath.mp.dps = 30
    want = float(100 * mpmath.exp(mpmath.mpf(-0.5)))
    assert elevation(ONE, 100.0, 0.0, backend) == pytest.approx(want, rel=1e-15)
    assert want == pytest.approx(60.6531, abs=1e-4)


def test_backends_agree(rng):
    m = random_model(rng, 30, (0, 5000, 0, 5000), base=-20.0)
    x, y = rng.uniform(-500, 5500, (2, 500))
    np.testing.assert_allclose(elevation(m, x, y, "numpy"), elevation(m, x, y, "numba"), rtol=1e-13, atol=1e-10)


def test_elevation_broadcasts():
    z = elevation(ONE, np.zeros((3, 1)), np.zeros((1, 4)))
    assert z.shape == (3, 4) and np.all(z == 100.0)


@pytest.mark.parametrize("bad", [(1.0, 0, 0, 0.0, 1.0), (1.0, 0, 0, 1.0, -1.0), (math.inf, 0, 0, 1, 1)])
def test_bump_validation(bad):
    with pytest.raises(ValueError):
        GaussianBump(*bad)


@settings(max_examples=60, deadline=None)
@given(
    comps=st.lists(
        st.tuples(st.floats(-500, 500), st.floats(-1e4, 1e4), st.floats(-1e4, 1e4),
                  st.floats(1.0, 3000.0), st.floats(1.0, 3000.0)),
        max_size=8),
    base=st.floats(-1000, 1000),
    x=st.floats(-2e4, 2e4), y=st.floats(-2e4, 2e4),
)
def test_relief_bound(comps, base, x, y):
    m = TerrainModel(tuple(comps), base)
    z = elevation(m, x, y)
    assert math.isfinite(z)
    assert abs(z - base) <= m.max_abs_relief() + 1e-9


@settings(max_examples=40, deadline=None)
@given(h=st.floats(-800, 800), mx=st.floats(-1e4, 1e4), my=st.floats(-1e4, 1e4),
       sx=st.floats(0.5, 5000), sy=st.floats(0.5, 5000), base=st.floats(-100, 100))
def test_center_value_is_exact(h, mx, my, sx, sy, base):
    m = TerrainModel(((h, mx, my, sx, sy),), base)
    assert elevation(m, mx, my) == base + h


def test_json_round_trip(rng):
    m = random_model(rng, 12, (0, 1000, 0, 1000), base=3123.25)
    back = model_from_json(model_to_json(m))
    assert back == m
    np.testing.assert_array_equal(back.params, m.params)


# ------------------------------------------------------------------ heightmaps

ESRI_2X2 = """ncols 2
nrows 2
xllcorner 0
yllcorner 0
cellsize 30
NODATA_value -9999
1 2
3 4
"""


def test_esri_parse():
    g = load_heightmap(io.StringIO(ESRI_2X2))
    assert (g.n_rows, g.n_cols, g.cell_size) == (2, 2, 30.0)
    assert list(g.values) == [1.0, 2.0, 3.0, 4.0]


def test_esri_bytes_input():
    g = load_heightmap(ESRI_2X2.encode())
    assert list(g.values) == [1.0, 2.0, 3.0, 4.0]


def test_esri_rejects_nodata():
    with pytest.raises(HeightmapError) as ei:
        load_heightmap(ESRI_2X2.replace("3 4", "3 -9999"))
    assert (ei.value.row, ei.value.col) == (1, 1)


def test_esri_rejects_ragged_row():
    with pytest.raises(HeightmapError) as ei:
        load_heightmap(ESRI_2X2.replace("3 4", "3"))
    assert ei.value.row == 1


@pytest.mark.parametrize("text", [
    ESRI_2X2.replace("cellsize 30", "cellsize -1"),
    ESRI_2X2.replace("ncols 2", "ncols two"),
    ESRI_2X2.replace("nrows 2\n", ""),
    "",
])
def test_esri_rejects_bad_header(text):
    with pytest.raises(HeightmapError):
        load_heightmap(text)


def test_csv_names_bad_cell():
    with pytest.raises(HeightmapError) as ei:
        load_heightmap("1,2,3\n4,x5,6\n", fmt="csv")
    assert (ei.value.row, ei.value.col) == (1, 1)
    assert "row 1" in str(ei.value) and "col 1" in str(ei.value)


def test_csv_parse_and_ragged():
    g = load_heightmap("1,2\n3,4\n", fmt="csv", cell_size=10.0, origin=(5.0, 6.0))
    assert (g.n_rows, g.n_cols, g.cell_size, g.origin_x, g.origin_y) == (2, 2, 10.0, 5.0, 6.0)
    with pytest.raises(HeightmapError):
        load_heightmap("1,2\n3\n", fmt="csv")
    with pytest.raises(HeightmapError):
        load_heightmap("\n", fmt="csv")


def test_esri_round_trip(rng):
    g = HeightGrid(10.5, -3.0, 2.5, 4, 3, rng.normal(3000, 200, 12))
    back = load_heightmap(write_esri_ascii(g))
    assert (back.origin_x, back.origin_y, back.cell_size, back.n_rows, back.n_cols) == (10.5, -3.0, 2.5, 4, 3)
    np.testing.assert_array_equal(back.values, g.values)


def test_grid_orientation():
    # row 0 is the top (largest y)
    g = HeightGrid(0.0, 0.0, 1.0, 2, 1, [0.0, 0.0])
    xs, ys = g.cell_centers()
    assert ys[0] > ys[1] and xs[0] == 0.5


# ------------------------------------------------------------------ fitting


def test_fit_one_bump_noiseless():
    truth = TerrainModel(((120.0, 640.0, 510.0, 130.0, 90.0),), 500.0)
    grid = HeightGrid.from_model(truth, 0.0, 0.0, 20.0, 60, 60)
    model, rmse = fit_gaussians(grid, 1)
    assert model.n_components == 1
    assert rmse <= 1e-3
    assert rmse == pytest.approx(grid_rmse(model, grid))


def test_fit_constant_grid():
    grid = HeightGrid(0.0, 0.0, 30.0, 8, 9, np.full(72, 4321.0))
    model, rmse = fit_gaussians(grid, 1)
    assert model.base == pytest.approx(4321.0)
    assert rmse == pytest.approx(0.0, abs=1e-9)


def test_fit_zero_grid_gives_flat_bumps():
    grid = HeightGrid(0.0, 0.0, 30.0, 5, 5, np.zeros(25))
    model, rmse = fit_gaussians(grid, 3)
    assert model.n_components == 3
    assert np.all(model.params[:, 0] == 0.0)
    assert rmse == 0.0


def test_fit_deterministic_and_no_worse_than_start(rng):
    truth = random_model(rng, 4, (0, 2000, 0, 2000), sigma_range=(150, 300), base=100.0)
    grid = HeightGrid.from_model(truth, 0.0, 0.0, 50.0, 40, 40)
    cfg = FitConfig(max_nfev=50)
    m1, r1 = fit_gaussians(grid, 4, cfg, seed=3)
    m2, r2 = fit_gaussians(grid, 4, cfg, seed=3)
    assert r1 == r2 and m1 == m2
    start = TerrainModel((), float(grid.values.min()))
    assert r1 <= grid_rmse(start, grid)


def test_fit_rejects_zero_components():
    grid = HeightGrid(0.0, 0.0, 1.0, 2, 2, np.zeros(4))
    with pytest.raises(ValueError):
        fit_gaussians(grid, 0)
