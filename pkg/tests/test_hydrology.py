import numpy as np
import pytest

from geoprior.hydrology import (FlowField, RoutingError, d8_flow_direction, extract_streams,
                                fill_depressions, flow_accumulation)
from geoprior.raster import GeometryError, Grid

from .conftest import random_dem
from .oracles import contributing_sets, downstream_path


def east_dipping(n=8, g=0.1, r=10.0):
    x = (np.arange(n) + 0.5) * r
    return Grid(np.tile(1000.0 - g * x, (n, 1)), cellsize=r)


def _edge(valid, i, j):
    nr, nc = valid.shape
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            a, b = i + di, j + dj
            if not (0 <= a < nr and 0 <= b < nc) or not valid[a, b]:
                return True
    return False


def test_fill_plane_unchanged():
    dem = east_dipping()
    np.testing.assert_array_equal(fill_depressions(dem).values, dem.values)


def test_fill_single_pit():
    z = np.full((3, 3), 10.0)
    z[1, 1] = 5.0
    out = fill_depressions(Grid(z), epsilon=1e-5)
    assert out.values[1, 1] == 10.0 + 1e-5
    assert np.all(out.values[[0, 0, 0, 2, 2, 2, 1, 1], [0, 1, 2, 0, 1, 2, 0, 2]] == 10.0)


def test_fill_requires_valid_cells():
    with pytest.raises(ValueError):
        fill_depressions(Grid(np.full((3, 3), -9999.0)))


def test_fill_never_lowers_and_drains(rng):
    for k in range(100):
        dem = random_dem(rng, 64 if k < 10 else 24, holes=k % 3 == 0)
        filled = fill_depressions(dem)
        v = dem.valid
        assert np.all(filled.values[v] >= dem.values[v])
        np.testing.assert_array_equal(filled.valid, v)
        flow = d8_flow_direction(filled)
        # every valid cell walks a strictly descending path to an edge cell
        z = filled.values
        for i, j in zip(*np.nonzero(v)):
            if (i * 7 + j) % 5:
                continue  # a subsample keeps the walk affordable
            path = downstream_path(flow.dirs, i, j)
            assert all(z[a] > z[b] for a, b in zip(path, path[1:]))
            assert _edge(v, *path[-1])


def test_d8_plane_points_east():
    flow = d8_flow_direction(east_dipping())
    assert np.all(flow.dirs[:, :-1] == 1)
    assert np.all(flow.dirs[:, -1] == 0)


def test_d8_tie_prefers_east():
    z = np.full((3, 3), 10.0)
    z[1, 1] = 5.0
    z[1, 2] = 4.0
    z[2, 1] = 4.0
    z[2, 2] = 4.0 + 0.5 * np.sqrt(2) * 10  # diagonal drop smaller
    flow = d8_flow_direction(Grid(z, cellsize=1.0))
    assert flow.dirs[1, 1] == 1


def test_d8_unfilled_pit_raises():
    z = np.full((5, 5), 10.0)
    z[2, 2] = 1.0
    with pytest.raises(RoutingError):
        d8_flow_direction(Grid(z))


def test_d8_acyclic(rng):
    for _ in range(20):
        flow = d8_flow_direction(fill_depressions(random_dem(rng, 32, holes=True)))
        for i, j in zip(*np.nonzero(flow.valid)):
            downstream_path(flow.dirs, i, j, limit=flow.dirs.size)


def test_facc_plane_column_index():
    facc = flow_accumulation(d8_flow_direction(east_dipping(10)))
    np.testing.assert_array_equal(facc.values, np.tile(np.arange(10.0), (10, 1)))


def test_weights_one_match_unweighted(rng):
    flow = d8_flow_direction(fill_depressions(random_dem(rng, 32, holes=True)))
    ones = flow.grid.like(np.ones(flow.dirs.shape), flow.valid)
    a = flow_accumulation(flow)
    b = flow_accumulation(flow, ones)
    np.testing.assert_array_equal(a.values, b.values)


def test_facc_matches_path_trace(rng):
    for k in range(30):
        dem = random_dem(rng, 32, holes=k % 2 == 0)
        flow = d8_flow_direction(fill_depressions(dem))
        w = rng.uniform(0, 5, dem.shape)
        facc = flow_accumulation(flow)
        faw = flow_accumulation(flow, dem.like(w, dem.valid))
        up = contributing_sets(flow.dirs, flow.valid)
        for cell, srcs in up.items():
            assert facc.values[cell] == len(srcs)
            assert faw.values[cell] == pytest.approx(sum(w[s] for s in srcs), abs=1e-9)


def test_outlets_account_for_every_cell(rng):
    for _ in range(20):
        dem = random_dem(rng, 32, holes=True)
        flow = d8_flow_direction(fill_depressions(dem))
        facc = flow_accumulation(flow)
        outlets = flow.valid & (flow.dirs == 0)
        assert (facc.values[outlets] + 1).sum() == flow.valid.sum()


def test_weight_nodata_propagates_downstream():
    flow = d8_flow_direction(east_dipping(6))
    w = np.ones((6, 6))
    w[2, 1] = -9999.0
    out = flow_accumulation(flow, Grid(w, cellsize=10.0))
    assert out.valid[2, :2].all()
    assert not out.valid[2, 2:].any()
    assert out.valid[[0, 1, 3, 4, 5]].all()


def test_weight_geometry_mismatch():
    flow = d8_flow_direction(east_dipping(6))
    with pytest.raises(GeometryError):
        flow_accumulation(flow, Grid(np.ones((6, 6)), cellsize=5.0))


def test_streams_threshold_one_on_plane():
    facc = flow_accumulation(d8_flow_direction(east_dipping(8)))
    s = extract_streams(facc, 1)
    assert not s[:, 0].any() and s[:, 1:].all()


def test_streams_empty_above_max_and_monotone(rng):
    facc = flow_accumulation(d8_flow_direction(fill_depressions(random_dem(rng, 32))))
    assert not extract_streams(facc, facc.values.max() + 1).any()
    for t in (1, 3, 10, 50):
        hi, lo = extract_streams(facc, t * 2), extract_streams(facc, t)
        assert np.all(~hi | lo)


def test_flowfield_round_trip(rng):
    flow = d8_flow_direction(fill_depressions(random_dem(rng, 24, holes=True)))
    back = FlowField.from_grid(flow.to_grid())
    np.testing.assert_array_equal(back.dirs, flow.dirs)


def test_from_grid_rejects_cycle():
    codes = np.array([[1.0, 16.0], [0.0, 0.0]])
    with pytest.raises(RoutingError):
        FlowField.from_grid(Grid(codes))
