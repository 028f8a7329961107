import numpy as np
import pytest

from geoprior.raster import GeometryError, Grid
from geoprior.tabular import (FeatureTable, TableError, assemble_feature_table, read_feature_csv,
                              write_feature_csv, zonal_statistics)


def test_zonal_mean_simple():
    r = Grid(np.array([[2.0, 4.0, 6.0]]))
    su = Grid(np.array([[1.0, 1.0, 1.0]]))
    assert zonal_statistics(r, su, "mean").columns["mean"].tolist() == [4.0]


def test_circular_mean_wraps():
    r = Grid(np.array([[350.0, 10.0]]))
    su = Grid(np.array([[1.0, 1.0]]))
    out = zonal_statistics(r, su, "circular_mean_deg").columns["circular_mean_deg"][0]
    assert min(out, 360.0 - out) == pytest.approx(0.0, abs=1e-9)


def test_zonal_unknown_stat_and_geometry():
    r = Grid(np.zeros((2, 2)))
    with pytest.raises(TableError):
        zonal_statistics(r, r, "median")
    with pytest.raises(GeometryError):
        zonal_statistics(r, Grid(np.zeros((2, 2)), cellsize=3.0), "mean")


def test_zonal_matches_groupby(rng):
    vals = rng.normal(0, 100, (25, 25))
    vals[rng.random((25, 25)) < 0.1] = -9999.0
    lab = rng.integers(0, 15, (25, 25)).astype(float)  # 0 means "no unit"
    r, su = Grid(vals), Grid(lab)
    for stat in ("mean", "std", "max", "min", "circular_mean_deg"):
        t = zonal_statistics(r, su, stat)
        for sid, got in zip(t.su_id, t.columns[stat]):
            x = vals[(lab == sid) & (vals != -9999.0)]
            if stat == "circular_mean_deg":
                rad = np.radians(x)
                want = np.degrees(np.arctan2(np.sin(rad).mean(), np.cos(rad).mean())) % 360
            else:
                want = {"mean": np.mean, "std": np.std, "max": np.max, "min": np.min}[stat](x)
            assert got == pytest.approx(want, abs=1e-10)


def test_zonal_constant_raster():
    lab = Grid(np.arange(12, dtype=float).reshape(3, 4) % 4 + 1)
    t = zonal_statistics(Grid(np.full((3, 4), 3.5)), lab, "mean")
    assert np.all(t.columns["mean"] == 3.5)


def _t(ids, **cols):
    return FeatureTable(np.array(ids), {k: np.array(v, float) for k, v in cols.items()})


def test_table_validation():
    with pytest.raises(TableError, match="duplicate su_id 2"):
        _t([1, 2, 2], a=[1, 2, 3])
    with pytest.raises(TableError):
        _t([1, 2], a=[1])
    with pytest.raises(TableError):
        FeatureTable(np.array([1]), {}, np.array([2]))


def test_assemble_gpk_only_with_labels():
    gpk = _t([1, 2, 3], gpk=[0.1, 0.2, 0.3])
    lab = FeatureTable(np.array([3, 2, 1]), {}, np.array([1, 0, 1]))
    t = assemble_feature_table(gpk, [], lab)
    assert t.names == ["gpk"]
    assert t.su_id.tolist() == [1, 2, 3] and t.label.tolist() == [1, 0, 1]
    assert t.meta["dropped_rows"] == 0


def test_assemble_drops_missing_row():
    gpk = _t([1, 2, 3], gpk=[0.1, 0.2, 0.3])
    cov = _t([1, 3], slope=[10, 30])
    t = assemble_feature_table(gpk, [("slope_mean", cov)])
    assert t.su_id.tolist() == [1, 3] and t.names == ["gpk", "slope_mean"]
    assert t.meta["dropped_rows"] == 1


def test_assemble_drops_nan_rows_and_rejects_duplicates():
    gpk = _t([1, 2], gpk=[0.1, 0.2])
    t = assemble_feature_table(gpk, [("x", _t([1, 2], x=[np.nan, 1.0]))])
    assert t.su_id.tolist() == [2] and t.meta["dropped_rows"] == 1
    with pytest.raises(TableError):
        assemble_feature_table(gpk, [("x", _t([1, 2], a=[1, 2])), ("x", _t([1, 2], b=[1, 2]))])


def test_assemble_order_independent(rng):
    gpk = _t(range(1, 21), gpk=rng.random(20))
    a = _t(rng.permutation(np.arange(1, 21))[:15], a=rng.random(15))
    b = _t(rng.permutation(np.arange(1, 21))[:17], b=rng.random(17))
    t1 = assemble_feature_table(gpk, [("a", a), ("b", b)])
    t2 = assemble_feature_table(gpk, [("b", b), ("a", a)])
    np.testing.assert_array_equal(t1.su_id, t2.su_id)
    for k in ("a", "b", "gpk"):
        np.testing.assert_array_equal(t1.columns[k], t2.columns[k])
    assert len(t1) <= min(len(gpk), len(a), len(b))


def test_read_csv_values(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("su_id,x,label\n1,0.5,1\n2,NA,0\n")
    t = read_feature_csv(p, "label")
    assert t.su_id.tolist() == [1, 2] and t.label.tolist() == [1, 0]
    assert t.columns["x"][0] == 0.5 and np.isnan(t.columns["x"][1])


@pytest.mark.parametrize("body, msg", [
    ("su_id,x,label\n1,0.5,2\n", "row 2: label"),
    ("su_id,x,label\n1,0.5,1\n2,abc,0\n", "row 3, column 'x'"),
    ("id,x\n1,2\n", "missing 'su_id'"),
    ("su_id,x,label\n1,0.5\n", "row 2 has 2 fields"),
])
def test_read_csv_errors(tmp_path, body, msg):
    p = tmp_path / "t.csv"
    p.write_text(body)
    with pytest.raises(TableError, match=msg):
        read_feature_csv(p, "label")


def test_csv_round_trip(tmp_path, rng):
    for k in range(20):
        n = int(rng.integers(1, 30))
        cols = {f"c{j}": rng.normal(size=n) for j in range(int(rng.integers(0, 4)))}
        t = FeatureTable(rng.permutation(1000)[:n], cols, rng.integers(0, 2, n))
        write_feature_csv(t, tmp_path / "r.csv")
        back = read_feature_csv(tmp_path / "r.csv", "label")
        np.testing.assert_array_equal(back.su_id, t.su_id)
        np.testing.assert_array_equal(back.label, t.label)
        assert back.names == t.names
        for c in t.names:
            np.testing.assert_array_equal(back.columns[c], t.columns[c])
