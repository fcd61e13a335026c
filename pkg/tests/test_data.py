import datetime
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajcnn.data import (
    FS_NYC_BBOX, GEOLIFE_BBOX, BoundingBox, Dataset, Trajectory, load_fs_csv, load_geolife,
    parse_plt_record, preprocess, split_folds, write_csv,
)
from trajcnn.errors import FormatError, ParseError

FS_DATA = os.environ.get("TRAJCNN_FS_CSV")


def _traj(tid, n, rng, bbox=FS_NYC_BBOX):
    lat = rng.uniform(bbox.lat_min, bbox.lat_max, n)
    lon = rng.uniform(bbox.lon_min, bbox.lon_max, n)
    return Trajectory(tid, np.column_stack([lat, lon, rng.integers(0, 7, n), rng.integers(0, 24, n)]))


def _dataset(n, rng, lengths=(1, 144)):
    return Dataset("t", [_traj(str(i), int(rng.integers(*lengths, endpoint=True)), rng) for i in range(n)], FS_NYC_BBOX)


def test_load_fs_csv_basic(tmp_path):
    p = tmp_path / "fs.csv"
    p.write_text("tid,lat,lon,day,hour,category\n1,40.70,-74.00,0,8,cafe\n1,40.71,-74.01,0,9,bar\n")
    ds = load_fs_csv(p)
    assert len(ds) == 1 and len(ds[0]) == 2
    np.testing.assert_array_equal(ds[0].points[1], [40.71, -74.01, 0, 9])


def test_load_fs_csv_groups_by_tid_in_file_order(tmp_path):
    p = tmp_path / "fs.csv"
    p.write_text("tid,lat,lon,day,hour\n7,40.7,-74.0,1,2\n3,40.7,-74.0,1,3\n7,40.8,-74.0,1,4\n")
    ds = load_fs_csv(p)
    assert [t.id for t in ds] == ["7", "3"]
    assert list(ds[0].hour) == [2, 4]


def test_load_fs_csv_header_only(tmp_path):
    p = tmp_path / "fs.csv"
    p.write_text("tid,lat,lon,day,hour\n")
    assert len(load_fs_csv(p)) == 0


def test_load_fs_csv_missing_column(tmp_path):
    p = tmp_path / "fs.csv"
    p.write_text("tid,lat,lon,hour\n1,40.7,-74.0,3\n")
    with pytest.raises(FormatError, match="day"):
        load_fs_csv(p)


def test_load_fs_csv_parse_error_row(tmp_path):
    p = tmp_path / "fs.csv"
    p.write_text("tid,lat,lon,day,hour\n1,40.7,-74.0,1,2\n1,abc,-74.0,1,3\n")
    with pytest.raises(ParseError) as e:
        load_fs_csv(p)
    assert e.value.row == 3


def test_csv_round_trip(tmp_path):
    ds = _dataset(5, np.random.default_rng(0))
    write_csv(ds, tmp_path / "x.csv")
    back = load_fs_csv(tmp_path / "x.csv")
    assert [t.id for t in back] == [t.id for t in ds]
    for a, b in zip(ds, back):
        np.testing.assert_array_equal(a.points, b.points)


def test_parse_plt_record():
    p = parse_plt_record("39.90,116.40,0,120,39900.5,2009-03-28,14:02:10")
    assert p.lat == 39.90 and p.lon == 116.40
    assert p.day == datetime.date(2009, 3, 28).weekday()
    assert p.hour == 14


def _write_plt(path, records):
    header = ["Geolife trajectory", "WGS 84", "Altitude is in Feet", "Reserved 3",
              "0,2,255,My Track,0,0,2,8421376", "0"]
    path.write_text("\n".join(header + records) + "\n")


def test_load_geolife_two_files(tmp_path):
    for user in ("000", "001"):
        d = tmp_path / user / "Trajectory"
        d.mkdir(parents=True)
        recs = [f"39.9{i},116.3{i},0,100,39900.5,2009-03-2{i % 7 + 1},1{i}:00:00" for i in range(10)]
        _write_plt(d / "20090301.plt", recs)
    ds = load_geolife(tmp_path)
    assert len(ds) == 2 and all(len(t) == 10 for t in ds)


def test_load_geolife_skips_malformed(tmp_path):
    d = tmp_path / "000" / "Trajectory"
    d.mkdir(parents=True)
    _write_plt(d / "a.plt", ["39.9,116.4,0,1,1,2009-03-28,14:02:10", "garbage", "39.9,116.4,0,1,1,2009-13-99,14:00:00",
                             "39.91,116.41,0,1,1,2009-03-28,15:02:10"])
    ds = load_geolife(tmp_path)
    assert len(ds) == 1 and len(ds[0]) == 2


def test_preprocess_truncates():
    t = _traj("a", 200, np.random.default_rng(1))
    out = preprocess(Dataset("x", [t], FS_NYC_BBOX), FS_NYC_BBOX, 144)
    np.testing.assert_array_equal(out[0].points, t.points[:144])


def test_preprocess_min_len_and_outside():
    rng = np.random.default_rng(2)
    short = _traj("short", 95, rng, GEOLIFE_BBOX)
    ok = _traj("ok", 100, rng, GEOLIFE_BBOX)
    outside = Trajectory("out", np.array([[0.0, 0.0, 1, 1]] * 120))
    out = preprocess(Dataset("g", [short, ok, outside], GEOLIFE_BBOX), GEOLIFE_BBOX, 144, 96)
    assert [t.id for t in out] == ["ok"]


def test_preprocess_drops_points_not_trajectories():
    pts = np.array([[40.7, -74.0, 0, 1], [10.0, 10.0, 0, 2], [40.75, -74.0, 0, 3]])
    out = preprocess(Dataset("x", [Trajectory("a", pts)], FS_NYC_BBOX), FS_NYC_BBOX)
    assert list(out[0].hour) == [1, 3]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 144), st.integers(1, 50))
def test_preprocess_idempotent_and_inside(seed, max_len, n):
    rng = np.random.default_rng(seed)
    box = BoundingBox(40.70, 40.80, -74.05, -73.95)
    ds = _dataset(n, rng, (1, 200))
    once = preprocess(ds, box, max_len, 1)
    twice = preprocess(once, box, max_len, 1)
    assert [t.id for t in once] == [t.id for t in twice]
    assert all(a == b for a, b in zip(once, twice))
    for t in once:
        assert len(t) <= max_len
        assert np.all(box.contains(t.lat, t.lon))


def test_split_folds_sizes():
    ds = _dataset(10, np.random.default_rng(0))
    folds = split_folds(ds, 5, seed=1)
    assert [(len(tr), len(te)) for tr, te in folds] == [(8, 2)] * 5
    ds7 = _dataset(7, np.random.default_rng(0))
    assert [len(te) for _, te in split_folds(ds7, 5, 0)] == [2, 2, 1, 1, 1]


def test_split_folds_deterministic():
    ds = _dataset(23, np.random.default_rng(0))
    a = [[t.id for t in te] for _, te in split_folds(ds, 5, 9)]
    b = [[t.id for t in te] for _, te in split_folds(ds, 5, 9)]
    assert a == b


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(2, 10), st.integers(0, 1000))
def test_split_folds_partition(n, k, seed):
    if n < k:
        with pytest.raises(ValueError):
            split_folds(_dataset(n, np.random.default_rng(0)), k, seed)
        return
    ds = _dataset(n, np.random.default_rng(0), (1, 3))
    folds = split_folds(ds, k, seed)
    tests = [{t.id for t in te} for _, te in folds]
    assert set().union(*tests) == {t.id for t in ds}
    assert sum(len(s) for s in tests) == n
    sizes = [len(s) for s in tests]
    assert max(sizes) - min(sizes) <= 1
    for (tr, te), s in zip(folds, tests):
        assert {t.id for t in tr} == {t.id for t in ds} - s


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory("bad", np.array([[91.0, 0, 0, 0]]))
    with pytest.raises(ValueError):
        Trajectory("bad", np.array([[0.0, 0, 7, 0]]))
    with pytest.raises(ValueError):
        Trajectory("empty", np.zeros((0, 4)))
    with pytest.raises(ValueError):
        BoundingBox(1, 0, 0, 1)


@pytest.mark.skipif(not FS_DATA, reason="set TRAJCNN_FS_CSV to the Foursquare NYC CSV")
def test_fs_release_counts():
    ds = load_fs_csv(FS_DATA)
    assert len(ds) == 3079
    assert ds.lengths().max() == 144
