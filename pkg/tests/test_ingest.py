import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hotspot_shift.errors import GapError, SchemaError
from hotspot_shift.ingest import (
    AccidentRecord,
    AccidentSchema,
    MobilitySeries,
    StudyWindow,
    load_accidents,
    load_mobility,
    window_records,
)
from hotspot_shift.synthetic import write_mobility_csv

IDENTITY = AccidentSchema()


def _csv(tmp_path, text, name="acc.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_single_row_identity_schema(tmp_path):
    path = _csv(tmp_path, "timestamp,latitude,longitude\n2020-03-15,40.7580,-73.9855\n")
    records, rejected = load_accidents(path, IDENTITY)
    assert rejected == []
    (rec,) = records
    assert (rec.latitude, rec.longitude) == (40.7580, -73.9855)
    assert rec.date == dt.date(2020, 3, 15)
    assert rec.timestamp == dt.datetime(2020, 3, 15, 0, 0)


def test_latitude_out_of_range_is_rejected(tmp_path):
    path = _csv(tmp_path, "timestamp,latitude,longitude\n2020-03-15,95.0,-73.9\n")
    records, rejected = load_accidents(path)
    assert records == []
    assert rejected[0].reason == "latitude out of range"
    assert rejected[0].line == 2


def test_longitude_out_of_range_is_rejected(tmp_path):
    path = _csv(tmp_path, "timestamp,latitude,longitude\n2020-03-15,40.0,-190.5\n")
    _, rejected = load_accidents(path)
    assert rejected[0].reason == "longitude out of range"


def test_five_row_fixture_with_one_bad_date(fixtures):
    schema = AccidentSchema.from_file(fixtures / "nyc_schema.cfg")
    records, rejected = load_accidents(fixtures / "accidents_5rows.csv", schema)
    assert len(records) == 4
    assert len(rejected) == 1
    assert rejected[0].line == 4
    assert "timestamp" in rejected[0].reason
    assert records[2].attributes == {"severity": "fatal, pedestrian", "age": "70"}
    assert records[1].timestamp == dt.datetime(2020, 3, 16, 8, 30)
    assert records[0].tz == "America/New_York"


def test_missing_mandatory_column(tmp_path):
    path = _csv(tmp_path, "date,latitude,longitude\n2020-03-15,40.0,-73.0\n")
    with pytest.raises(SchemaError, match="timestamp"):
        load_accidents(path)


def test_unreadable_file(tmp_path):
    with pytest.raises(OSError):
        load_accidents(tmp_path / "nope.csv")


def test_zone_tag_from_timestamp(tmp_path):
    path = _csv(tmp_path, "timestamp,latitude,longitude\n2020-03-15T10:00:00Z,40.0,-73.0\n")
    (rec,), _ = load_accidents(path)
    assert rec.tz == "UTC"
    assert rec.timestamp.tzinfo is not None


def test_custom_date_format(tmp_path):
    path = _csv(tmp_path, "d,lat,lon\n03/15/2020,40.0,-73.0\n")
    schema = AccidentSchema("d", "lat", "lon", date_format="%m/%d/%Y")
    (rec,), _ = load_accidents(path, schema)
    assert rec.date == dt.date(2020, 3, 15)


def test_load_is_deterministic(fixtures):
    schema = AccidentSchema.from_file(fixtures / "nyc_schema.cfg")
    a = load_accidents(fixtures / "accidents_5rows.csv", schema)
    b = load_accidents(fixtures / "accidents_5rows.csv", schema)
    assert a == b


def test_unknown_schema_key():
    with pytest.raises(SchemaError):
        AccidentSchema.from_mapping({"lattitude": "LAT"})


# -- mobility -----------------------------------------------------------------

START = dt.date(2020, 2, 1)


def test_mobility_mean_of_two_categories(tmp_path):
    path = write_mobility_csv(tmp_path / "m.csv", START, {"a": [-10, 0], "b": [-30, 0]})
    series = load_mobility(path, ["a", "b"])
    assert series.values[0] == -20
    assert series.source_categories == ("a", "b")


def test_mobility_single_category_identity(tmp_path):
    path = write_mobility_csv(tmp_path / "m.csv", START, {"a": [0, -5, -10]})
    series = load_mobility(path, ["a"])
    assert series.values.tolist() == [0, -5, -10]
    assert series.start_date == START


def test_mobility_gap_interpolated(tmp_path):
    path = write_mobility_csv(tmp_path / "m.csv", START, {"a": [0, 999, -10]}, skip_days=[1])
    series = load_mobility(path, ["a"], fill_policy="linear-interpolate")
    # linear interpolation oracle: midpoint of the neighbours
    assert series.values.tolist() == [0, (0 + -10) / 2, -10]


def test_mobility_gap_fails_by_default(tmp_path):
    path = write_mobility_csv(tmp_path / "m.csv", START, {"a": [0, 1, 2, 3]}, skip_days=[2])
    with pytest.raises(GapError, match="2020-02-03"):
        load_mobility(path, ["a"])


def test_mobility_blank_cell_is_a_gap(tmp_path):
    path = _csv(tmp_path, "date,a,b\n2020-02-01,1,2\n2020-02-02,,4\n2020-02-03,5,6\n", "m.csv")
    with pytest.raises(GapError):
        load_mobility(path, ["a", "b"])
    assert load_mobility(path, ["b"]).values.tolist() == [2, 4, 6]


def test_mobility_empty_category_list(tmp_path):
    path = write_mobility_csv(tmp_path / "m.csv", START, {"a": [0, 1]})
    with pytest.raises(ValueError):
        load_mobility(path, [])


def test_mobility_missing_category(tmp_path):
    path = write_mobility_csv(tmp_path / "m.csv", START, {"a": [0, 1]})
    with pytest.raises(SchemaError, match="transit"):
        load_mobility(path, ["transit"])


def test_mobility_series_is_immutable():
    series = MobilitySeries(START, [1.0, 2.0])
    with pytest.raises(ValueError):
        series.values[0] = 5.0


def test_mobility_series_needs_two_days():
    with pytest.raises(ValueError):
        MobilitySeries(START, [1.0])


@settings(max_examples=30, deadline=None)
@given(
    values=st.lists(st.integers(-100, 100), min_size=2, max_size=20),
    k=st.integers(1, 4),
)
def test_identical_columns_equal_single_column(tmp_path_factory, values, k):
    tmp = tmp_path_factory.mktemp("mob")
    cols = {f"c{i}": values for i in range(k)}
    path = write_mobility_csv(tmp / "m.csv", START, cols)
    combined = load_mobility(path, list(cols))
    single = load_mobility(path, ["c0"])
    np.testing.assert_array_equal(combined.values, single.values)


# -- windowing ----------------------------------------------------------------

CHANGE = dt.date(2020, 3, 13)


def _rec(offset_days, lat=40.0):
    return AccidentRecord(dt.datetime.combine(CHANGE + dt.timedelta(days=offset_days), dt.time()), lat, -73.0)


def test_window_boundaries():
    recs = [_rec(-31), _rec(-5), _rec(2), _rec(31)]
    before, after = window_records(recs, StudyWindow(CHANGE, 30, 30))
    assert before == [recs[1]]
    assert after == [recs[2]]


def test_window_edges_are_half_open():
    recs = [_rec(-30), _rec(-1), _rec(0), _rec(29), _rec(30)]
    before, after = window_records(recs, StudyWindow(CHANGE))
    assert before == recs[:2]
    assert after == recs[2:4]


def test_window_empty_input():
    assert window_records([], StudyWindow(CHANGE)) == ([], [])


def test_window_matches_brute_force_filter():
    rng = np.random.default_rng(3)
    offsets = rng.integers(-60, 60, 100)
    recs = [_rec(int(o), lat=float(i) / 10) for i, o in enumerate(offsets)]
    before, after = window_records(recs, StudyWindow(CHANGE, 30, 30))
    want_before = [r for r in recs if -30 <= (r.date - CHANGE).days <= -1]
    want_after = [r for r in recs if 0 <= (r.date - CHANGE).days <= 29]
    assert before == want_before
    assert after == want_after


def test_window_rejects_non_positive_lengths():
    with pytest.raises(ValueError):
        StudyWindow(CHANGE, 0, 30)


@given(
    offsets=st.lists(st.integers(-80, 80), max_size=60),
    days_before=st.integers(1, 40),
    days_after=st.integers(1, 40),
)
def test_window_partition_properties(offsets, days_before, days_after):
    recs = [_rec(o, lat=i * 0.001) for i, o in enumerate(offsets)]
    before, after = window_records(recs, StudyWindow(CHANGE, days_before, days_after))
    ids_b = {id(r) for r in before}
    ids_a = {id(r) for r in after}
    assert not ids_b & ids_a
    assert ids_b | ids_a <= {id(r) for r in recs}
    assert all(-days_before <= (r.date - CHANGE).days < 0 for r in before)
    assert all(0 <= (r.date - CHANGE).days < days_after for r in after)
    # order preserved
    assert before == [r for r in recs if id(r) in ids_b]
