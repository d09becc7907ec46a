from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings, strategies as st

from tsfops.core import Resolution, SeriesComponent, TimeSeriesDataset, regular_grid
from tsfops.ingest import (
    CsvFormat,
    CsvLayout,
    IngestError,
    parse_datetime,
    parse_single_csv,
    parse_wide_csv,
    write_wide_csv,
)

from conftest import HOURLY, single_csv

# sample rows matching the documented single-series hourly format
SINGLE_SAMPLE = (
    "Datetime,Value\n"
    "2015-04-09 00:00:00,7893\n"
    "2015-04-09 01:00:00,8023\n"
    "2015-04-09 02:00:00,8572\n"
)


def wide_sample():
    times = ",".join(f"{h:02d}:00:00" for h in range(24))
    pt = ",".join(str(5248 + h) for h in range(24))
    es = ",".join(str(25497 + h) for h in range(24))
    return (
        f"Index,Date,ID,Timeseries ID,{times}\n"
        f"0,2015-04-09,PT,PT,{pt}\n"
        f"1,2015-04-09,ES,ES,{es}\n"
    )


def test_single_sample_values():
    ds = parse_single_csv(SINGLE_SAMPLE, day_first=False, resolution=HOURLY)
    comp = ds.components[0]
    assert comp.timestamps[0] == datetime(2015, 4, 9, 0, 0)
    assert comp.values == (7893.0, 8023.0, 8572.0)


def test_single_accepts_load_header_alias():
    text = SINGLE_SAMPLE.replace("Datetime,Value", "Datetime,Load")
    ds = parse_single_csv(text, day_first=False, resolution=HOURLY)
    assert ds.components[0].values[0] == 7893.0


def test_wide_sample_values():
    ds = parse_wide_csv(wide_sample(), day_first=False, resolution=HOURLY)
    pt = ds.component("PT")
    assert pt.timestamps[0] == datetime(2015, 4, 9)
    assert pt.values[0] == 5248.0
    assert ds.component("ES").values[0] == 25497.0
    assert ds.series_ids() == ["PT", "ES"]


def test_single_schema_error():
    with pytest.raises(IngestError, match="schema error"):
        parse_single_csv("Time,Load\n2020-01-01 00:00:00,1\n", False, HOURLY)


def test_single_date_parse_error_reports_line():
    text = "Datetime,Value\n2020-01-01 00:00:00,1\nnot-a-date,2\n"
    with pytest.raises(IngestError, match="date parse error at line 3"):
        parse_single_csv(text, False, HOURLY)


def test_single_unsorted_dates():
    text = (
        "Datetime,Value\n2020-01-02 00:00:00,1\n2020-01-01 00:00:00,2\n"
    )
    with pytest.raises(IngestError, match="dates not sorted"):
        parse_single_csv(text, False, HOURLY)


def test_single_empty():
    with pytest.raises(IngestError, match="empty"):
        parse_single_csv("Datetime,Value\n", False, HOURLY)
    with pytest.raises(IngestError, match="empty"):
        parse_single_csv("", False, HOURLY)


def test_single_off_grid_timestamp():
    text = (
        "Datetime,Value\n2020-01-01 00:00:00,1\n2020-01-01 00:30:00,2\n"
    )
    with pytest.raises(IngestError, match="time grid error"):
        parse_single_csv(text, False, HOURLY)


def test_single_gap_becomes_missing():
    text = (
        "Datetime,Value\n2020-01-01 00:00:00,1\n2020-01-01 03:00:00,4\n"
    )
    ds = parse_single_csv(text, False, HOURLY)
    assert ds.components[0].values == (1.0, None, None, 4.0)


def test_day_first_parsing():
    assert parse_datetime("09/04/2015 13:00", day_first=True) == datetime(2015, 4, 9, 13)
    assert parse_datetime("09/04/2015 13:00", day_first=False) == datetime(2015, 9, 4, 13)
    with pytest.raises(IngestError):
        parse_datetime("31/31/2015", day_first=True)


def test_wide_duplicate_row():
    text = wide_sample() + "2,2015-04-09,PT,PT," + ",".join(["1"] * 24) + "\n"
    with pytest.raises(IngestError, match="duplicate row"):
        parse_wide_csv(text, False, HOURLY)


def test_wide_missing_time_columns():
    times = ",".join(f"{h:02d}:00:00" for h in range(23))  # one column short
    text = f"Index,Date,ID,{times}\n0,2020-01-01,A," + ",".join(["1"] * 23) + "\n"
    with pytest.raises(IngestError, match="time grid error"):
        parse_wide_csv(text, False, HOURLY)


def test_wide_unknown_column():
    text = "Index,Date,ID,Bogus\n"
    with pytest.raises(IngestError, match="schema error"):
        parse_wide_csv(text, False, HOURLY)


def test_wide_timeseries_id_defaults_to_id():
    times = ",".join(f"{h:02d}:00:00" for h in range(24))
    text = (
        f"Index,Date,ID,{times}\n"
        "0,2020-01-01,A," + ",".join(str(i) for i in range(24)) + "\n"
    )
    ds = parse_wide_csv(text, False, HOURLY)
    assert ds.component("A").timeseries_id == "A"


values_strategy = st.lists(
    st.one_of(st.none(), st.floats(-1e6, 1e6, allow_nan=False)), min_size=2, max_size=80
)


@settings(max_examples=60, deadline=None)
@given(values_strategy, st.sampled_from([60, 30, 15]))
def test_wide_round_trip(values, minutes):
    # observed endpoints, so edge trimming is a no-op
    values = [1.0] + values + [2.0]
    res = Resolution(minutes)
    comp = SeriesComponent(
        "A", "A", regular_grid(datetime(2020, 3, 1), len(values), res), tuple(values)
    )
    ds = TimeSeriesDataset((comp,), res, multiple=True)
    back = parse_wide_csv(write_wide_csv(ds), False, res)
    assert back.components[0].timestamps == comp.timestamps
    assert back.components[0].values == comp.values


def test_csv_format_layouts():
    assert CsvFormat(CsvLayout.SINGLE_LONG, True).day_first is True
    assert CsvLayout("multiple_wide") is CsvLayout.MULTIPLE_WIDE
