"""Parsing, validation and persistence of raw datasets in the two CSV schemas.

Two layouts are supported:

* ``single_long``: header ``Datetime,Value`` (``Load`` is accepted as a
  historical alias for the value column), one row per observation.
* ``multiple_wide``: columns ``Index, Date, ID, [Timeseries ID]`` followed
  by one time column per intraday slot (``00:00:00`` ... ``24:00 - resolution``),
  one row per component per date.

Rows missing from an otherwise regular grid are filled with missing
values so that parsed datasets always live on a contiguous grid.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Optional, Union

from .core import (
    DatasetKind,
    Resolution,
    SeriesComponent,
    TimeSeriesDataset,
    regular_grid,
    validate_dataset,
)

MISSING_TOKENS = {"", "nan", "null", "none", "na"}


class CsvLayout(str, Enum):
    SINGLE_LONG = "single_long"
    MULTIPLE_WIDE = "multiple_wide"


@dataclass(frozen=True)
class CsvFormat:
    layout: CsvLayout
    day_first: bool = False


class IngestError(ValueError):
    """Raised when a CSV file does not follow the required schema."""


def _parse_value(cell: str, line_no: int) -> Optional[float]:
    cell = cell.strip()
    if cell.lower() in MISSING_TOKENS:
        return None
    try:
        return float(cell)
    except ValueError:
        raise IngestError(f"value parse error at line {line_no}: {cell!r}") from None


_SLASH_DATE = re.compile(r"^(\d{1,2})/(\d{1,2})/(\d{4})(?:[ T](\d{2}):(\d{2})(?::(\d{2}))?)?$")
_ISO_DATE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})(?:[ T](\d{2}):(\d{2})(?::(\d{2}))?)?$")


def parse_datetime(cell: str, day_first: bool) -> datetime:
    """Parse ``YYYY-MM-DD[ HH:MM[:SS]]`` always, plus ``DD/MM/YYYY`` when
    day_first and ``MM/DD/YYYY`` otherwise."""
    cell = cell.strip()
    m = _ISO_DATE.match(cell)
    if m:
        y, mo, d, hh, mm, ss = m.groups()
    else:
        m = _SLASH_DATE.match(cell)
        if not m:
            raise IngestError(f"unparsable date: {cell!r}")
        a, b, y2, hh, mm, ss = m.groups()
        y = y2
        d, mo = (a, b) if day_first else (b, a)
    try:
        return datetime(
            int(y), int(mo), int(d), int(hh or 0), int(mm or 0), int(ss or 0)
        )
    except ValueError as exc:
        raise IngestError(f"unparsable date: {cell!r} ({exc})") from None


def _fill_grid(
    rows: list[tuple[datetime, Optional[float]]], resolution: Resolution, origin: str
) -> tuple[tuple[datetime, ...], tuple[Optional[float], ...]]:
    """Reindex parsed points onto the contiguous grid spanning them."""
    step = resolution.delta
    start, end = rows[0][0], rows[-1][0]
    lookup = dict(rows)
    n = int((end - start) / step) + 1
    grid = regular_grid(start, n, resolution)
    for t in lookup:
        if (t - start) % step != timedelta(0):
            raise IngestError(f"time grid error in {origin}: {t} is off-grid")
    return grid, tuple(lookup.get(t) for t in grid)


def parse_single_csv(
    text: str, day_first: bool, resolution: Resolution, kind: DatasetKind = DatasetKind.TARGET
) -> TimeSeriesDataset:
    """Parse the single-series long layout into a one-component dataset."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("empty") from None
    header = [h.strip() for h in header]
    # "Load" is a historical alias for the value column; both are accepted.
    if len(header) != 2 or header[0] != "Datetime" or header[1] not in ("Value", "Load"):
        raise IngestError("schema error: expected Datetime,Value")

    rows: list[tuple[datetime, Optional[float]]] = []
    prev: Optional[datetime] = None
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise IngestError(f"schema error: expected 2 columns at line {line_no}")
        try:
            t = parse_datetime(row[0], day_first)
        except IngestError:
            raise IngestError(f"date parse error at line {line_no}") from None
        if prev is not None and t <= prev:
            raise IngestError("dates not sorted")
        prev = t
        rows.append((t, _parse_value(row[1], line_no)))

    if not rows:
        raise IngestError("empty")
    timestamps, values = _fill_grid(rows, resolution, "single csv")
    comp = SeriesComponent("series", "series", timestamps, values)
    return TimeSeriesDataset((comp,), resolution, multiple=False, kind=kind)


def _expected_time_columns(resolution: Resolution) -> list[str]:
    out = []
    for slot in resolution.day_slots():
        total = int(slot.total_seconds())
        out.append(f"{total // 3600:02d}:{total % 3600 // 60:02d}:{total % 60:02d}")
    return out


def parse_wide_csv(
    text: str,
    day_first: bool,
    resolution: Resolution,
    kind: DatasetKind = DatasetKind.TARGET,
    multiple: bool = True,
) -> TimeSeriesDataset:
    """Parse the wide layout: one row per component per date, one column
    per intraday slot. Leading and trailing missing cells of each
    component are trimmed (the layout cannot distinguish absent data from
    missing observations at the edges)."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise IngestError("empty") from None

    expected_times = _expected_time_columns(resolution)
    meta_allowed = ["Index", "Date", "ID", "Timeseries ID"]
    meta_cols = [h for h in header if h in meta_allowed]
    time_cols = [h for h in header if h not in meta_allowed]
    unknown = [h for h in time_cols if h not in expected_times]
    if unknown:
        if all(re.match(r"^\d{2}:\d{2}(:\d{2})?$", h) for h in unknown):
            raise IngestError(
                f"time grid error: expected {len(expected_times)} time columns "
                f"starting at 00:00:00 with step {resolution.minutes} min"
            )
        raise IngestError(f"schema error: unknown column name(s) {unknown}")
    if "Date" not in meta_cols or "ID" not in meta_cols:
        raise IngestError("schema error: Date and ID columns are required")
    if time_cols != expected_times:
        raise IngestError(
            f"time grid error: expected {len(expected_times)} time columns "
            f"starting at 00:00:00 with step {resolution.minutes} min"
        )

    idx = {h: i for i, h in enumerate(header)}
    has_ts_id = "Timeseries ID" in idx
    per_component: dict[str, dict] = {}
    seen_rows: set[tuple[str, str]] = set()
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise IngestError(f"schema error: wrong column count at line {line_no}")
        try:
            date = parse_datetime(row[idx["Date"]], day_first)
        except IngestError:
            raise IngestError(f"date parse error at line {line_no}") from None
        comp_id = row[idx["ID"]].strip()
        if not comp_id:
            raise IngestError(f"schema error: empty ID at line {line_no}")
        key = (row[idx["Date"]].strip(), comp_id)
        if key in seen_rows:
            raise IngestError(f"duplicate row for (Date, ID) = {key}")
        seen_rows.add(key)
        ts_id = row[idx["Timeseries ID"]].strip() if has_ts_id else comp_id
        entry = per_component.setdefault(comp_id, {"timeseries_id": ts_id, "rows": []})
        for col, slot in zip(expected_times, resolution.day_slots()):
            entry["rows"].append((date + slot, _parse_value(row[idx[col]], line_no)))

    if not per_component:
        raise IngestError("empty")

    components = []
    for comp_id, entry in per_component.items():
        rows = sorted(entry["rows"], key=lambda r: r[0])
        # trim edge missing values introduced by whole-day rows
        lo, hi = 0, len(rows)
        while lo < hi and rows[lo][1] is None:
            lo += 1
        while hi > lo and rows[hi - 1][1] is None:
            hi -= 1
        rows = rows[lo:hi]
        if not rows:
            raise IngestError(f"component {comp_id} has no observed values")
        timestamps, values = _fill_grid(rows, resolution, f"component {comp_id}")
        components.append(
            SeriesComponent(comp_id, entry["timeseries_id"], timestamps, values)
        )
    return TimeSeriesDataset(tuple(components), resolution, multiple=multiple, kind=kind)


def _format_value(v: Optional[float]) -> str:
    if v is None:
        return ""
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def write_wide_csv(ds: TimeSeriesDataset) -> str:
    """Serialize to the wide layout; parse_wide_csv(write_wide_csv(ds)) == ds
    for datasets whose components start and end on observed values."""
    expected_times = _expected_time_columns(ds.resolution)
    slots = ds.resolution.day_slots()
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["Index", "Date", "ID", "Timeseries ID"] + expected_times)
    index = 0
    for comp in ds.components:
        lookup = dict(zip(comp.timestamps, comp.values))
        if not lookup:
            continue
        day = comp.timestamps[0].replace(hour=0, minute=0, second=0)
        last = comp.timestamps[-1]
        while day <= last:
            cells = [_format_value(lookup.get(day + s)) for s in slots]
            writer.writerow(
                [index, day.strftime("%Y-%m-%d"), comp.id, comp.timeseries_id] + cells
            )
            index += 1
            day += timedelta(days=1)
    return out.getvalue()


def parse_dataset(
    text: str, fmt: CsvFormat, resolution: Resolution, kind: DatasetKind = DatasetKind.TARGET
) -> TimeSeriesDataset:
    if fmt.layout is CsvLayout.SINGLE_LONG:
        return parse_single_csv(text, fmt.day_first, resolution, kind)
    return parse_wide_csv(text, fmt.day_first, resolution, kind)


def read_source(source: Union[str, Path, bytes]) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    try:
        return Path(source).read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"io error: {exc}") from exc


def load_raw_data(
    source: Union[str, Path, bytes],
    fmt: CsvFormat,
    resolution: Resolution,
    store,
    experiment: str,
    kind: DatasetKind = DatasetKind.TARGET,
    multiple: Optional[bool] = None,
    parent_run_id: Optional[str] = None,
    run_params: Optional[dict] = None,
):
    """Parse + validate a raw file and persist the canonical wide CSV as a
    tracked artifact. Returns (dataset, run record)."""
    from . import tracking

    tracking.create_experiment(store, experiment)
    run = tracking.start_run(
        store, experiment, stage="load", parent_run_id=parent_run_id, params=run_params
    )
    try:
        text = read_source(source)
        ds = parse_dataset(text, fmt, resolution, kind)
        if multiple is not None and multiple != ds.multiple:
            ds = TimeSeriesDataset(ds.components, ds.resolution, multiple, ds.kind)
        report = validate_dataset(ds)
        if not report.ok:
            raise IngestError("; ".join(report.violations))
        tracking.log_param(store, run, "resolution", str(resolution.minutes))
        tracking.log_param(store, run, "multiple", str(ds.multiple).lower())
        tracking.log_param(store, run, "n_components", str(len(ds.components)))
        tracking.log_param(store, run, "series_len", str(max(len(c) for c in ds.components)))
        tracking.log_artifact_text(store, run, "series.csv", write_wide_csv(ds))
        run = tracking.end_run(store, run, "FINISHED")
        return ds, run
    except Exception as exc:
        tracking.log_param(store, run, "error", str(exc))
        tracking.end_run(store, run, "FAILED")
        raise
