"""Pre-processing stage: year-range selection, outlier removal, imputation
and calendar covariate generation.

Outliers are detected per calendar (year, month) group: values further
than ``std_dev`` sample standard deviations from the group mean become
missing (a zero-variance group removes nothing). Missing runs are then
filled by a blend of linear interpolation and a historical average of
comparable past points; the blend weight decays exponentially with the
distance to the nearest observed value, so isolated holes are mostly
interpolated while the middle of long gaps leans on history.

The historical-comparability rule (which points count as "the same time
of week/year") is intentionally isolated in :func:`_historical_mask` so
it can be swapped out: the exposed cutoffs are ``wncutoff`` (distance in
week-fraction units, where one minute is 1/1440), ``ycutoff`` (years) and
``ydcutoff`` (circular day-of-year distance). Holiday timestamps are
treated as weekend-like days so holidays only match holidays or weekends.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from calendar import isleap
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    DatasetKind,
    Resolution,
    SeriesComponent,
    TimeSeriesDataset,
    slice_years,
)

logger = logging.getLogger(__name__)


class EtlError(ValueError):
    pass


@dataclass(frozen=True)
class EtlOptions:
    year_range: Optional[tuple[int, int]] = None
    std_dev: float = 4.5
    rmv_outliers: bool = True
    l_interpolation: bool = False
    a: float = 0.3
    wncutoff: float = 0.000694
    ycutoff: float = 3
    ydcutoff: float = 30
    max_gap: Optional[int] = 24  # None means unlimited
    country: str = "PT"
    time_covs: bool = False
    non_negative: bool = False
    allow_long_gaps: bool = False

    def __post_init__(self) -> None:
        if self.std_dev <= 0 or self.a <= 0:
            raise EtlError("std_dev and a must be positive")
        if min(self.wncutoff, self.ycutoff, self.ydcutoff) < 0:
            raise EtlError("cutoffs must be non-negative")
        if self.max_gap is not None and self.max_gap < 1:
            raise EtlError("max_gap must be positive (or None for unlimited)")


def load_holidays(path: str | Path, country: str) -> set[date]:
    """Read a ``country,date`` CSV and return the dates for one country."""
    rows = list(csv.reader(Path(path).read_text(encoding="utf-8").splitlines()))
    if rows and rows[0][:2] == ["country", "date"]:
        rows = rows[1:]
    by_country: dict[str, set[date]] = {}
    for row in rows:
        if len(row) < 2 or not row[0].strip():
            continue
        by_country.setdefault(row[0].strip(), set()).add(
            datetime.strptime(row[1].strip(), "%Y-%m-%d").date()
        )
    if country not in by_country:
        raise EtlError(f"unknown holiday calendar: {country}")
    return by_country[country]


def remove_outliers(
    comp: SeriesComponent, std_dev: float = 4.5, non_negative: bool = False
) -> tuple[SeriesComponent, int]:
    """Replace per-(year, month) outliers (and zeros when non_negative)
    with missing values. Returns the filtered component and the number of
    points removed."""
    values = list(comp.values)
    groups: dict[tuple[int, int], list[int]] = {}
    for i, t in enumerate(comp.timestamps):
        groups.setdefault((t.year, t.month), []).append(i)

    n_removed = 0
    for (year, month), idxs in groups.items():
        if non_negative:
            for i in idxs:
                if values[i] == 0:
                    values[i] = None
                    n_removed += 1
        observed = [(i, values[i]) for i in idxs if values[i] is not None]
        if len(observed) < 2:
            logger.warning(
                "component %s: month %04d-%02d has <2 observed points, skipped",
                comp.id, year, month,
            )
            continue
        arr = np.array([v for _, v in observed])
        mean = arr.mean()
        sd = arr.std(ddof=1)
        if sd == 0:
            continue
        for i, v in observed:
            if abs(v - mean) > std_dev * sd:
                values[i] = None
                n_removed += 1
    return comp.with_values(values), n_removed


def _missing_runs(missing: np.ndarray) -> list[tuple[int, int]]:
    """[start, end) index ranges of consecutive missing points."""
    runs = []
    i = 0
    n = len(missing)
    while i < n:
        if missing[i]:
            j = i
            while j < n and missing[j]:
                j += 1
            runs.append((i, j))
            i = j
        else:
            i += 1
    return runs


def _week_number(t: datetime, holidays: set[date]) -> float:
    """Day-of-week plus time-of-day fraction; holidays are mapped to
    weekend days (Friday holidays to Saturday, others to Sunday)."""
    wd = t.weekday()
    if t.date() in holidays:
        wd = 5 if wd == 4 else 6
    return wd + t.hour / 24 + t.minute / 1440


def _historical_mask(
    target: datetime,
    timestamps: Sequence[datetime],
    observed: np.ndarray,
    holidays: set[date],
    wncutoff: float,
    ycutoff: float,
    ydcutoff: float,
) -> np.ndarray:
    """Which observed points are historically comparable to ``target``.

    This is the single replaceable policy for the historical component of
    the imputer (see module docstring)."""
    wn_t = _week_number(target, holidays)
    yd_t = target.timetuple().tm_yday - 1
    mask = np.zeros(len(timestamps), dtype=bool)
    for i, s in enumerate(timestamps):
        if not observed[i]:
            continue
        if abs(_week_number(s, holidays) - wn_t) > wncutoff:
            continue
        if abs(s.year - target.year) > ycutoff:
            continue
        year_len = 365 + isleap(s.year)
        yd_s = s.timetuple().tm_yday - 1
        if min((yd_s - yd_t) % year_len, (yd_t - yd_s) % year_len) > ydcutoff:
            continue
        mask[i] = True
    return mask


def impute(
    comp: SeriesComponent,
    options: EtlOptions,
    holidays: Optional[set[date]] = None,
) -> tuple[SeriesComponent, int]:
    """Fill missing runs of length <= max_gap; longer runs stay missing.

    Observed points are never altered. With ``l_interpolation`` only plain
    linear interpolation is used; otherwise each hole gets
    ``w * linear + (1 - w) * historical`` with ``w = exp(-a * d)`` for
    distance ``d`` (steps) to the nearest observed value. Edge runs with
    no anchor on one side use the historical average alone when it exists.
    """
    holidays = holidays or set()
    n = len(comp)
    values = np.array([math.nan if v is None else v for v in comp.values], dtype=float)
    missing = np.isnan(values)
    if not missing.any():
        return comp, 0
    if missing.all():
        raise EtlError(f"component {comp.id} has no observed values")
    observed = ~missing

    max_gap = options.max_gap if options.max_gap is not None else n + 1
    runs = [(s, e) for s, e in _missing_runs(missing) if e - s <= max_gap]

    known_idx = np.flatnonzero(observed)
    linear = np.interp(np.arange(n), known_idx, values[known_idx])

    out = values.copy()
    n_imputed = 0
    for start, end in runs:
        has_left = start > 0
        has_right = end < n
        for i in range(start, end):
            d = min(
                i - start + 1 if has_left else n,
                end - i if has_right else n,
            )
            if options.l_interpolation:
                out[i] = linear[i]
                n_imputed += 1
                continue
            hist_mask = _historical_mask(
                comp.timestamps[i], comp.timestamps, observed, holidays,
                options.wncutoff, options.ycutoff, options.ydcutoff,
            )
            historical = values[hist_mask].mean() if hist_mask.any() else math.nan
            if not (has_left and has_right):
                # one-sided run: no interpolation anchor pair
                out[i] = historical if not math.isnan(historical) else linear[i]
            elif math.isnan(historical):
                out[i] = linear[i]
            else:
                w = math.exp(-options.a * d)
                out[i] = w * linear[i] + (1 - w) * historical
            n_imputed += 1

    result = comp.with_values([None if math.isnan(v) else float(v) for v in out])
    return result, n_imputed


CALENDAR_COVARIATES = ("hour", "dayofweek", "month", "weekend", "holiday")


def build_calendar_covariates(
    ds: TimeSeriesDataset,
    country: str = "",
    holidays: Optional[set[date]] = None,
) -> TimeSeriesDataset:
    """Future-known calendar covariates aligned to each series' grid."""
    holidays = holidays or set()
    components = []
    for series_id in ds.series_ids():
        ref = ds.series(series_id)[0]
        ts = ref.timestamps
        features = {
            "hour": [float(t.hour) for t in ts],
            "dayofweek": [float(t.weekday()) for t in ts],
            "month": [float(t.month) for t in ts],
            "weekend": [float(t.weekday() >= 5) for t in ts],
            "holiday": [float(t.date() in holidays) for t in ts],
        }
        for name in CALENDAR_COVARIATES:
            components.append(
                SeriesComponent(
                    id=f"{series_id}__{name}",
                    timeseries_id=series_id,
                    timestamps=ts,
                    values=tuple(features[name]),
                )
            )
    return TimeSeriesDataset(
        tuple(components), ds.resolution, multiple=ds.multiple,
        kind=DatasetKind.FUTURE_COVARIATES,
    )


def _trim_to_longest_span(comp: SeriesComponent) -> SeriesComponent:
    best = (0, 0)
    start = None
    for i, v in enumerate(list(comp.values) + [None]):
        if v is not None and start is None:
            start = i
        elif v is None and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    s, e = best
    return SeriesComponent(
        comp.id, comp.timeseries_id, comp.timestamps[s:e], comp.values[s:e]
    )


def imputation_plot_csv(original: SeriesComponent, imputed: SeriesComponent) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["timestamp", "original", "imputed"])
    for t, o, v in zip(original.timestamps, original.values, imputed.values):
        writer.writerow([
            t.strftime("%Y-%m-%d %H:%M:%S"),
            "" if o is None else repr(float(o)),
            "" if v is None else repr(float(v)),
        ])
    return out.getvalue()


def run_etl(
    store,
    experiment: str,
    upstream_run,
    options: EtlOptions,
    holidays_file: Optional[str | Path] = None,
    parent_run_id: Optional[str] = None,
    run_params: Optional[dict] = None,
):
    """ETL stage: slice -> remove outliers -> impute -> covariates, with
    artifacts and counters logged to a tracking run. Returns (cleaned
    dataset, covariates dataset or None, run record)."""
    from . import tracking
    from .ingest import parse_wide_csv, write_wide_csv

    run = tracking.start_run(
        store, experiment, stage="etl", parent_run_id=parent_run_id, params=run_params
    )
    try:
        series_path = tracking.artifact_path(store, upstream_run, "series.csv")
        resolution = Resolution(int(upstream_run.params.get("resolution", "60")))
        multiple = upstream_run.params.get("multiple", "false") == "true"
        ds = parse_wide_csv(
            series_path.read_text(encoding="utf-8"), day_first=False,
            resolution=resolution, multiple=multiple,
        )

        if options.year_range is not None:
            ds = slice_years(ds, *options.year_range)

        holidays: set[date] = set()
        if holidays_file is not None:
            holidays = load_holidays(holidays_file, options.country)

        total_removed = 0
        total_imputed = 0
        cleaned = []
        plots: dict[str, str] = {}
        for comp in ds.components:
            original = comp
            if options.rmv_outliers:
                comp, n_removed = remove_outliers(
                    comp, options.std_dev, options.non_negative
                )
                total_removed += n_removed
            comp, n_imputed = impute(comp, options, holidays)
            total_imputed += n_imputed
            plots[comp.id] = imputation_plot_csv(original, comp)
            if comp.n_missing:
                if not options.allow_long_gaps:
                    raise EtlError(
                        f"component {comp.id}: {comp.n_missing} points in gaps "
                        f"longer than max_gap={options.max_gap}; pass "
                        "allow_long_gaps to trim instead"
                    )
                comp = _trim_to_longest_span(comp)
            cleaned.append(comp)

        out_ds = TimeSeriesDataset(tuple(cleaned), ds.resolution, ds.multiple, ds.kind)
        covariates = None
        if options.time_covs:
            if holidays_file is None and options.country:
                logger.warning("time_covs without holidays file: holiday flag all zero")
            covariates = build_calendar_covariates(out_ds, options.country, holidays)

        tracking.log_params(store, run, {
            "resolution": resolution.minutes,
            "multiple": str(multiple).lower(),
            "n_removed": total_removed,
            "n_imputed": total_imputed,
        })
        tracking.log_metric(store, run, "n_removed", total_removed)
        tracking.log_metric(store, run, "n_imputed", total_imputed)
        tracking.log_artifact_text(store, run, "series.csv", write_wide_csv(out_ds))
        for comp_id, text in plots.items():
            tracking.log_artifact_text(store, run, f"imputation/{comp_id}.csv", text)
        if covariates is not None:
            tracking.log_artifact_text(
                store, run, "future_covariates.csv", write_wide_csv(covariates)
            )
        run = tracking.end_run(store, run, "FINISHED")
        return out_ds, covariates, run
    except Exception as exc:
        tracking.log_param(store, run, "error", str(exc))
        tracking.end_run(store, run, "FAILED")
        raise
