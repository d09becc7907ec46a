"""Domain types, resolution arithmetic and dataset validation.

Everything here is an immutable value object: datasets can be shared
freely between stages and threads. Missing observations are explicit
``None`` entries in the value tuples, never sentinel numbers, so that
outlier removal and imputation compose cleanly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from enum import Enum
from typing import Iterable, Optional, Sequence

MINUTES_PER_DAY = 1440


class DatasetKind(str, Enum):
    TARGET = "target"
    PAST_COVARIATES = "past_covariates"
    FUTURE_COVARIATES = "future_covariates"


class CoreError(ValueError):
    """Raised for contract violations in core operations."""


def parse_date(value: str | datetime) -> datetime:
    """Parse a YYYYMMDD (or ISO) date string; YYYYMMDD means 00:00:00 of that day."""
    if isinstance(value, datetime):
        return value
    value = value.strip()
    for fmt in ("%Y%m%d", "%Y-%m-%d", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"):
        try:
            return datetime.strptime(value, fmt)
        except ValueError:
            continue
    raise CoreError(f"unparsable date: {value!r}")


@dataclass(frozen=True)
class Resolution:
    """Fixed spacing between consecutive observations, in minutes."""

    minutes: int

    def __post_init__(self) -> None:
        if self.minutes < 1:
            raise CoreError("resolution must be >= 1 minute")
        if MINUTES_PER_DAY % self.minutes != 0:
            raise CoreError(
                f"resolution {self.minutes} does not divide a day into whole slots"
            )

    @property
    def delta(self) -> timedelta:
        return timedelta(minutes=self.minutes)

    @property
    def slots_per_day(self) -> int:
        return MINUTES_PER_DAY // self.minutes

    def day_slots(self) -> list[timedelta]:
        return [timedelta(minutes=self.minutes * i) for i in range(self.slots_per_day)]


@dataclass(frozen=True)
class SeriesComponent:
    """One component of one time series on a fixed resolution grid."""

    id: str
    timeseries_id: str
    timestamps: tuple[datetime, ...]
    values: tuple[Optional[float], ...]

    def __post_init__(self) -> None:
        if len(self.timestamps) != len(self.values):
            raise CoreError(
                f"component {self.id}: {len(self.timestamps)} timestamps "
                f"vs {len(self.values)} values"
            )

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def n_missing(self) -> int:
        return sum(1 for v in self.values if v is None)

    def with_values(self, values: Sequence[Optional[float]]) -> "SeriesComponent":
        return replace(self, values=tuple(values))


@dataclass(frozen=True)
class TimeSeriesDataset:
    """One or more series, each with >=1 components, on a shared grid."""

    components: tuple[SeriesComponent, ...]
    resolution: Resolution
    multiple: bool = False
    kind: DatasetKind = DatasetKind.TARGET

    def __post_init__(self) -> None:
        if not isinstance(self.components, tuple):
            object.__setattr__(self, "components", tuple(self.components))

    def series_ids(self) -> list[str]:
        seen: list[str] = []
        for comp in self.components:
            if comp.timeseries_id not in seen:
                seen.append(comp.timeseries_id)
        return seen

    def series(self, timeseries_id: str) -> list[SeriesComponent]:
        return [c for c in self.components if c.timeseries_id == timeseries_id]

    def component(self, component_id: str) -> SeriesComponent:
        for c in self.components:
            if c.id == component_id:
                return c
        raise CoreError(f"unknown component id: {component_id}")

    @property
    def n_points(self) -> int:
        return sum(len(c) for c in self.components)


@dataclass(frozen=True)
class SplitSpec:
    """Date boundaries for the train/validation/test partition.

    A boundary date belongs to the segment it begins: validation starts
    at ``cut_date_val``, test at ``cut_date_test``; ``test_end_date`` is
    inclusive (``None`` means end of data).
    """

    cut_date_val: datetime
    cut_date_test: datetime
    test_end_date: Optional[datetime] = None

    @classmethod
    def from_strings(
        cls, cut_date_val: str, cut_date_test: str, test_end_date: Optional[str] = None
    ) -> "SplitSpec":
        end = None
        if test_end_date not in (None, "", "None", "end-of-data"):
            end = parse_date(test_end_date)
            # an end date given as a day means the whole day is included
            if end.time() == datetime.min.time():
                end = end + timedelta(days=1) - timedelta(minutes=1)
        spec = cls(parse_date(cut_date_val), parse_date(cut_date_test), end)
        if not (spec.cut_date_val < spec.cut_date_test):
            raise CoreError("cut_date_val must precede cut_date_test")
        if spec.test_end_date is not None and spec.cut_date_test > spec.test_end_date:
            raise CoreError("cut_date_test must not exceed test_end_date")
        return spec


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_dataset(ds: TimeSeriesDataset) -> ValidationReport:
    """Run every structural check and report all violations found."""
    violations: list[str] = []
    if not ds.components or all(len(c) == 0 for c in ds.components):
        violations.append("empty")
        return ValidationReport(tuple(violations))

    ids = [c.id for c in ds.components]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        violations.append(f"duplicate component ids: {', '.join(dupes)}")

    step = ds.resolution.delta
    for comp in ds.components:
        ts = comp.timestamps
        if any(b <= a for a, b in zip(ts, ts[1:])):
            violations.append(f"dates not sorted in component {comp.id}")
        elif any(b - a != step for a, b in zip(ts, ts[1:])):
            violations.append(
                f"irregular timestamp step in component {comp.id} "
                f"(expected {ds.resolution.minutes} min)"
            )

    if ds.multiple:
        counts = Counter(c.timeseries_id for c in ds.components)
        if len(set(counts.values())) > 1:
            detail = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
            violations.append(f"unequal component counts: {detail}")
    else:
        if len(ds.series_ids()) != 1 or len(ds.components) != 1:
            violations.append("single-series dataset must have exactly one component")

    return ValidationReport(tuple(violations))


def infer_resolution(ds: TimeSeriesDataset) -> Resolution:
    """Most frequent consecutive timestamp difference, in minutes."""
    diffs: Counter[int] = Counter()
    for comp in ds.components:
        ts = comp.timestamps
        for a, b in zip(ts, ts[1:]):
            diffs[int((b - a).total_seconds() // 60)] += 1
    if not diffs:
        raise CoreError("resolution undeterminable: fewer than 2 timestamps")
    minutes, _ = max(diffs.items(), key=lambda kv: (kv[1], -kv[0]))
    return Resolution(minutes)


def slice_by_dates(
    ds: TimeSeriesDataset, start: datetime, end: datetime
) -> TimeSeriesDataset:
    """Restrict to timestamps t with start <= t <= end (empty result allowed)."""
    if start > end:
        raise CoreError("invalid range: start > end")
    sliced = []
    for comp in ds.components:
        keep = [(t, v) for t, v in zip(comp.timestamps, comp.values) if start <= t <= end]
        sliced.append(
            replace(
                comp,
                timestamps=tuple(t for t, _ in keep),
                values=tuple(v for _, v in keep),
            )
        )
    return replace(ds, components=tuple(sliced))


def slice_years(ds: TimeSeriesDataset, start_year: int, end_year: int) -> TimeSeriesDataset:
    return slice_by_dates(
        ds,
        datetime(start_year, 1, 1),
        datetime(end_year, 12, 31, 23, 59, 59),
    )


def dataset_range(ds: TimeSeriesDataset) -> tuple[datetime, datetime]:
    starts = [c.timestamps[0] for c in ds.components if len(c)]
    ends = [c.timestamps[-1] for c in ds.components if len(c)]
    if not starts:
        raise CoreError("empty dataset has no range")
    return min(starts), max(ends)


def regular_grid(start: datetime, n: int, resolution: Resolution) -> tuple[datetime, ...]:
    return tuple(start + i * resolution.delta for i in range(n))
