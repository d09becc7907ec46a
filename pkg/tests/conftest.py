"""Shared fixtures and series builders for the test suite."""

from datetime import datetime, timedelta

import numpy as np
import pytest

from tsfops.core import Resolution, SeriesComponent, TimeSeriesDataset, regular_grid

HOURLY = Resolution(60)


def make_component(values, start=datetime(2020, 1, 1), resolution=HOURLY,
                   comp_id="s", ts_id=None):
    """values may contain None for missing observations."""
    ts = regular_grid(start, len(values), resolution)
    return SeriesComponent(comp_id, ts_id or comp_id, ts,
                           tuple(None if v is None else float(v) for v in values))


def make_dataset(values, start=datetime(2020, 1, 1), resolution=HOURLY, comp_id="s"):
    return TimeSeriesDataset((make_component(values, start, resolution, comp_id),),
                             resolution)


def sinusoid(n, daily=20.0, weekly=10.0, level=100.0, noise=0.0, seed=0):
    """Hourly daily+weekly sinusoid with optional seeded Gaussian noise."""
    t = np.arange(n)
    x = (level
         + daily * np.sin(2 * np.pi * t / 24)
         + weekly * np.sin(2 * np.pi * t / (24 * 7)))
    if noise:
        x = x + np.random.default_rng(seed).normal(0.0, noise, n)
    return x


def single_csv(values, start=datetime(2020, 1, 1), step=timedelta(hours=1),
               header="Datetime,Value"):
    lines = [header]
    for i, v in enumerate(values):
        ts = start + i * step
        cell = "" if v is None else repr(float(v))
        lines.append(f"{ts:%Y-%m-%d %H:%M:%S},{cell}")
    return "\n".join(lines) + "\n"


@pytest.fixture
def store(tmp_path):
    from tsfops.tracking import Store

    return Store(tmp_path / "store")
