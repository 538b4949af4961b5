"""Shared fixtures: deterministic frames, RNGs, and fixture-file paths."""
import datetime
from pathlib import Path

import numpy as np
import pytest

from marketgraph import Rng, TimeSeriesFrame

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def rng() -> Rng:
    return Rng(1234)


def build_frame(values, columns=None, start=datetime.date(2020, 1, 1)) -> TimeSeriesFrame:
    """Frame with consecutive daily dates and the given [rows, N] values."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    rows, n = values.shape
    if columns is None:
        columns = tuple(f"s{j}" for j in range(n))
    dates = tuple(start + datetime.timedelta(days=i) for i in range(rows))
    return TimeSeriesFrame(dates=dates, columns=tuple(columns), values=values)


@pytest.fixture
def small_prices() -> TimeSeriesFrame:
    """Three positive, non-constant series long enough to window."""
    gen = np.random.default_rng(7)
    rows = 60
    base = np.array([100.0, 55.0, 900.0])
    walk = np.cumsum(gen.normal(0.0, 0.01, size=(rows, 3)), axis=0)
    trend = np.linspace(0.0, 0.4, rows)[:, None]
    return build_frame(base * np.exp(walk + trend), columns=("alpha", "beta", "gamma"))


def write_frame_csv(frame: TimeSeriesFrame, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date," + ",".join(frame.columns) + "\n")
        for i, d in enumerate(frame.dates):
            cells = ",".join(repr(float(v)) for v in frame.values[i])
            fh.write(f"{d.isoformat()},{cells}\n")
