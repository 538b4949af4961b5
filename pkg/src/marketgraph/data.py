"""Ingestion and the preprocessing chain for multi-index price data.

The canonical stage order is fixed: rebasing adjustment, natural log,
chronological split, z-score normalization with training-split statistics,
windowing. Every transform returns a new frame; nothing mutates in place,
and each stage can be hashed for the audit report.
"""
from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass
from datetime import date
from typing import Sequence

import numpy as np

from .errors import DataError, DomainError, ShapeError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeSeriesFrame:
    """Dated, column-named observation matrix with no missing cells."""

    dates: tuple[date, ...]
    columns: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "columns", tuple(self.columns))
        if v.ndim != 2 or v.shape != (len(self.dates), len(self.columns)):
            raise ShapeError(f"values shape {v.shape} does not match {len(self.dates)} dates x {len(self.columns)} columns")
        if len(set(self.columns)) != len(self.columns):
            raise DataError("column names must be unique")
        if not np.all(np.isfinite(v)):
            raise DataError("frame contains non-finite values")
        for a, b in zip(self.dates, self.dates[1:]):
            if a >= b:
                raise DataError(f"dates must be strictly increasing; {a} is not before {b}")

    @property
    def num_rows(self) -> int:
        return len(self.dates)

    @property
    def num_series(self) -> int:
        return len(self.columns)

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise DataError(f"unknown column {name!r}") from None

    def slice_rows(self, start: int, stop: int) -> "TimeSeriesFrame":
        return TimeSeriesFrame(self.dates[start:stop], self.columns, self.values[start:stop].copy())


def frame_hash(frame: TimeSeriesFrame) -> str:
    """Content hash covering dates, column names, and every value bit."""
    h = hashlib.sha256()
    h.update("|".join(d.isoformat() for d in frame.dates).encode())
    h.update("|".join(frame.columns).encode())
    h.update(frame.values.tobytes())
    return h.hexdigest()


def _parse_date(text: str, where: str) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"{where}: unparseable date {text!r} (expected YYYY-MM-DD)") from None


def _parse_csv(path) -> tuple[TimeSeriesFrame, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if len(header) < 2 or header[0].lower() != "date":
        raise DataError(f"{path}: header must be 'date,<name1>,...', got {rows[0]!r}")
    columns = tuple(header[1:])

    parsed: list[tuple[date, list[float]]] = []
    dropped = 0
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: line {lineno} has {len(row)} cells, expected {len(header)}")
        if any(not c.strip() for c in row[1:]):
            dropped += 1
            continue
        when = _parse_date(row[0], f"{path}: line {lineno}")
        try:
            vals = [float(c) for c in row[1:]]
        except ValueError:
            bad = next(c for c in row[1:] if not _is_float(c))
            raise DataError(f"{path}: line {lineno}: unparseable number {bad!r}") from None
        parsed.append((when, vals))

    parsed.sort(key=lambda item: item[0])
    for (d1, _), (d2, _) in zip(parsed, parsed[1:]):
        if d1 == d2:
            raise DataError(f"{path}: duplicate date {d1.isoformat()}")
    if len(parsed) < 2:
        raise DataError(f"{path}: fewer than 2 usable rows after dropping incomplete ones")
    dates = tuple(d for d, _ in parsed)
    values = np.array([v for _, v in parsed])
    return TimeSeriesFrame(dates, columns, values), dropped


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def load_csv(path) -> TimeSeriesFrame:
    """Read a `date,<name1>,...` CSV into a frame.

    Rows are sorted ascending by date, duplicate dates are rejected, and rows
    with any blank cell are dropped (count logged; the pipeline report also
    records it).
    """
    frame, dropped = _parse_csv(path)
    if dropped:
        log.info("%s: dropped %d row(s) with missing cells", path, dropped)
    return frame


@dataclass(frozen=True)
class RebaseRule:
    """Undo an exchange redenomination: divide pre-cutoff rows of one column."""

    column: str
    cutoff: date
    divisor: float


def adjust_rebased_series(frame: TimeSeriesFrame, column: str, cutoff_date, divisor: float) -> TimeSeriesFrame:
    """Divide `column` by `divisor` on every row strictly before the cutoff."""
    if isinstance(cutoff_date, str):
        cutoff_date = _parse_date(cutoff_date, "cutoff")
    if divisor <= 0:
        raise DomainError(f"divisor must be positive, got {divisor}")
    col = frame.column_index(column)
    values = frame.values.copy()
    before = np.array([d < cutoff_date for d in frame.dates])
    values[before, col] /= divisor
    return TimeSeriesFrame(frame.dates, frame.columns, values)


def log_transform(frame: TimeSeriesFrame) -> TimeSeriesFrame:
    """Elementwise natural log; every value must be positive."""
    if np.any(frame.values <= 0):
        row, col = np.argwhere(frame.values <= 0)[0]
        raise DataError(
            f"log transform needs positive values; {frame.columns[col]} at "
            f"{frame.dates[row].isoformat()} is {frame.values[row, col]}"
        )
    return TimeSeriesFrame(frame.dates, frame.columns, np.log(frame.values))


def exp_transform(frame: TimeSeriesFrame) -> TimeSeriesFrame:
    return TimeSeriesFrame(frame.dates, frame.columns, np.exp(frame.values))


@dataclass(frozen=True)
class SplitSpec:
    """Chronological train/validation/test fractions."""

    train: float = 0.6
    validation: float = 0.2
    test: float = 0.2

    def __post_init__(self):
        parts = (self.train, self.validation, self.test)
        if any(p <= 0 for p in parts):
            raise DomainError(f"split fractions must be positive, got {parts}")
        if abs(sum(parts) - 1.0) > 1e-9:
            raise DomainError(f"split fractions must sum to 1, got {sum(parts)}")


def chronological_split(frame: TimeSeriesFrame, spec: SplitSpec = SplitSpec()
                        ) -> tuple[TimeSeriesFrame, TimeSeriesFrame, TimeSeriesFrame]:
    """Contiguous, order-preserving split: floor, floor, remainder."""
    n = frame.num_rows
    if n < 3:
        raise DataError(f"need at least 3 rows to split, have {n}")
    n_train = int(np.floor(spec.train * n))
    n_val = int(np.floor(spec.validation * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise DataError(f"split of {n} rows leaves an empty partition ({n_train}/{n_val}/{n_test})")
    return (
        frame.slice_rows(0, n_train),
        frame.slice_rows(n_train, n_train + n_val),
        frame.slice_rows(n_train + n_val, n),
    )


@dataclass(frozen=True)
class NormStats:
    """Per-column center/scale, fit on the training split only."""

    columns: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=np.float64))
        n = len(self.columns)
        if self.mean.shape != (n,) or self.std.shape != (n,):
            raise ShapeError(f"mean/std must be length-{n} vectors")
        if np.any(self.std <= 0):
            bad = self.columns[int(np.argmax(self.std <= 0))]
            raise DataError(f"zero-variance column {bad!r} cannot be normalized")


def compute_norm_stats(frame: TimeSeriesFrame) -> NormStats:
    return NormStats(frame.columns, frame.values.mean(axis=0), frame.values.std(axis=0))


def normalize(frame: TimeSeriesFrame, stats: NormStats) -> TimeSeriesFrame:
    if frame.columns != stats.columns:
        raise DataError("frame columns do not match normalization stats")
    return TimeSeriesFrame(frame.dates, frame.columns, (frame.values - stats.mean) / stats.std)


def denormalize(frame: TimeSeriesFrame, stats: NormStats) -> TimeSeriesFrame:
    if frame.columns != stats.columns:
        raise DataError("frame columns do not match normalization stats")
    return TimeSeriesFrame(frame.dates, frame.columns, frame.values * stats.std + stats.mean)


def denormalize_values(values: np.ndarray, stats: NormStats, axis: int = -1) -> np.ndarray:
    """Undo z-scoring on a bare array whose `axis` runs over the columns."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[axis] != len(stats.columns):
        raise ShapeError(f"axis {axis} has extent {values.shape[axis]}, stats cover {len(stats.columns)} columns")
    view = [1] * values.ndim
    view[axis] = len(stats.columns)
    return values * stats.std.reshape(view) + stats.mean.reshape(view)


def invert_predictions(values: np.ndarray, stats: NormStats, axis: int = -1) -> np.ndarray:
    """Map model outputs back to price scale: exp after de-normalization.

    The forward chain is log then normalize, so inversion composes the two
    inverses in the opposite order.
    """
    return np.exp(denormalize_values(values, stats, axis))


@dataclass(frozen=True)
class WindowSpec:
    """Input length P and forecast horizon Q, in steps."""

    P: int = 30
    Q: int = 1

    def __post_init__(self):
        if self.P < 1 or self.Q < 1:
            raise DomainError(f"P and Q must be at least 1, got P={self.P}, Q={self.Q}")


@dataclass(frozen=True)
class WindowSet:
    """Stacked supervised samples: x[m] covers P steps, y[m] the next Q."""

    x: np.ndarray
    y: np.ndarray
    start_indices: tuple[int, ...]

    def __post_init__(self):
        if self.x.ndim != 3 or self.y.ndim != 3:
            raise ShapeError("windows must be [count, N, P] and [count, N, Q]")
        if self.x.shape[0] != self.y.shape[0] or self.x.shape[1] != self.y.shape[1]:
            raise ShapeError(f"inconsistent window stacks: {self.x.shape} vs {self.y.shape}")

    def __len__(self) -> int:
        return self.x.shape[0]


def make_windows(frame: TimeSeriesFrame, spec: WindowSpec, stride: int = 1) -> WindowSet:
    """Slide a (P in, Q out) window over one split.

    Splits are windowed independently, so no sample ever straddles a split
    boundary. At stride 1 the count is rows - P - Q + 1.
    """
    if stride < 1:
        raise DomainError(f"stride must be at least 1, got {stride}")
    rows = frame.num_rows
    span = spec.P + spec.Q
    if rows < span:
        raise DataError(f"{rows} rows cannot fit a window of P+Q={span}")
    starts = range(0, rows - span + 1, stride)
    series_major = frame.values.T
    xs = np.stack([series_major[:, s:s + spec.P] for s in starts])
    ys = np.stack([series_major[:, s + spec.P:s + span] for s in starts])
    return WindowSet(x=xs, y=ys, start_indices=tuple(starts))


def descriptive_stats(frame: TimeSeriesFrame) -> dict[str, dict[str, float]]:
    """Per-column summary: size, mean, median, std, min, max, skewness, kurtosis.

    std is the sample estimate (n-1 denominator); skewness and kurtosis are
    the standardized central moments m3/s^3 and m4/s^4 (a normal sample gives
    kurtosis near 3).
    """
    if frame.num_rows < 2:
        raise DataError("descriptive stats need at least 2 rows")
    out: dict[str, dict[str, float]] = {}
    for j, name in enumerate(frame.columns):
        col = frame.values[:, j]
        s = col.std(ddof=1)
        if s == 0:
            raise DataError(f"constant column {name!r}: skewness/kurtosis undefined")
        centered = col - col.mean()
        out[name] = {
            "size": float(col.size),
            "mean": float(col.mean()),
            "median": float(np.median(col)),
            "std": float(s),
            "min": float(col.min()),
            "max": float(col.max()),
            "skewness": float(np.mean(centered ** 3) / s ** 3),
            "kurtosis": float(np.mean(centered ** 4) / s ** 4),
        }
    return out


@dataclass(frozen=True)
class PipelineResult:
    """Everything downstream of ingestion, plus the audit report."""

    train: TimeSeriesFrame
    validation: TimeSeriesFrame
    test: TimeSeriesFrame
    stats: NormStats
    train_windows: WindowSet
    validation_windows: WindowSet
    test_windows: WindowSet
    report: dict


def run_pipeline(source, window_spec: WindowSpec, split_spec: SplitSpec = SplitSpec(),
                 rebase_rules: Sequence[RebaseRule] = (), stride: int = 1) -> PipelineResult:
    """Apply the full stage chain to a CSV path or an already-loaded frame.

    Stage order is fixed: adjust, log, split, normalize with train stats,
    window. The report records a content hash after each whole-frame stage,
    the dropped-row count, split indices, and the normalization statistics.
    """
    if isinstance(source, TimeSeriesFrame):
        frame, dropped = source, 0
        origin = "<frame>"
    else:
        frame, dropped = _parse_csv(source)
        origin = str(source)

    stages: list[dict] = [{"stage": "load", "hash": frame_hash(frame)}]
    for rule in rebase_rules:
        frame = adjust_rebased_series(frame, rule.column, rule.cutoff, rule.divisor)
    stages.append({"stage": "adjust", "hash": frame_hash(frame)})
    frame = log_transform(frame)
    stages.append({"stage": "log", "hash": frame_hash(frame)})

    train, val, test = chronological_split(frame, split_spec)
    stages.append({"stage": "split", "hash": frame_hash(train)})
    stats = compute_norm_stats(train)
    train_n, val_n, test_n = (normalize(f, stats) for f in (train, val, test))
    stages.append({"stage": "normalize", "hash": frame_hash(train_n)})

    windows = tuple(make_windows(f, window_spec, stride) for f in (train_n, val_n, test_n))
    digest = hashlib.sha256()
    for ws in windows:
        digest.update(ws.x.tobytes())
        digest.update(ws.y.tobytes())
    stages.append({"stage": "window", "hash": digest.hexdigest()})

    result = PipelineResult(
        train=train_n,
        validation=val_n,
        test=test_n,
        stats=stats,
        train_windows=windows[0],
        validation_windows=windows[1],
        test_windows=windows[2],
        report={
            "input": {"path": origin, "rows": frame.num_rows, "dropped_rows": dropped,
                      "columns": list(frame.columns)},
            "stages": stages,
            "split": {"train_rows": train.num_rows, "validation_rows": val.num_rows,
                      "test_rows": test.num_rows},
            "norm_stats": {"columns": list(stats.columns),
                           "mean": [float(m) for m in stats.mean],
                           "std": [float(s) for s in stats.std]},
            "window": {"P": window_spec.P, "Q": window_spec.Q, "stride": stride},
        },
    )
    return result
