"""Daily time-series containers, CSV ingestion and train/test splitting.

Dates are held internally as integer day numbers counted from 1970-01-01 and
only converted to ISO-8601 strings at the I/O boundary.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, UndefinedCorrelationError, ValidationError

EPOCH = dt.date(1970, 1, 1)
OUTPUT = "output"
INPUT = "input"
DATE = "date"


def day_from_date(value: dt.date | str | int) -> int:
    """Convert a calendar date (or ISO string) to a day number."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return int(value)
    if isinstance(value, str):
        try:
            value = dt.date.fromisoformat(value.strip())
        except ValueError as exc:
            raise DataError(f"invalid ISO-8601 date {value!r}") from exc
    return (value - EPOCH).days


def date_from_day(day: int) -> dt.date:
    return EPOCH + dt.timedelta(days=int(day))


def iso(day: int) -> str:
    return date_from_day(day).isoformat()


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """A named sequence of daily observations starting at ``start_day``."""

    name: str
    start_day: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "start_day", day_from_date(self.start_day))
        object.__setattr__(self, "values", _frozen_array(self.values))
        if not np.all(np.isfinite(self.values)):
            bad = int(np.flatnonzero(~np.isfinite(self.values))[0])
            raise DataError(
                f"series {self.name!r} has a missing/non-finite value on {iso(self.start_day + bad)}"
            )

    def __len__(self):
        return self.values.size

    @property
    def start_date(self) -> dt.date:
        return date_from_day(self.start_day)

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.start_day, self.start_day + len(self), dtype=np.int64)

    def dates(self) -> list[str]:
        return [iso(d) for d in self.days]

    def slice(self, start: int, stop: int) -> "TimeSeries":
        return TimeSeries(self.name, self.start_day + start, self.values[start:stop])

    def renamed(self, name: str) -> "TimeSeries":
        return TimeSeries(name, self.start_day, self.values)


@dataclass(frozen=True)
class Dataset:
    """Series that share one date axis, with exactly one output series.

    ``roles`` maps series name to ``"output"`` or ``"input"``. Series order is
    preserved and used when writing CSV files.
    """

    series: Mapping[str, TimeSeries]
    roles: Mapping[str, str]

    def __post_init__(self):
        series = dict(self.series)
        roles = dict(self.roles)
        if not series:
            raise DataError("a dataset needs at least one series")
        for name, ts in series.items():
            if ts.name != name:
                series[name] = ts.renamed(name)
        if set(roles) != set(series):
            raise DataError(
                f"roles {sorted(roles)} do not match series {sorted(series)}"
            )
        bad = {r for r in roles.values() if r not in (OUTPUT, INPUT)}
        if bad:
            raise DataError(f"unknown role(s) {sorted(bad)}")
        outputs = [n for n, r in roles.items() if r == OUTPUT]
        if len(outputs) != 1:
            raise DataError(f"exactly one output series required, got {outputs}")
        first = next(iter(series.values()))
        for ts in series.values():
            if ts.start_day != first.start_day or len(ts) != len(first):
                raise DataError(
                    f"series {ts.name!r} does not share the date axis of {first.name!r}"
                )
        object.__setattr__(self, "series", series)
        object.__setattr__(self, "roles", roles)

    def __len__(self):
        return len(next(iter(self.series.values())))

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.series[name].values
        except KeyError:
            raise DataError(f"dataset has no series named {name!r}") from None

    def __contains__(self, name):
        return name in self.series

    @property
    def names(self) -> list[str]:
        return list(self.series)

    @property
    def start_day(self) -> int:
        return next(iter(self.series.values())).start_day

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.start_day, self.start_day + len(self), dtype=np.int64)

    def dates(self) -> list[str]:
        return [iso(d) for d in self.days]

    @property
    def output_name(self) -> str:
        return next(n for n, r in self.roles.items() if r == OUTPUT)

    @property
    def input_names(self) -> list[str]:
        return [n for n, r in self.roles.items() if r == INPUT]

    @property
    def output(self) -> TimeSeries:
        return self.series[self.output_name]

    def slice(self, start: int, stop: int) -> "Dataset":
        return Dataset({n: ts.slice(start, stop) for n, ts in self.series.items()}, self.roles)

    def with_roles(
        self,
        output: str,
        inputs: Sequence[str] = (),
        rename: Mapping[str, str] | None = None,
    ) -> "Dataset":
        """Pick one output and some inputs, optionally renaming them."""
        rename = dict(rename or {})
        series, roles = {}, {}
        for name, role in [(output, OUTPUT)] + [(n, INPUT) for n in inputs]:
            if name not in self.series:
                raise DataError(f"dataset has no series named {name!r}")
            new = rename.get(name, name)
            if new in series:
                raise DataError(f"duplicate series name {new!r}")
            series[new] = self.series[name].renamed(new)
            roles[new] = role
        return Dataset(series, roles)

    def with_series(self, ts: TimeSeries, role: str = INPUT) -> "Dataset":
        series = dict(self.series)
        roles = dict(self.roles)
        series[ts.name] = ts
        roles[ts.name] = role
        return Dataset(series, roles)

    @classmethod
    def from_arrays(
        cls,
        arrays: Mapping[str, Iterable[float]],
        output: str,
        start_day: int | str | dt.date = 0,
    ) -> "Dataset":
        start = day_from_date(start_day)
        series = {n: TimeSeries(n, start, v) for n, v in arrays.items()}
        roles = {n: (OUTPUT if n == output else INPUT) for n in series}
        return cls(series, roles)


@dataclass(frozen=True)
class SplitSpec:
    train_len: int
    test_len: int = 0

    def __post_init__(self):
        if int(self.train_len) != self.train_len or self.train_len < 1:
            raise ValidationError(f"train_len must be a positive integer, got {self.train_len!r}")
        if int(self.test_len) != self.test_len or self.test_len < 0:
            raise ValidationError(f"test_len must be a non-negative integer, got {self.test_len!r}")

    @property
    def total(self) -> int:
        return self.train_len + self.test_len


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Partition the leading samples into a training and a test set."""
    if spec.total > len(dataset):
        raise ValidationError(
            f"split {spec.train_len}+{spec.test_len} exceeds dataset length {len(dataset)}"
        )
    return dataset.slice(0, spec.train_len), dataset.slice(spec.train_len, spec.total)


def _data_lines(handle):
    for line in handle:
        if line.lstrip().startswith("#"):
            continue
        yield line


def _parse_float(text: str, line_no: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"non-numeric value {text!r} at row {line_no}, column {column!r}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {text!r} at row {line_no}, column {column!r}")
    return value


def ingest_csv(
    path: str | Path,
    schema: Mapping[str, str],
    fill: str | None = None,
) -> Dataset:
    """Read a daily CSV file into a :class:`Dataset`.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV with a header row. Lines starting with ``#`` are ignored.
    schema : mapping
        Column name to role: exactly one ``"date"`` column, one ``"output"``
        column and any number of ``"input"`` columns. Other columns in the
        file are ignored.
    fill : {None, "none", "forward"}
        Missing dates and empty cells are an error unless ``"forward"``, in
        which case the previous day's values are carried forward.
    """
    path = Path(path)
    if fill not in (None, "none", "forward"):
        raise ValidationError(f"unknown fill policy {fill!r}")
    forward = fill == "forward"
    date_cols = [c for c, r in schema.items() if r == DATE]
    value_cols = [c for c, r in schema.items() if r != DATE]
    if len(date_cols) != 1:
        raise ValidationError("schema must name exactly one date column")
    if not value_cols:
        raise ValidationError("schema must name at least one value column")
    date_col = date_cols[0]
    if not path.is_file():
        raise DataError(f"data file not found: {path}")

    rows: dict[int, list[float | None]] = {}
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(_data_lines(handle))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file (header row required)") from None
        missing = [c for c in [date_col, *value_cols] if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
        idx = {c: header.index(c) for c in [date_col, *value_cols]}
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            if len(rec) < len(header):
                rec = rec + [""] * (len(header) - len(rec))
            day = day_from_date(rec[idx[date_col]])
            if day in rows:
                raise DataError(f"{path}: duplicate date {iso(day)} at row {line_no}")
            vals: list[float | None] = []
            for c in value_cols:
                cell = rec[idx[c]].strip()
                if cell == "":
                    if not forward:
                        raise DataError(f"{path}: empty value at row {line_no}, column {c!r}")
                    vals.append(None)
                else:
                    vals.append(_parse_float(cell, line_no, c))
            rows[day] = vals
    if not rows:
        raise DataError(f"{path}: no data rows")

    days = sorted(rows)
    first, last = days[0], days[-1]
    columns: list[list[float]] = [[] for _ in value_cols]
    prev: list[float | None] = [None] * len(value_cols)
    for day in range(first, last + 1):
        vals = rows.get(day)
        if vals is None:
            if not forward:
                raise DataError(f"{path}: missing date {iso(day)}")
            vals = [None] * len(value_cols)
        for k, v in enumerate(vals):
            if v is None:
                v = prev[k]
                if v is None:
                    raise DataError(f"{path}: no earlier value to forward-fill column {value_cols[k]!r} on {iso(day)}")
            prev[k] = v
            columns[k].append(v)

    series = {c: TimeSeries(c, first, columns[k]) for k, c in enumerate(value_cols)}
    return Dataset(series, {c: schema[c] for c in value_cols})


def format_value(x: float) -> str:
    """Shortest text that round-trips to the same float."""
    return repr(float(x))


def write_csv(
    dataset: Dataset,
    path: str | Path,
    comments: Sequence[str] = (),
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        for line in comments:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([DATE, *dataset.names])
        arrays = [dataset[n] for n in dataset.names]
        for i, day in enumerate(dataset.days):
            writer.writerow([iso(day), *(format_value(a[i]) for a in arrays)])
    return path


def csv_schema(dataset: Dataset) -> dict[str, str]:
    """Schema that re-ingests a file written by :func:`write_csv`."""
    return {DATE: DATE, **dataset.roles}


def read_table(path: str | Path) -> list[dict[str, str]]:
    """Read any CSV artifact (report, trace) as a list of row dicts."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(_data_lines(handle)))


def lag_autocorrelation(series: TimeSeries | Sequence[float], lag: int) -> float:
    """Pearson correlation between the series and itself shifted by ``lag``."""
    x = np.asarray(series.values if isinstance(series, TimeSeries) else series, dtype=float)
    if int(lag) != lag or lag < 1:
        raise ValidationError(f"lag must be a positive integer, got {lag!r}")
    if lag >= x.size:
        raise ValidationError(f"lag {lag} must be smaller than the series length {x.size}")
    a = x[lag:] - x[lag:].mean()
    b = x[:-lag] - x[:-lag].mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    if den == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant series")
    return float(np.clip((a @ b) / den, -1.0, 1.0))


def trailing_sum(values: Sequence[float], window: int) -> np.ndarray:
    """Sum over the last ``window`` days including today (shorter at the start)."""
    x = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    lo = np.maximum(np.arange(1, x.size + 1) - window, 0)
    return c[1:] - c[lo]


def centered_moving_average(values: Sequence[float], window: int) -> np.ndarray:
    """Centered moving average; the window shrinks symmetrically at the edges."""
    x = np.asarray(values, dtype=float)
    if window < 1 or window % 2 == 0:
        raise ValidationError(f"window must be a positive odd integer, got {window}")
    half = window // 2
    n = x.size
    c = np.concatenate([[0.0], np.cumsum(x)])
    i = np.arange(n)
    reach = np.minimum(np.minimum(i, n - 1 - i), half)
    lo, hi = i - reach, i + reach + 1
    return (c[hi] - c[lo]) / (hi - lo)
