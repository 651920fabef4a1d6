"""Timestamped metric tables and their CSV dialect.

Dialect: comma separated, ``\\n`` line endings, header ``timestamp,<col>...``,
one row per sample round, absences written as ``N/A``.  Floats are written
with ``repr`` so a write/read cycle reproduces them bit for bit.
"""

from __future__ import annotations

import csv
import io
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, TextIO

from .clock import parse_timestamp
from .errors import ParseError, UnknownColumnError

NA = "N/A"
# tokens read as missing; "inf" covers dead servers logged as infinite RTT
_ABSENT = {"N/A", "NA", "", "None", "none", "null", "nan", "NaN", "inf", "Infinity"}

Value = float | None
Row = tuple[str, tuple[Value, ...]]


def format_value(value: Value) -> str:
    if value is None:
        return NA
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {value!r}; record it as absent instead")
    return repr(value)


def _ts_key(ts: str):
    try:
        return (0, parse_timestamp(ts))
    except ValueError:
        return (1, ts)


@dataclass
class MetricSeries:
    metric: str  # "rtt" or "cpu"
    columns: list[str]
    rows: list[Row] = field(default_factory=list)

    def append(self, timestamp: str, values: Sequence[Value]) -> Row:
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        if self.rows and _ts_key(timestamp) < _ts_key(self.rows[-1][0]):
            raise ValueError(f"timestamp {timestamp} precedes {self.rows[-1][0]}")
        row = (timestamp, tuple(None if v is None else float(v) for v in values))
        self.rows.append(row)
        return row

    @property
    def timestamps(self) -> list[str]:
        return [ts for ts, _ in self.rows]

    def column(self, name: str) -> list[Value]:
        try:
            i = self.columns.index(name)
        except ValueError:
            raise UnknownColumnError(name) from None
        return [vals[i] for _, vals in self.rows]

    def pooled(self) -> list[Value]:
        """All cells, row-major."""
        return [v for _, vals in self.rows for v in vals]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["timestamp", *self.columns])
        for ts, vals in self.rows:
            w.writerow([ts, *map(format_value, vals)])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8", newline="")


class CsvSink:
    """Single-writer CSV file: header on first row, flushed after every row."""

    def __init__(self, path: str | Path, header: Sequence[str]):
        self.path = Path(path)
        self.header = list(header)
        self._fh: TextIO | None = None
        self._writer = None
        self._lock = threading.Lock()
        self.rows_written = 0

    def write(self, row: Sequence[object]) -> None:
        with self._lock:
            if self._fh is None:
                self._fh = open(self.path, "w", encoding="utf-8", newline="")
                self._writer = csv.writer(self._fh, lineterminator="\n")
                self._writer.writerow(self.header)
            self._writer.writerow(row)
            self._fh.flush()
            self.rows_written += 1

    def ensure_header(self) -> None:
        """Create the file with just a header if nothing has been written."""
        with self._lock:
            if self._fh is None:
                self._fh = open(self.path, "w", encoding="utf-8", newline="")
                self._writer = csv.writer(self._fh, lineterminator="\n")
                self._writer.writerow(self.header)
                self._fh.flush()

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None


class SeriesRecorder:
    """Keeps a :class:`MetricSeries` and its CSV file in lockstep."""

    def __init__(self, metric: str, columns: Sequence[str], path: str | Path | None):
        self.series = MetricSeries(metric, list(columns))
        self.sink = CsvSink(path, ["timestamp", *columns]) if path is not None else None

    def record(self, timestamp: str, values: Sequence[Value]) -> None:
        ts, vals = self.series.append(timestamp, values)
        if self.sink is not None:
            self.sink.write([ts, *map(format_value, vals)])

    def close(self) -> None:
        if self.sink is not None:
            self.sink.close()


def _parse_value(text: str, row: int, col: int) -> Value:
    token = text.strip()
    if token in _ABSENT or token.lower() in ("inf", "+inf", "infinity"):
        return None
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", row=row, column=col) from None
    return value if math.isfinite(value) else None


def parse_series_csv(text: str, metric: str = "rtt") -> MetricSeries:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file", row=1) from None
    if len(header) < 2:
        raise ParseError("header needs a timestamp column and at least one series", row=1)
    columns = [h.strip() for h in header[1:]]
    if any(not c for c in columns) or len(set(columns)) != len(columns):
        raise ParseError("column names must be nonempty and unique", row=1)
    series = MetricSeries(metric, columns)
    for lineno, fields in enumerate(reader, start=2):
        if not fields:
            continue
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(fields)}", row=lineno)
        values = [_parse_value(v, lineno, j) for j, v in enumerate(fields[1:], start=2)]
        try:
            series.append(fields[0], values)
        except ValueError as exc:
            raise ParseError(str(exc), row=lineno, column=1) from None
    return series


def read_series_csv(path: str | Path, metric: str = "rtt") -> MetricSeries:
    try:
        text = Path(path).read_text(encoding="utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 text ({exc})") from None
    return parse_series_csv(text, metric)
