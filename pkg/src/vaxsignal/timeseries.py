"""Month-indexed series and the alignment/windowing helpers built on them."""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass
from functools import total_ordering
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyOverlap, MissingMonth, ParseError

_MONTH_RE = re.compile(r"^\s*(\d{4})-(\d{2})\s*$")


@total_ordering
@dataclass(frozen=True)
class YearMonth:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must be in 1..12, got {self.month}")

    @classmethod
    def parse(cls, text: str) -> "YearMonth":
        m = _MONTH_RE.match(text)
        if m is None:
            raise ValueError(f"expected YYYY-MM, got {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))

    @classmethod
    def from_ordinal(cls, n: int) -> "YearMonth":
        y, m = divmod(n, 12)
        return cls(y, m + 1)

    @classmethod
    def of(cls, d) -> "YearMonth":
        """Month containing a ``datetime.date``."""
        return cls(d.year, d.month)

    def ordinal(self) -> int:
        return self.year * 12 + self.month - 1

    def __add__(self, months: int) -> "YearMonth":
        if not isinstance(months, int):
            return NotImplemented
        return YearMonth.from_ordinal(self.ordinal() + months)

    def __sub__(self, other):
        if isinstance(other, YearMonth):
            return self.ordinal() - other.ordinal()
        if isinstance(other, int):
            return YearMonth.from_ordinal(self.ordinal() - other)
        return NotImplemented

    def __lt__(self, other):
        if not isinstance(other, YearMonth):
            return NotImplemented
        return (self.year, self.month) < (other.year, other.month)

    def succ(self) -> "YearMonth":
        return self + 1

    def pred(self) -> "YearMonth":
        return self - 1

    def __str__(self):
        return f"{self.year:04d}-{self.month:02d}"


def _as_month(m) -> YearMonth:
    return m if isinstance(m, YearMonth) else YearMonth.parse(str(m))


@dataclass(frozen=True)
class SeriesWindow:
    """Inclusive month range ``[start, end]``."""

    start: YearMonth
    end: YearMonth

    def __post_init__(self):
        object.__setattr__(self, "start", _as_month(self.start))
        object.__setattr__(self, "end", _as_month(self.end))
        if self.end < self.start:
            raise ValueError(f"empty window {self.start}..{self.end}")

    @classmethod
    def parse(cls, text: str) -> "SeriesWindow":
        """Parse ``YYYY-MM..YYYY-MM``."""
        try:
            a, b = text.split("..")
        except ValueError:
            raise ValueError(f"expected FROM..TO, got {text!r}") from None
        return cls(YearMonth.parse(a), YearMonth.parse(b))

    def __len__(self):
        return self.end - self.start + 1

    def __contains__(self, m):
        return self.start <= m <= self.end

    def months(self) -> list[YearMonth]:
        return [self.start + i for i in range(len(self))]

    def intersect(self, other: "SeriesWindow") -> "SeriesWindow":
        lo = max(self.start, other.start)
        hi = min(self.end, other.end)
        if hi < lo:
            raise EmptyOverlap(f"{self} and {other} do not overlap")
        return SeriesWindow(lo, hi)

    def __str__(self):
        return f"{self.start}..{self.end}"


class MonthlyTimeSeries:
    """Contiguous monthly signal: ``values[i]`` belongs to ``start + i``.

    Instances are immutable; ``values`` is a read-only float array.
    """

    __slots__ = ("_start", "_values")

    def __init__(self, start, values):
        arr = np.array(values, dtype=float).ravel()
        if arr.size == 0:
            raise ValueError("a series needs at least one value")
        if not np.all(np.isfinite(arr)):
            raise ValueError("series values must be finite")
        arr.setflags(write=False)
        self._start = _as_month(start)
        self._values = arr

    @property
    def start(self) -> YearMonth:
        return self._start

    @property
    def end(self) -> YearMonth:
        return self._start + (len(self._values) - 1)

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def window(self) -> SeriesWindow:
        return SeriesWindow(self.start, self.end)

    def months(self) -> list[YearMonth]:
        return self.window.months()

    def __len__(self):
        return len(self._values)

    def __getitem__(self, month) -> float:
        month = _as_month(month)
        i = month - self._start
        if not 0 <= i < len(self._values):
            raise KeyError(str(month))
        return float(self._values[i])

    def __eq__(self, other):
        if not isinstance(other, MonthlyTimeSeries):
            return NotImplemented
        return self._start == other._start and np.array_equal(self._values, other._values)

    def __hash__(self):
        return hash((self._start, self._values.tobytes()))

    def __repr__(self):
        return f"MonthlyTimeSeries({self.start}..{self.end}, n={len(self)})"

    def with_values(self, values) -> "MonthlyTimeSeries":
        return MonthlyTimeSeries(self._start, values)

    @classmethod
    def from_mapping(cls, data: dict) -> "MonthlyTimeSeries":
        """Build from ``{month: value}``; every month in between must be present."""
        if not data:
            raise ValueError("empty mapping")
        items = sorted((_as_month(k), v) for k, v in data.items())
        start, end = items[0][0], items[-1][0]
        if len(items) != end - start + 1:
            have = {m for m, _ in items}
            gap = next(m for m in SeriesWindow(start, end).months() if m not in have)
            raise MissingMonth(f"series has no value for {gap}")
        return cls(start, [v for _, v in items])


def align(a: MonthlyTimeSeries, b: MonthlyTimeSeries):
    """Restrict both series to their common month range."""
    w = a.window.intersect(b.window)
    return slice_series(a, w), slice_series(b, w)


def align_many(series: Sequence[MonthlyTimeSeries]) -> list[MonthlyTimeSeries]:
    w = series[0].window
    for s in series[1:]:
        w = w.intersect(s.window)
    return [slice_series(s, w) for s in series]


def slice_series(s: MonthlyTimeSeries, w: SeriesWindow) -> MonthlyTimeSeries:
    w = s.window.intersect(w)
    i = w.start - s.start
    return MonthlyTimeSeries(w.start, s.values[i:i + len(w)])


def rolling_mean(s: MonthlyTimeSeries, half_window: int) -> MonthlyTimeSeries:
    """Centered moving average over ``[t - half_window, t + half_window]``.

    The window shrinks at both ends of the series instead of trimming it.
    """
    if half_window < 0:
        raise ValueError("half_window must be >= 0")
    x = s.values
    n = len(x)
    if half_window == 0:
        return s.with_values(x)
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(n)
    lo = np.maximum(idx - half_window, 0)
    hi = np.minimum(idx + half_window, n - 1) + 1
    out = (csum[hi] - csum[lo]) / (hi - lo)
    # cumulative sums drift on long series; keep the result inside the data range
    out = np.clip(out, x.min(), x.max())
    return s.with_values(out)


def read_series_csv(path) -> MonthlyTimeSeries:
    """Read a ``month,value`` file with strictly increasing, gap-free months."""
    path = Path(path)
    with path.open(newline="") as fh:
        return parse_series_csv(fh, source=str(path))


def parse_series_csv(fh: Iterable[str], source="<series>") -> MonthlyTimeSeries:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None:
        raise ParseError("empty file", source)
    if [h.strip() for h in header] != ["month", "value"]:
        raise ParseError(f"expected header 'month,value', got {','.join(header)!r}", source, 1)
    start = None
    prev = None
    values = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", source, lineno)
        try:
            month = YearMonth.parse(row[0])
            value = float(row[1])
        except ValueError as exc:
            raise ParseError(str(exc), source, lineno) from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite value {row[1]!r}", source, lineno)
        if prev is not None:
            if month <= prev:
                raise ParseError(f"month {month} does not increase", source, lineno)
            if month != prev + 1:
                raise ParseError(f"gap: {prev + 1} missing before {month}", source, lineno)
        else:
            start = month
        prev = month
        values.append(value)
    if start is None:
        raise ParseError("no data rows", source)
    return MonthlyTimeSeries(start, values)


def format_series_csv(s: MonthlyTimeSeries) -> str:
    buf = io.StringIO()
    buf.write("month,value\n")
    for m, v in zip(s.months(), s.values):
        buf.write(f"{m},{float(v)!r}\n")
    return buf.getvalue()


def write_series_csv(s: MonthlyTimeSeries, path) -> None:
    Path(path).write_text(format_series_csv(s))
