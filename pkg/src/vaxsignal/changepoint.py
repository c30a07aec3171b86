"""Tipping point between two monthly signals and before/after regressions.

The tipping point is the split month at which the Pearson correlation of the
two signals changes the most between the segment before it and the segment
after it.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

from .errors import SegmentTooShort
from .stats import CorrelationResult, RegressionFit, ols, pearson_r, with_intercept
from .timeseries import MonthlyTimeSeries, SeriesWindow, YearMonth, align, slice_series


@dataclass(frozen=True)
class ScanRow:
    split: YearMonth
    before: CorrelationResult
    after: CorrelationResult

    @property
    def delta(self) -> float:
        return abs(self.after.r - self.before.r)


@dataclass(frozen=True)
class TippingPointResult:
    split: YearMonth
    before: CorrelationResult
    after: CorrelationResult
    delta: float
    scan: tuple
    split_starts_after: bool = True

    def to_dict(self):
        return {
            "split": str(self.split),
            "split_starts_after": self.split_starts_after,
            "before": self.before.to_dict(),
            "after": self.after.to_dict(),
            "delta": self.delta,
        }


def _segments(start: YearMonth, end: YearMonth, c: YearMonth, split_starts_after: bool):
    """Inclusive (before, after) windows for a split at ``c``."""
    last_before = c - 1 if split_starts_after else c
    return SeriesWindow(start, last_before), SeriesWindow(last_before + 1, end)


def valid_candidates(window: SeriesWindow, min_segment: int, split_starts_after: bool = True) -> SeriesWindow:
    """All split months that leave ``min_segment`` months on each side."""
    shift = 0 if split_starts_after else 1
    lo = window.start + (min_segment - shift)
    hi = window.end - (min_segment - 1 + shift)
    if hi < lo:
        raise SegmentTooShort(
            f"{len(window)} months cannot hold two segments of {min_segment} months")
    return SeriesWindow(lo, hi)


def find_tipping_point(x: MonthlyTimeSeries, y: MonthlyTimeSeries, candidates: SeriesWindow | None = None,
                       min_segment: int = 12, *, split_starts_after: bool = True,
                       one_sided: bool = False) -> TippingPointResult:
    """Scan split months and return the one maximizing ``|r_after - r_before|``.

    Parameters
    ----------
    x, y : MonthlyTimeSeries
        Signals; they are restricted to their common months first.
    candidates : SeriesWindow, optional
        Split months to try. Every candidate must leave ``min_segment``
        months on both sides. Defaults to every admissible month.
    min_segment : int
        Minimum segment length, at least 3.
    split_starts_after : bool
        Whether the split month is the first month of the "after" segment
        (default) or the last month of the "before" segment.
    one_sided : bool
        Report one-sided p-values for the segment correlations.

    Ties in the change of correlation go to the earliest candidate.
    """
    if min_segment < 3:
        raise ValueError("min_segment must be at least 3")
    x, y = align(x, y)
    full = x.window
    admissible = valid_candidates(full, min_segment, split_starts_after)
    if candidates is None:
        candidates = admissible
    elif candidates.start < admissible.start or candidates.end > admissible.end:
        raise SegmentTooShort(
            f"candidates {candidates} leave fewer than {min_segment} months on one side "
            f"(admissible: {admissible})")
    rows = []
    for c in candidates.months():
        wb, wa = _segments(full.start, full.end, c, split_starts_after)
        before = pearson_r(slice_series(x, wb).values, slice_series(y, wb).values, one_sided=one_sided)
        after = pearson_r(slice_series(x, wa).values, slice_series(y, wa).values, one_sided=one_sided)
        rows.append(ScanRow(c, before, after))
    best = rows[0]
    for row in rows[1:]:
        if row.delta > best.delta:
            best = row
    return TippingPointResult(best.split, best.before, best.after, best.delta, tuple(rows), split_starts_after)


def format_scan_csv(result: TippingPointResult) -> str:
    buf = io.StringIO()
    buf.write("split_month,r_before,p_before,r_after,p_after,delta\n")
    for row in result.scan:
        buf.write(f"{row.split},{row.before.r!r},{row.before.p_value!r},"
                  f"{row.after.r!r},{row.after.p_value!r},{row.delta!r}\n")
    return buf.getvalue()


@dataclass(frozen=True)
class SplitRegressionReport:
    before: RegressionFit
    after: RegressionFit
    before_window: SeriesWindow
    after_window: SeriesWindow

    def implied_change(self, delta_x: float) -> tuple[float, float]:
        """Change in the response implied by a change ``delta_x`` of the regressor, per segment."""
        return float(self.before.coefficients[1] * delta_x), float(self.after.coefficients[1] * delta_x)

    def to_dict(self, delta_x: float | None = None):
        out = {
            "before_window": str(self.before_window),
            "after_window": str(self.after_window),
            "before": self.before.to_dict(),
            "after": self.after.to_dict(),
        }
        if delta_x is not None:
            b, a = self.implied_change(delta_x)
            out["implied_change"] = {"delta_x": delta_x, "before": b, "after": a}
        return out

    def format(self, delta_x: float | None = None) -> str:
        lines = []
        for label, fit, w in (("before", self.before, self.before_window),
                              ("after", self.after, self.after_window)):
            lines.append(
                f"{label:<6} {w}  n={fit.n:<3d} slope={fit.coefficients[1]:.6g} "
                f"(se={fit.std_errors[1]:.4g}, p={fit.p_values[1]:.3g})  "
                f"intercept={fit.coefficients[0]:.6g}  R2={fit.r_squared:.3f}")
        if delta_x is not None:
            b, a = self.implied_change(delta_x)
            lines.append(f"a change of {delta_x:g} in x implies {b:+.2f} before and {a:+.2f} after")
        return "\n".join(lines)


def split_regression(x: MonthlyTimeSeries, y: MonthlyTimeSeries, split: YearMonth,
                     analysis: SeriesWindow | None = None, *,
                     split_starts_after: bool = True) -> SplitRegressionReport:
    """Regress ``y`` on an intercept and ``x`` separately before and after ``split``.

    Only months inside ``analysis`` are used (default: the common range).
    """
    x, y = align(x, y)
    if analysis is None:
        analysis = x.window
    analysis = analysis.intersect(x.window)
    if split not in analysis:
        raise SegmentTooShort(f"split {split} lies outside the analysis window {analysis}")
    last_before = split - 1 if split_starts_after else split
    if last_before < analysis.start or last_before >= analysis.end:
        raise SegmentTooShort(f"split {split} leaves an empty segment in {analysis}")
    wb, wa = SeriesWindow(analysis.start, last_before), SeriesWindow(last_before + 1, analysis.end)
    fits = []
    for w in (wb, wa):
        if len(w) < 4:
            raise SegmentTooShort(f"segment {w} has {len(w)} months; need at least 4")
        xs, ys = slice_series(x, w).values, slice_series(y, w).values
        fits.append(ols(with_intercept(xs), ys, names=("intercept", "slope")))
    return SplitRegressionReport(fits[0], fits[1], wb, wa)
