"""Autoregressive deseasonalization and correlation diagnostics for monthly series."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import ConstantInput, RankDeficient, TooShort
from .stats import ols, pearson_r, t_isf
from .timeseries import MonthlyTimeSeries, align


@dataclass(frozen=True)
class ARModel:
    p: int
    intercept: float
    coefficients: np.ndarray
    residuals: MonthlyTimeSeries
    unique: bool = True

    def to_dict(self):
        return {
            "p": self.p,
            "intercept": self.intercept,
            "coefficients": [float(c) for c in self.coefficients],
            "residual_start": str(self.residuals.start),
            "unique": self.unique,
        }


def lag_matrix(x: np.ndarray, p: int) -> np.ndarray:
    """Rows ``t = p..n-1`` with columns ``x[t-1], ..., x[t-p]``."""
    n = len(x)
    return np.column_stack([x[p - i:n - i] for i in range(1, p + 1)]) if p else np.empty((n, 0))


def fit_ar(s: MonthlyTimeSeries, p: int) -> ARModel:
    """Conditional least-squares AR(p) fit with intercept.

    The first ``p`` months only serve as lags; residuals start at month
    ``start + p``. A non-constant series whose lags are linearly dependent
    (an exactly periodic signal, say) gets the minimum-norm solution and
    ``unique=False``.
    """
    if p < 1:
        raise ValueError("AR order must be >= 1")
    x = s.values
    need = p + max(p, 10)
    if len(x) < need:
        raise TooShort(f"AR({p}) needs at least {need} months, got {len(x)}")
    if np.ptp(x) == 0:
        raise RankDeficient(f"AR({p}) is not identifiable on a constant series")
    X = np.column_stack([np.ones(len(x) - p), lag_matrix(x, p)])
    target = x[p:]
    try:
        coef = ols(X, target).coefficients
        unique = True
    except RankDeficient:
        coef = np.linalg.lstsq(X, target, rcond=None)[0]
        unique = False
    resid = target - X @ coef
    return ARModel(p, float(coef[0]), coef[1:].copy(), MonthlyTimeSeries(s.start + p, resid), unique)


def deseasonalize(s: MonthlyTimeSeries, p: int = 12) -> MonthlyTimeSeries:
    return fit_ar(s, p).residuals


def acf(s: MonthlyTimeSeries, max_lag: int) -> np.ndarray:
    """Pearson correlation of the series with itself lagged by 1..max_lag months."""
    x = s.values
    n = len(x)
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if max_lag >= n - 2:
        raise TooShort(f"max_lag {max_lag} needs more than {max_lag + 2} points, got {n}")
    return np.array([pearson_r(x[:n - k], x[k:]).r for k in range(1, max_lag + 1)])


def pacf(s: MonthlyTimeSeries, max_lag: int) -> np.ndarray:
    """Entry ``k-1`` is the last coefficient of an AR(k) fit."""
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if len(s) < max_lag + 10:
        raise TooShort(f"pacf up to lag {max_lag} needs {max_lag + 10} months, got {len(s)}")
    return np.array([_last_ar_coefficient(s.values, k) for k in range(1, max_lag + 1)])


def _last_ar_coefficient(x, k):
    X = np.column_stack([np.ones(len(x) - k), lag_matrix(x, k)])
    return float(ols(X, x[k:]).coefficients[-1])


@dataclass(frozen=True)
class CrossCorrelation:
    lags: np.ndarray
    r_at_lag: np.ndarray
    p_at_lag: np.ndarray
    n_at_lag: np.ndarray
    ci99: float
    df_offset: int

    def at(self, lag: int) -> float:
        return float(self.r_at_lag[list(self.lags).index(lag)])

    def significant(self, alpha: float = 0.01) -> np.ndarray:
        return self.p_at_lag < alpha

    def peak(self) -> tuple[int, float]:
        i = int(np.argmax(np.abs(self.r_at_lag)))
        return int(self.lags[i]), float(self.r_at_lag[i])

    def to_dict(self):
        return {
            "lags": [int(k) for k in self.lags],
            "r": [float(v) for v in self.r_at_lag],
            "p": [float(v) for v in self.p_at_lag],
            "ci99": self.ci99,
            "df_offset": self.df_offset,
        }


def correlation_threshold(n: int, df_offset: int = 1, alpha: float = 0.01) -> float:
    """Smallest ``|r|`` that is significant at level ``alpha`` with ``n`` pairs."""
    df = n - df_offset
    t = t_isf(alpha, df)
    return float(t / np.sqrt(df + t * t))


def cross_correlation(x: MonthlyTimeSeries, y: MonthlyTimeSeries, max_lag: int, *,
                      df_offset: int = 1) -> CrossCorrelation:
    """Correlate ``x_t`` with ``y_{t+k}`` for ``k = -max_lag..max_lag``.

    A positive lag means ``x`` leads ``y``. Each lag uses only its
    overlapping pairs. Significance uses a Student-t reference with
    ``n - df_offset`` degrees of freedom; the default of 1 follows the
    cross-correlation convention of the original analysis, 2 gives the
    textbook test. ``ci99`` is the 99% threshold for the smallest overlap.
    """
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    x, y = align(x, y)
    a, b = x.values, y.values
    n = len(a)
    if n - max_lag < 10:
        raise TooShort(f"need at least {max_lag + 10} aligned months, got {n}")
    lags = np.arange(-max_lag, max_lag + 1)
    rs, ps, ns = [], [], []
    for k in lags:
        if k >= 0:
            u, v = a[:n - k], b[k:]
        else:
            u, v = a[-k:], b[:n + k]
        try:
            res = pearson_r(u, v, df_offset=df_offset)
        except ConstantInput:
            raise ConstantInput(f"constant segment at lag {k}") from None
        rs.append(res.r)
        ps.append(res.p_value)
        ns.append(res.n)
    return CrossCorrelation(lags, np.array(rs), np.array(ps), np.array(ns),
                            correlation_threshold(n - max_lag, df_offset), df_offset)


def format_ccf_csv(cc: CrossCorrelation) -> str:
    buf = io.StringIO()
    buf.write("lag,r,p,significant99\n")
    for k, r, p in zip(cc.lags, cc.r_at_lag, cc.p_at_lag):
        buf.write(f"{int(k)},{float(r)!r},{float(p)!r},{int(p < 0.01)}\n")
    return buf.getvalue()


