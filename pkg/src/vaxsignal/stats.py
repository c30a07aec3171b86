"""Correlation, Student-t tail probabilities and least-squares inference."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstantInput, LengthMismatch, RankDeficient, TooFewRows

_EPS = 1e-16
_TINY = 1e-300
_MAX_CF_TERMS = 10_000


def _betacf(a, b, x):
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_CF_TERMS + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, y: float | None = None) -> float:
    """Regularized incomplete beta function I_x(a, b).

    ``y`` may supply ``1 - x`` when the caller can form it without
    cancellation.
    """
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if y is None:
        y = 1.0 - x
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log(y))
    front = math.exp(log_front)
    # the fraction converges fast only on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, y) / b


def t_sf(t: float, df: float) -> float:
    """Two-sided tail probability ``P(|T| >= |t|)`` for Student's t with ``df`` dof."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 0.0
    t2 = t * t
    if t2 == 0.0:
        return 1.0
    # P(|T| >= t) = I_{df/(df+t^2)}(df/2, 1/2); both x and 1 - x are formed
    # as ratios so neither tail loses digits to cancellation
    x = df / (df + t2)
    return min(1.0, max(0.0, betainc(0.5 * df, 0.5, x, t2 / (df + t2))))


def t_isf(p: float, df: float) -> float:
    """Positive ``t`` with two-sided tail probability ``p``."""
    if not 0.0 < p <= 1.0:
        raise ValueError("p must be in (0, 1]")
    if p == 1.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while t_sf(hi, df) > p:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_sf(mid, df) > p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    n: int
    p_value: float
    df: int = 0

    def to_dict(self):
        return {"r": self.r, "n": self.n, "p_value": self.p_value, "df": self.df}


def correlation_p_value(r: float, df: int, one_sided: bool = False) -> float:
    """Significance of a sample correlation via ``t = r * sqrt(df / (1 - r^2))``.

    With ``one_sided`` the alternative is a correlation of the observed sign.
    """
    if df < 1:
        return math.nan
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt(df / (1.0 - r * r))
    p = t_sf(t, df)
    return 0.5 * p if one_sided else p


def pearson_r(x, y, *, df_offset: int = 2, one_sided: bool = False) -> CorrelationResult:
    """Pearson correlation with a Student-t significance test.

    Parameters
    ----------
    x, y : array_like
        Equal-length samples, at least 3 points, neither constant.
    df_offset : int
        Degrees of freedom are ``n - df_offset``. The textbook test uses 2;
        the cross-correlation analysis uses 1.
    one_sided : bool
        Halve the two-sided p-value.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"shapes {x.shape} and {y.shape} differ")
    n = x.size
    if n < 3:
        raise TooFewRows(f"need at least 3 points, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    scale_x = float(np.max(np.abs(x))) or 1.0
    scale_y = float(np.max(np.abs(y))) or 1.0
    if sxx <= (1e-13 * scale_x) ** 2 * n or syy <= (1e-13 * scale_y) ** 2 * n:
        raise ConstantInput("correlation undefined for a constant input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    df = n - df_offset
    return CorrelationResult(r, n, correlation_p_value(r, df, one_sided), df)


@dataclass(frozen=True)
class RegressionFit:
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    r_squared: float
    n: int
    residuals: np.ndarray = field(repr=False, default=None)
    names: tuple = ()

    @property
    def df_resid(self) -> int:
        return self.n - len(self.coefficients)

    @property
    def rss(self) -> float:
        return float(self.residuals @ self.residuals)

    def to_dict(self):
        names = self.names or tuple(f"b{i}" for i in range(len(self.coefficients)))
        return {
            "terms": [
                {"name": nm, "coef": float(c), "std_error": float(s), "t": float(t), "p_value": float(p)}
                for nm, c, s, t, p in zip(names, self.coefficients, self.std_errors,
                                          self.t_stats, self.p_values)
            ],
            "r_squared": self.r_squared,
            "n": self.n,
        }


def ols(X, y, names=()) -> RegressionFit:
    """Least squares with classical standard errors, solved by QR.

    ``X`` is the full design matrix; include a column of ones for an
    intercept. ``r_squared`` is computed against the mean of ``y``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if y.shape != (n,):
        raise LengthMismatch(f"design has {n} rows but y has shape {y.shape}")
    if n <= k:
        raise TooFewRows(f"need more rows than columns (n={n}, k={k})")
    Q, R = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(R))
    col_norms = np.linalg.norm(X, axis=0)
    if np.any(col_norms == 0) or np.any(diag <= 1e-11 * col_norms):
        raise RankDeficient("design matrix is not of full column rank")
    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    df = n - k
    sigma2 = rss / df
    Rinv = np.linalg.solve(R, np.eye(k))
    cov_diag = np.sum(Rinv * Rinv, axis=1)
    se = np.sqrt(sigma2 * cov_diag)
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = np.where(se > 0, beta / np.where(se > 0, se, 1.0),
                         np.where(beta != 0, np.sign(beta) * np.inf, 0.0))
    pvals = np.array([t_sf(float(t), df) for t in tstat])
    yc = y - y.mean()
    tss = float(yc @ yc)
    if tss <= 0.0:
        r2 = 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - rss / tss))
    return RegressionFit(beta, se, tstat, pvals, r2, n, resid, tuple(names))


def with_intercept(*columns) -> np.ndarray:
    """Stack regressors next to a leading column of ones."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    n = len(cols[0])
    return np.column_stack([np.ones(n)] + cols)
