"""Linear nowcasting models: trend + single query, AR + exogenous queries, and
their LASSO / Elastic Net regularized versions.

The regularized fits minimize

    sum_t (y_t - mu - sum_i theta_i y_{t-i} - sum_j alpha_j Q_{j,t})^2
        + lam * (|theta|_1 + |alpha|_1) + eta * (|theta|_2^2 + |alpha|_2^2)

over regressors standardized to zero mean and unit variance; the intercept
is not penalized and coefficients are reported on the original scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import LengthMismatch, NotConverged, TooShort
from ..seasonal import lag_matrix
from ..stats import RegressionFit, ols
from ..timeseries import MonthlyTimeSeries, SeriesWindow, align_many, slice_series


@dataclass(frozen=True)
class ExogPanel:
    names: tuple
    series: tuple

    def __post_init__(self):
        names = tuple(self.names)
        series = tuple(self.series)
        if len(names) != len(series):
            raise LengthMismatch("one name per series")
        if len(set(names)) != len(names):
            raise ValueError("query names must be unique")
        if series:
            w = series[0].window
            if any(s.window != w for s in series):
                raise ValueError("panel series must share their month range; align them first")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "series", series)

    @classmethod
    def from_dict(cls, data: dict) -> "ExogPanel":
        names = list(data)
        aligned = align_many([data[n] for n in names]) if names else []
        return cls(tuple(names), tuple(aligned))

    @property
    def k(self) -> int:
        return len(self.names)

    @property
    def window(self) -> SeriesWindow | None:
        return self.series[0].window if self.series else None

    def matrix(self) -> np.ndarray:
        if not self.series:
            return np.empty((0, 0))
        return np.column_stack([s.values for s in self.series])

    def restrict(self, w: SeriesWindow) -> "ExogPanel":
        return ExogPanel(self.names, tuple(slice_series(s, w) for s in self.series))

    def subset(self, names) -> "ExogPanel":
        idx = [self.names.index(n) for n in names]
        return ExogPanel(tuple(self.names[i] for i in idx), tuple(self.series[i] for i in idx))

    def __getitem__(self, name) -> MonthlyTimeSeries:
        return self.series[self.names.index(name)]


@dataclass(frozen=True)
class Regularization:
    kind: str = "none"
    lam: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "lasso", "elastic_net"):
            raise ValueError(f"unknown regularization {self.kind!r}")
        if self.lam < 0 or self.eta < 0:
            raise ValueError("penalty weights must be non-negative")
        if self.kind == "lasso" and self.eta != 0:
            raise ValueError("lasso has no L2 weight; use elastic_net")

    @classmethod
    def lasso(cls, lam):
        return cls("lasso", float(lam), 0.0)

    @classmethod
    def elastic_net(cls, lam, eta):
        return cls("elastic_net", float(lam), float(eta))

    def to_dict(self):
        return {"kind": self.kind, "lam": self.lam, "eta": self.eta}


NONE = Regularization()


@dataclass(frozen=True)
class LinearNowcastModel:
    mu: float
    theta: np.ndarray
    alpha: np.ndarray
    trend_beta: float | None = None
    regularization: Regularization = NONE
    exog_names: tuple = ()
    train_window: SeriesWindow | None = None
    fit: RegressionFit | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return len(self.theta)

    @property
    def k(self) -> int:
        return len(self.alpha)

    def predict_at(self, lags, exog_now, t_index=None) -> float:
        """One value from ``lags = (y_{t-1}, ..., y_{t-p})`` and ``Q_{.,t}``."""
        out = self.mu + float(np.dot(self.theta, lags)) + float(np.dot(self.alpha, exog_now))
        if self.trend_beta is not None:
            out += self.trend_beta * t_index
        return out

    def predict(self, y: MonthlyTimeSeries | None, exog: ExogPanel | None) -> MonthlyTimeSeries:
        """One-step-ahead predictions for every month with lags and queries available.

        ``y`` supplies the observed history used as lags (it may be omitted
        for a model without AR terms). Trend indices count from the first
        training month.
        """
        parts = []
        if self.p:
            if y is None:
                raise ValueError("an AR model needs the observed series for its lags")
            parts.append(y)
        if self.k:
            if exog is None or exog.names != self.exog_names:
                raise ValueError(f"expected queries {list(self.exog_names)}")
            parts.extend(exog.series)
        if not parts:
            raise ValueError("nothing to predict from")
        parts = align_many(parts)
        start = parts[0].start + self.p
        n = len(parts[0]) - self.p
        if n <= 0:
            raise TooShort(f"need more than {self.p} months of history")
        yv = parts[0].values if self.p else None
        Q = np.column_stack([s.values for s in parts[1 if self.p else 0:]]) if self.k else None
        preds = []
        for i in range(n):
            t = i + self.p
            lags = yv[t - self.p:t][::-1] if self.p else ()
            q = Q[t] if self.k else ()
            t_index = None
            if self.trend_beta is not None:
                t_index = (start + i) - self.train_window.start
            preds.append(self.predict_at(lags, q, t_index))
        return MonthlyTimeSeries(start, preds)

    def to_dict(self):
        out = {
            "family": "linear",
            "mu": self.mu,
            "theta": [float(v) for v in self.theta],
            "alpha": dict(zip(self.exog_names, (float(v) for v in self.alpha))),
            "trend_beta": self.trend_beta,
            "regularization": self.regularization.to_dict(),
            "train_window": str(self.train_window) if self.train_window else None,
            "diagnostics": self.diagnostics,
        }
        if self.fit is not None:
            out["inference"] = self.fit.to_dict()
        return out

    @classmethod
    def from_dict(cls, d) -> "LinearNowcastModel":
        names = tuple(d["alpha"])
        reg = d.get("regularization") or {}
        return cls(
            float(d["mu"]),
            np.array(d["theta"], dtype=float),
            np.array([d["alpha"][n] for n in names], dtype=float),
            d.get("trend_beta"),
            Regularization(reg.get("kind", "none"), reg.get("lam", 0.0), reg.get("eta", 0.0)),
            names,
            SeriesWindow.parse(d["train_window"]) if d.get("train_window") else None,
            None,
            d.get("diagnostics", {}),
        )


def fit_linear_simple(y: MonthlyTimeSeries, q: MonthlyTimeSeries, with_trend: bool = False,
                      name: str = "q") -> LinearNowcastModel:
    """OLS of ``y_t = mu + alpha Q_t (+ beta t)``, ``t`` counted from 0 at the first month."""
    y, q = align_many([y, q])
    n = len(y)
    need = 5 if with_trend else 4
    if n < need:
        raise TooShort(f"need at least {need} months, got {n}")
    cols = [np.ones(n), q.values]
    names = ["mu", name]
    if with_trend:
        cols.append(np.arange(n, dtype=float))
        names.append("trend")
    fit = ols(np.column_stack(cols), y.values, names=tuple(names))
    c = fit.coefficients
    return LinearNowcastModel(float(c[0]), np.empty(0), np.array([c[1]]),
                              float(c[2]) if with_trend else None, NONE, (name,), y.window, fit)


def design_ar_exog(y: np.ndarray, Q: np.ndarray | None, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Regressor matrix (lags first, then queries) and target for rows ``t = p..n-1``."""
    parts = [lag_matrix(y, p)] if p else []
    if Q is not None and Q.size:
        parts.append(Q[p:])
    X = np.column_stack(parts) if parts else np.empty((len(y) - p, 0))
    return X, y[p:]


def fit_ar_exog(y: MonthlyTimeSeries, exog: ExogPanel | None = None, p: int = 12,
                reg: Regularization = NONE, *, tol: float = 1e-10, max_iter: int = 100_000) -> LinearNowcastModel:
    """Fit ``y_t = mu + sum theta_i y_{t-i} + sum alpha_j Q_{j,t}``.

    Unregularized fits use OLS (with inference attached). LASSO and Elastic
    Net fits run coordinate descent and accept more coefficients than rows.
    """
    if p < 0:
        raise ValueError("p must be >= 0")
    exog = exog if exog is not None and exog.k else None
    if exog is not None:
        parts = align_many([y, *exog.series])
        y = parts[0]
        exog = ExogPanel(exog.names, tuple(parts[1:]))
    n = len(y)
    if n - p < 10:
        raise TooShort(f"need at least {p + 10} months for p={p}, got {n}")
    X, target = design_ar_exog(y.values, exog.matrix() if exog else None, p)
    names = tuple(f"y_lag{i}" for i in range(1, p + 1)) + (exog.names if exog else ())
    k = exog.k if exog else 0
    if reg.kind == "none":
        fit = ols(np.column_stack([np.ones(len(target)), X]), target, names=("mu",) + names)
        c = fit.coefficients
        return LinearNowcastModel(float(c[0]), c[1:p + 1].copy(), c[p + 1:].copy(), None, reg,
                                  exog.names if exog else (), y.window, fit)
    res = elastic_net(X, target, reg.lam, reg.eta, tol=tol, max_iter=max_iter)
    return LinearNowcastModel(res.intercept, res.coef[:p].copy(), res.coef[p:p + k].copy(), None, reg,
                              exog.names if exog else (), y.window, None, res.diagnostics())


# -- coordinate descent -------------------------------------------------------

@dataclass
class ElasticNetResult:
    intercept: float
    coef: np.ndarray
    n_iter: int
    gap: float
    objective: list
    converged: bool

    def diagnostics(self):
        return {"n_iter": self.n_iter, "duality_gap": self.gap,
                "objective": self.objective[-1] if self.objective else None,
                "converged": self.converged}


def _standardize(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    live = scale > 1e-12 * np.maximum(np.abs(mean), 1.0)
    Z = np.zeros_like(X)
    Z[:, live] = (X[:, live] - mean[live]) / scale[live]
    return Z, mean, np.where(live, scale, 1.0), live


def lasso_threshold(X, y) -> float:
    """Smallest ``lam`` at which every standardized slope is exactly zero."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Z, *_ = _standardize(X)
    return float(2.0 * np.max(np.abs(Z.T @ (y - y.mean())))) if X.shape[1] else 0.0


def penalized_objective(Z, yc, b, lam, eta) -> float:
    r = yc - Z @ b
    return float(r @ r + lam * np.abs(b).sum() + eta * (b @ b))


def _duality_gap(Z, yc, b, r, lam, eta) -> float:
    """Upper bound on the suboptimality of ``b`` for the penalized objective."""
    # work with 1/2 |r|^2 + a |b|_1 + (eta/2) |b|^2, then double
    a = 0.5 * lam
    primal = 0.5 * float(r @ r) + a * float(np.abs(b).sum()) + 0.5 * eta * float(b @ b)
    v = Z.T @ r
    bounds = []
    if eta > 0:
        # dual point theta = r; conjugate of the penalty is sum (|v| - a)_+^2 / (2 eta)
        excess = np.maximum(np.abs(v) - a, 0.0)
        dual = 0.5 * float(yc @ yc) - 0.5 * float((yc - r) @ (yc - r)) - float(excess @ excess) / (2 * eta)
        bounds.append(primal - dual)
    if a > 0:
        # LASSO dual lower-bounds the optimum too: rescale the residual into its feasible set
        theta = min(1.0, a / max(float(np.max(np.abs(v))), 1e-300)) * r
        dual = 0.5 * float(yc @ yc) - 0.5 * float((yc - theta) @ (yc - theta))
        bounds.append(primal - dual)
    # the unpenalized optimum lower-bounds the penalized one
    d, *_ = np.linalg.lstsq(Z, r, rcond=None)
    proj = Z @ d
    bounds.append(primal - 0.5 * float(r @ r) + 0.5 * float(proj @ proj))
    return max(0.0, 2.0 * min(bounds))


def elastic_net(X, y, lam: float, eta: float = 0.0, *, tol: float = 1e-10,
                max_iter: int = 100_000) -> ElasticNetResult:
    """Cyclic coordinate descent for the penalized least-squares objective.

    Stops when no standardized coefficient moves by more than ``tol`` in a
    full sweep. Raises :class:`NotConverged` after ``max_iter`` sweeps.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    ybar = float(y.mean())
    yc = y - ybar
    if k == 0:
        return ElasticNetResult(ybar, np.empty(0), 0, 0.0, [float(yc @ yc)], True)
    Z, mean, scale, live = _standardize(X)
    if lam >= 2.0 * float(np.max(np.abs(Z.T @ yc))):
        # every slope is exactly zero at and above the threshold
        return ElasticNetResult(ybar, np.zeros(k), 0, 0.0, [float(yc @ yc)], True)
    col_sq = np.einsum("ij,ij->j", Z, Z)
    b = np.zeros(k)
    r = yc.copy()
    half_lam = 0.5 * lam
    history = [penalized_objective(Z, yc, b, lam, eta)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        max_step = 0.0
        for j in range(k):
            if not live[j]:
                continue
            old = b[j]
            rho = float(Z[:, j] @ r) + col_sq[j] * old
            new = math.copysign(max(abs(rho) - half_lam, 0.0), rho) / (col_sq[j] + eta)
            if new != old:
                r -= Z[:, j] * (new - old)
                b[j] = new
                max_step = max(max_step, abs(new - old))
        obj = penalized_objective(Z, yc, b, lam, eta)
        assert obj <= history[-1] + 1e-9 * max(1.0, abs(history[-1])), "coordinate descent increased the objective"
        history.append(obj)
        if max_step <= tol * max(1.0, float(np.max(np.abs(b)))):
            converged = True
            break
    gap = _duality_gap(Z, yc, b, r, lam, eta)
    if not converged:
        raise NotConverged(f"coordinate descent did not converge in {max_iter} sweeps (gap {gap:.3g})",
                           gap=gap, n_iter=it)
    coef = np.where(live, b / scale, 0.0)
    intercept = ybar - float(coef @ mean)
    return ElasticNetResult(intercept, coef, it, gap, history, True)


# -- rolling refits -------------------------------------------------------------

@dataclass(frozen=True)
class RollingNowcast:
    predictions: MonthlyTimeSeries
    actuals: MonthlyTimeSeries
    models: tuple

    def rmse(self) -> float:
        e = self.predictions.values - self.actuals.values
        return float(np.sqrt(np.mean(e * e)))


def refit_rolling(y: MonthlyTimeSeries, exog: ExogPanel | None, p: int, reg: Regularization = NONE,
                  window: int = 24, **kwargs) -> RollingNowcast:
    """Refit on the trailing ``window`` months before each month and predict it.

    The first forecast month is ``start + window``.
    """
    exog = exog if exog is not None and exog.k else None
    if exog is not None:
        parts = align_many([y, *exog.series])
        y = parts[0]
        exog = ExogPanel(exog.names, tuple(parts[1:]))
    n = len(y)
    if window - p < 10:
        raise TooShort(f"window {window} leaves fewer than 10 rows for p={p}")
    if n <= window:
        raise TooShort(f"need more than {window} months, got {n}")
    yv = y.values
    Q = exog.matrix() if exog else None
    preds, models = [], []
    for t in range(window, n):
        w = SeriesWindow(y.start + (t - window), y.start + (t - 1))
        model = fit_ar_exog(slice_series(y, w), exog.restrict(w) if exog else None, p, reg, **kwargs)
        lags = yv[t - p:t][::-1] if p else ()
        preds.append(model.predict_at(lags, Q[t] if exog else ()))
        models.append(model)
    first = y.start + window
    return RollingNowcast(MonthlyTimeSeries(first, preds), MonthlyTimeSeries(first, yv[window:]), tuple(models))
