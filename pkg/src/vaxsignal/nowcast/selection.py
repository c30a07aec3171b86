"""Correlation-ranked forward selection of query series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConstantInput, TooShort
from ..stats import ols, pearson_r
from ..timeseries import MonthlyTimeSeries, SeriesWindow, slice_series
from .linear import ExogPanel


@dataclass(frozen=True)
class SelectionResult:
    ranking: tuple          # (name, r on the training window), strongest first
    chosen: tuple
    path: tuple             # validation RMSE after adding the top 1, 2, ... queries
    baseline_rmse: float    # intercept-only model
    improved: bool          # whether any query beat the baseline
    mode: str

    def to_dict(self):
        return {
            "mode": self.mode,
            "ranking": [{"name": n, "r": r} for n, r in self.ranking],
            "chosen": list(self.chosen),
            "validation_rmse_path": list(self.path),
            "baseline_rmse": self.baseline_rmse,
            "improved": self.improved,
        }


def _features(panel: ExogPanel, names, w: SeriesWindow, mode: str) -> np.ndarray:
    cols = np.column_stack([slice_series(panel[n], w).values for n in names])
    if mode == "aggregate":
        return cols.sum(axis=1, keepdims=True)
    return cols


def validation_rmse(y: MonthlyTimeSeries, panel: ExogPanel, names, train: SeriesWindow,
                    validate: SeriesWindow, mode: str = "separate") -> float:
    """Fit ``y ~ 1 + queries`` on ``train`` and score it on ``validate``."""
    yt = slice_series(y, train).values
    yv = slice_series(y, validate).values
    if not names:
        pred = np.full(len(yv), yt.mean())
    else:
        Xt = _features(panel, names, train, mode)
        Xv = _features(panel, names, validate, mode)
        coef = ols(np.column_stack([np.ones(len(yt)), Xt]), yt).coefficients
        pred = coef[0] + Xv @ coef[1:]
    return float(np.sqrt(np.mean((yv - pred) ** 2)))


def rank_queries(y: MonthlyTimeSeries, panel: ExogPanel, train: SeriesWindow) -> list[tuple[str, float]]:
    """Queries ordered by ``|r|`` with ``y`` over ``train``; ties keep panel order."""
    yt = slice_series(y, train).values
    scored = []
    for name in panel.names:
        try:
            r = pearson_r(slice_series(panel[name], train).values, yt).r
        except ConstantInput:
            raise ConstantInput(f"query {name!r} is constant over {train}") from None
        scored.append((name, r))
    return sorted(scored, key=lambda item: -abs(item[1]))


def select_queries(y: MonthlyTimeSeries, panel: ExogPanel, train: SeriesWindow, validate: SeriesWindow, *,
                   mode: str = "separate", max_queries: int | None = None,
                   min_rel_improvement: float = 0.05) -> SelectionResult:
    """Rank queries on ``train`` and add them from the top until validation error stops falling.

    Parameters
    ----------
    mode : {"separate", "aggregate"}
        ``separate`` gives every chosen query its own coefficient;
        ``aggregate`` sums the chosen queries into one regressor.
    max_queries : int, optional
        Cap on the number of queries tried.
    min_rel_improvement : float
        A query is kept only if it lowers the validation RMSE by at least
        this fraction of the best RMSE so far; the first query that does
        not ends the search.
    """
    if mode not in ("separate", "aggregate"):
        raise ValueError(f"unknown mode {mode!r}")
    for w in (train, validate):
        if len(w) < 12:
            raise TooShort(f"window {w} is shorter than 12 months")
    if train.start <= validate.end and validate.start <= train.end:
        raise ValueError("train and validation windows overlap")
    cover = y.window
    for w in (train, validate):
        if w.start < cover.start or w.end > cover.end:
            raise TooShort(f"window {w} is not covered by the target series {cover}")
        if panel.k and (w.start < panel.window.start or w.end > panel.window.end):
            raise TooShort(f"window {w} is not covered by the query panel {panel.window}")
    ranking = rank_queries(y, panel, train)
    limit = len(ranking) if max_queries is None else min(max_queries, len(ranking))
    # the separate-coefficient model needs more rows than columns
    if mode == "separate":
        limit = min(limit, len(train) - 2)
    baseline = validation_rmse(y, panel, (), train, validate, mode)
    # below this the fit is exact and further gains are rounding noise
    floor = 1e-10 * max(float(np.std(slice_series(y, validate).values)), 1e-300)
    best, chosen, path = baseline, (), []
    for m in range(1, limit + 1):
        names = tuple(n for n, _ in ranking[:m])
        err = validation_rmse(y, panel, names, train, validate, mode)
        path.append(err)
        if err < best * (1.0 - min_rel_improvement):
            best, chosen = err, names
            if best <= floor:
                break
        else:
            break
    return SelectionResult(tuple(ranking), chosen, tuple(path), baseline, bool(chosen), mode)
