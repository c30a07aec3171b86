"""Seeded synthetic data: registries, article counts and planted-regime signals.

Used by the demo fixtures, the end-to-end checks and ``vaxsignal synth``.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .registry import ArticleCount, PopulationCohort, VaccinationRecord
from .timeseries import MonthlyTimeSeries, SeriesWindow, YearMonth

HPV_TARGET_AGE = 144


def planted_regime_pair(seed: int, n_before: int = 36, n_after: int = 36, coupling: float = 0.9,
                        sigma: float = 0.1, start="2010-01") -> tuple[MonthlyTimeSeries, MonthlyTimeSeries, YearMonth]:
    """``y = +coupling * x + noise`` for ``n_before`` months, then ``-coupling * x + noise``.

    Returns ``(x, y, first_after_month)``.
    """
    rng = np.random.default_rng(seed)
    n = n_before + n_after
    x = rng.standard_normal(n)
    sign = np.where(np.arange(n) < n_before, 1.0, -1.0)
    y = sign * coupling * x + sigma * rng.standard_normal(n)
    start = YearMonth.parse(start) if isinstance(start, str) else start
    return MonthlyTimeSeries(start, x), MonthlyTimeSeries(start, y), start + n_before


def _birth_date(rng, month: YearMonth) -> dt.date:
    return dt.date(month.year, month.month, int(rng.integers(1, 29)))


def _vaccination_date(rng, month: YearMonth, birth: dt.date) -> dt.date:
    lo = birth.day if (month.year, month.month) == (birth.year, birth.month) else 1
    return dt.date(month.year, month.month, int(rng.integers(lo, 29)))


@dataclass(frozen=True)
class DemoRegistry:
    records: tuple
    cohorts: tuple
    window: SeriesWindow
    doses_per_month: dict
    eligible_per_month: dict


def demo_registry(seed: int = 0, n_records: int = 1000, start="2012-01", n_months: int = 12,
                  vaccine: str = "HPV", target_age_months: int = HPV_TARGET_AGE) -> DemoRegistry:
    """A small first-dose registry with known monthly counts.

    Every dose is given at the target age (birth month = vaccination month
    minus the target age), so activity equals doses / eligible * 100.
    """
    rng = np.random.default_rng(seed)
    start = YearMonth.parse(start) if isinstance(start, str) else start
    window = SeriesWindow(start, start + (n_months - 1))
    weights = rng.uniform(0.5, 1.5, n_months)
    doses = np.floor(weights / weights.sum() * n_records).astype(int)
    doses[: n_records - doses.sum()] += 1
    records, cohorts = [], []
    doses_per_month, eligible = {}, {}
    pid = 0
    for i, m in enumerate(window.months()):
        born = m - target_age_months
        size = int(doses[i] + rng.integers(5, 60))
        cohorts.append(PopulationCohort(born, size))
        doses_per_month[m] = int(doses[i])
        eligible[m] = size
        for _ in range(doses[i]):
            b = _birth_date(rng, born)
            records.append(VaccinationRecord(f"P{pid:06d}", b, _vaccination_date(rng, m, b), vaccine, 1))
            pid += 1
    return DemoRegistry(tuple(records), tuple(cohorts), window, doses_per_month, eligible)


@dataclass(frozen=True)
class MediaShockScenario:
    records: tuple
    cohorts: tuple
    articles: tuple
    window: SeriesWindow
    shock: YearMonth             # first month of the coupled regime
    rate: MonthlyTimeSeries      # planted expected activity, before sampling noise
    noise_floor: float           # sd of activity around the planted rate
    coupling: float


def media_shock_scenario(seed: int, start="2009-01", n_months: int = 96, shock_index: int = 54,
                         cohort_size: int = 3000, base_rate: float = 80.0, drop: float = 25.0,
                         coupling: float = 250.0, media_level: float = 0.15, media_sd_before: float = 0.01,
                         media_sd_after: float = 0.06, rate_noise: float = 0.5, vaccine: str = "HPV",
                         target_age_months: int = HPV_TARGET_AGE) -> MediaShockScenario:
    """Stable vaccination activity, then a regime where media attention depresses it.

    Article percentage ``x`` hovers around ``media_level`` and becomes
    bursty from the shock month on. Before the shock the activity rate is
    ``base_rate + noise`` regardless of media; afterwards it is
    ``base_rate - drop - coupling * (x - media_level) + noise``. Doses are
    Poisson draws around ``rate / 100 * eligible``.
    """
    rng = np.random.default_rng(seed)
    start = YearMonth.parse(start) if isinstance(start, str) else start
    window = SeriesWindow(start, start + (n_months - 1))
    after = np.arange(n_months) >= shock_index
    sd = np.where(after, media_sd_after, media_sd_before)
    x = np.clip(media_level + sd * rng.standard_normal(n_months), 0.005, None)
    planted = base_rate - np.where(after, drop + coupling * (x - media_level), 0.0)
    rate = np.clip(planted + rate_noise * rng.standard_normal(n_months), 1.0, None)

    months = window.months()
    sizes = cohort_size + rng.integers(-100, 101, n_months)
    cohorts = [PopulationCohort(m - target_age_months, int(s)) for m, s in zip(months, sizes)]
    records = []
    pid = 0
    for m, s, r in zip(months, sizes, rate):
        born = m - target_age_months
        for _ in range(int(rng.poisson(s * r / 100.0))):
            b = _birth_date(rng, born)
            records.append(VaccinationRecord(f"P{pid:07d}", b, _vaccination_date(rng, m, b), vaccine, 1))
            pid += 1

    articles = []
    for m, xv in zip(months, x):
        total = int(rng.integers(40_000, 60_000))
        matched = int(round(xv / 100.0 * total))
        articles.append(ArticleCount(m, matched, total))
    # idiosyncratic sd: rate noise plus Poisson sampling of doses, in activity units
    floor = math.sqrt(rate_noise ** 2 + float(np.mean(1e4 * (rate / 100.0) / sizes)))
    return MediaShockScenario(tuple(records), tuple(cohorts), tuple(articles), window,
                              start + shock_index, MonthlyTimeSeries(start, planted), floor, coupling)
