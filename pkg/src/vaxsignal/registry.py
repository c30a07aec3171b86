"""Raw registry and media-archive records, and the monthly signals derived from them.

Vaccination activity for month ``m`` is the number of doses given in ``m``
relative to the number of persons reaching the target age in ``m``, times
100. It exceeds 100 whenever catch-up vaccination is going on.
"""

from __future__ import annotations

import csv
import datetime as dt
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (InconsistentData, MissingCohort, MissingMonth, ParseError,
                     UnknownStance, ZeroDenominator)
from .timeseries import MonthlyTimeSeries, SeriesWindow, YearMonth

STANCES = ("pro", "anti", "neutral", "irrelevant")


@dataclass(frozen=True)
class VaccinationRecord:
    person_id: str
    birth_date: dt.date
    vaccination_date: dt.date
    vaccine: str
    dose: int

    def __post_init__(self):
        if self.vaccination_date < self.birth_date:
            raise ValueError(f"{self.person_id}: vaccinated before birth")
        if self.dose < 1:
            raise ValueError(f"{self.person_id}: dose must be >= 1, got {self.dose}")

    @property
    def vaccination_month(self) -> YearMonth:
        return YearMonth.of(self.vaccination_date)

    @property
    def birth_month(self) -> YearMonth:
        return YearMonth.of(self.birth_date)

    @property
    def age_months(self) -> int:
        return age_in_months(self.birth_date, self.vaccination_date)


@dataclass(frozen=True)
class PopulationCohort:
    birth_month: YearMonth
    count: int

    def __post_init__(self):
        if self.count < 0:
            raise ValueError(f"negative cohort size for {self.birth_month}")


@dataclass(frozen=True)
class ArticleCount:
    month: YearMonth
    matched: int
    normalizer: int
    stance: str | None = None

    def __post_init__(self):
        if self.normalizer < 1:
            raise ValueError(f"{self.month}: normalizer must be >= 1")
        if not 0 <= self.matched <= self.normalizer:
            raise ValueError(f"{self.month}: matched must lie in [0, normalizer]")
        if self.stance is not None and self.stance not in STANCES:
            raise UnknownStance(f"unknown stance {self.stance!r}; expected one of {STANCES}")


@dataclass(frozen=True)
class VaccineSchedule:
    """Dose index -> target age in months, e.g. ``((1, 15), (2, 144))``."""

    entries: tuple

    def __post_init__(self):
        entries = tuple(sorted((int(d), int(a)) for d, a in self.entries))
        if not entries:
            raise ValueError("empty schedule")
        ages = [a for _, a in entries]
        if any(b <= a for a, b in zip(ages, ages[1:])):
            raise ValueError("target ages must increase with dose index")
        object.__setattr__(self, "entries", entries)

    @property
    def final_dose(self) -> int:
        return self.entries[-1][0]


@dataclass(frozen=True)
class ScheduleVersion:
    """A schedule together with the period in which it was in force."""

    schedule: VaccineSchedule
    valid_from: dt.date
    valid_to: dt.date | None = None

    def covers(self, d: dt.date) -> bool:
        return self.valid_from <= d and (self.valid_to is None or d <= self.valid_to)


def age_in_months(birth: dt.date, when: dt.date) -> int:
    """Whole months elapsed between two dates (floor)."""
    months = (when.year - birth.year) * 12 + (when.month - birth.month)
    if when.day < birth.day:
        months -= 1
    return months


def assign_dose_group(record: VaccinationRecord, schedule: VaccineSchedule) -> int:
    """Dose index whose target age is closest to the age at vaccination.

    Equidistant ages go to the lower dose index.
    """
    age = record.age_months
    best, best_gap = None, None
    for dose, target in schedule.entries:
        gap = abs(age - target)
        if best_gap is None or gap < best_gap:
            best, best_gap = dose, gap
    return best


def regroup_doses(records: Iterable[VaccinationRecord], schedule: VaccineSchedule) -> list[VaccinationRecord]:
    """Replace each record's dose with its schedule group."""
    return [VaccinationRecord(r.person_id, r.birth_date, r.vaccination_date, r.vaccine,
                              assign_dose_group(r, schedule)) for r in records]


def schedule_in_force(versions: Sequence[ScheduleVersion], d: dt.date) -> VaccineSchedule:
    for v in versions:
        if v.covers(d):
            return v.schedule
    raise LookupError(f"no schedule in force on {d}")


def completed_persons(records: Iterable[VaccinationRecord], versions: Sequence[ScheduleVersion]) -> set:
    """Persons who received the final dose of the schedule in force at their first dose."""
    by_person = defaultdict(list)
    for r in records:
        by_person[r.person_id].append(r)
    done = set()
    for pid, recs in by_person.items():
        first = min(recs, key=lambda r: (r.vaccination_date, r.dose))
        final = schedule_in_force(versions, first.vaccination_date).final_dose
        if any(r.dose >= final for r in recs):
            done.add(pid)
    return done


def validate_dose_sequence(records: Iterable[VaccinationRecord]) -> list[str]:
    """Report persons holding dose ``n+1`` without dose ``n``, or duplicate doses."""
    doses = defaultdict(list)
    for r in records:
        doses[(r.person_id, r.vaccine)].append(r.dose)
    problems = []
    for (pid, vac), ds in sorted(doses.items()):
        counts = Counter(ds)
        for d, c in sorted(counts.items()):
            if c > 1:
                problems.append(f"{pid} {vac}: dose {d} recorded {c} times")
        for d in sorted(counts):
            if d > 1 and d - 1 not in counts:
                problems.append(f"{pid} {vac}: dose {d} without dose {d - 1}")
    return problems


def _cohort_map(cohorts: Iterable[PopulationCohort]) -> dict:
    out = {}
    for c in cohorts:
        if c.birth_month in out:
            raise InconsistentData(f"duplicate cohort row for {c.birth_month}")
        out[c.birth_month] = c.count
    return out


def vaccination_activity(records: Iterable[VaccinationRecord], cohorts: Iterable[PopulationCohort],
                         dose: int, target_age_months: int, window: SeriesWindow, *,
                         vaccine: str | None = None, age_band: tuple | None = None) -> MonthlyTimeSeries:
    """Monthly doses per 100 persons reaching the target age that month.

    Parameters
    ----------
    records, cohorts
        Dose records and birth-month population counts.
    dose
        Dose index counted in the numerator.
    target_age_months
        The denominator for month ``m`` is the cohort born ``m - target_age_months``.
    window
        Months to produce.
    vaccine
        Restrict the numerator to one vaccine label.
    age_band
        ``(min_months, max_months)`` inclusive filter on age at vaccination;
        ``None`` counts every record (catch-up doses included).
    """
    size = _cohort_map(cohorts)
    numer = Counter()
    for r in records:
        if r.dose != dose or (vaccine is not None and r.vaccine != vaccine):
            continue
        if age_band is not None and not age_band[0] <= r.age_months <= age_band[1]:
            continue
        m = r.vaccination_month
        if m in window:
            numer[m] += 1
    values = []
    for m in window.months():
        born = m - target_age_months
        if born not in size:
            raise MissingCohort(f"birth month {born} (denominator for {m})")
        if size[born] == 0:
            raise ZeroDenominator(f"no persons reach the target age in {m}")
        values.append(100.0 * numer[m] / size[born])
    return MonthlyTimeSeries(window.start, values)


def uptake_by_cohort(records: Iterable[VaccinationRecord], cohorts: Iterable[PopulationCohort],
                     dose: int, *, vaccine: str | None = None) -> dict[int, float]:
    """Percentage of each birth-year cohort with the given dose recorded."""
    per_year = defaultdict(int)
    for c in cohorts:
        per_year[c.birth_month.year] += c.count
    vaccinated = defaultdict(set)
    for r in records:
        if r.dose != dose or (vaccine is not None and r.vaccine != vaccine):
            continue
        year = r.birth_date.year
        if year not in per_year:
            raise MissingCohort(f"birth year {year}")
        vaccinated[year].add(r.person_id)
    out = {}
    for year in sorted(per_year):
        total = per_year[year]
        got = len(vaccinated.get(year, ()))
        if total == 0:
            if got:
                raise InconsistentData(f"birth year {year}: vaccinated persons in an empty cohort")
            raise ZeroDenominator(f"birth year {year} has no persons")
        if got > total:
            raise InconsistentData(f"birth year {year}: {got} vaccinated exceeds cohort size {total}")
        out[year] = 100.0 * got / total
    return out


def _monthly_totals(counts: Iterable[ArticleCount]):
    matched = defaultdict(int)
    normalizer = {}
    for c in counts:
        matched[c.month] += c.matched
        prev = normalizer.setdefault(c.month, c.normalizer)
        if prev != c.normalizer:
            raise InconsistentData(f"{c.month}: conflicting normalizer counts {prev} and {c.normalizer}")
    return matched, normalizer


def article_percentage(counts: Iterable[ArticleCount], window: SeriesWindow) -> MonthlyTimeSeries:
    """Matched articles as a percentage of the month's archive size.

    Rows split by stance are summed per month; they must agree on the normalizer.
    """
    matched, normalizer = _monthly_totals(counts)
    values = []
    for m in window.months():
        if m not in normalizer:
            raise MissingMonth(f"no article count for {m}")
        if matched[m] > normalizer[m]:
            raise InconsistentData(f"{m}: matched articles exceed the normalizer")
        values.append(100.0 * matched[m] / normalizer[m])
    return MonthlyTimeSeries(window.start, values)


def stance_series(counts: Iterable[ArticleCount], stance: str, window: SeriesWindow) -> MonthlyTimeSeries:
    """Raw monthly count of matched articles carrying ``stance``; absent months count zero."""
    if stance not in STANCES:
        raise UnknownStance(f"unknown stance {stance!r}; expected one of {STANCES}")
    per_month = Counter()
    for c in counts:
        if c.stance == stance and c.month in window:
            per_month[c.month] += c.matched
    return MonthlyTimeSeries(window.start, [float(per_month[m]) for m in window.months()])


# -- CSV ingestion ----------------------------------------------------------

def _rows(path, expected, optional=()):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", str(path))
        header = [h.strip() for h in header]
        if header not in (list(expected), list(expected) + list(optional)):
            want = ",".join(expected) + "".join(f"[,{o}]" for o in optional)
            raise ParseError(f"expected header {want!r}, got {','.join(header)!r}", str(path), 1)
        width = len(header)
        any_rows = False
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} fields, got {len(row)}", str(path), lineno)
            any_rows = True
            yield lineno, [c.strip() for c in row]
        if not any_rows:
            raise ParseError("no data rows", str(path))


def read_vaccinations_csv(path) -> list[VaccinationRecord]:
    out = []
    for lineno, (pid, born, vacc, vaccine, dose) in _rows(
            path, ("person_id", "birth_date", "vaccination_date", "vaccine", "dose")):
        try:
            out.append(VaccinationRecord(pid, dt.date.fromisoformat(born), dt.date.fromisoformat(vacc),
                                         vaccine, int(dose)))
        except ValueError as exc:
            raise ParseError(str(exc), str(path), lineno) from None
    return out


def read_cohorts_csv(path) -> list[PopulationCohort]:
    out = []
    for lineno, (month, count) in _rows(path, ("birth_month", "count")):
        try:
            out.append(PopulationCohort(YearMonth.parse(month), int(count)))
        except ValueError as exc:
            raise ParseError(str(exc), str(path), lineno) from None
    return out


def read_articles_csv(path) -> list[ArticleCount]:
    out = []
    for lineno, row in _rows(path, ("month", "matched", "normalizer"), ("stance",)):
        try:
            stance = (row[3] or None) if len(row) == 4 else None
            out.append(ArticleCount(YearMonth.parse(row[0]), int(row[1]), int(row[2]), stance))
        except ValueError as exc:
            raise ParseError(str(exc), str(path), lineno) from None
    return out


def write_vaccinations_csv(records: Iterable[VaccinationRecord], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["person_id", "birth_date", "vaccination_date", "vaccine", "dose"])
        for r in records:
            w.writerow([r.person_id, r.birth_date.isoformat(), r.vaccination_date.isoformat(),
                        r.vaccine, r.dose])


def write_cohorts_csv(cohorts: Iterable[PopulationCohort], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["birth_month", "count"])
        for c in cohorts:
            w.writerow([str(c.birth_month), c.count])


def write_articles_csv(counts: Iterable[ArticleCount], path) -> None:
    counts = list(counts)
    with_stance = any(c.stance is not None for c in counts)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month", "matched", "normalizer"] + (["stance"] if with_stance else []))
        for c in counts:
            row = [str(c.month), c.matched, c.normalizer]
            if with_stance:
                row.append(c.stance or "")
            w.writerow(row)
