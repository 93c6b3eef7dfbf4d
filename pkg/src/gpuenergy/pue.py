"""Datacenter PUE: hourly means, daily/monthly/annual variation, forecasting.

Calendar arithmetic uses a fixed UTC offset in minutes (datacenter local
time).  Daylight-saving transitions are not modelled.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from decimal import Decimal, localcontext
from pathlib import Path
from typing import Iterable, Iterator, Literal, Mapping, Sequence

from .errors import DomainError, InsufficientDataError, ParseError

HOUR_MS = 3_600_000
DAY_MS = 24 * HOUR_MS
FORECAST_DAYS = 7


def compute_pue(fe: float, it: float) -> float:
    """Power usage effectiveness ``(FE + IT) / IT``.

    Meter readings are decimal quantities, so the ratio is formed in decimal
    arithmetic on their shortest representations (0.59 MJ over 1.0 MJ gives
    1.59, not 1.5899999999999999).
    """
    if not it > 0:
        raise DomainError(f"IT energy must be positive, got {it}")
    if not fe >= 0:
        raise DomainError(f"facility energy must be non-negative, got {fe}")
    d_fe, d_it = Decimal(repr(float(fe))), Decimal(repr(float(it)))
    with localcontext() as ctx:
        ctx.prec = 34
        return float((d_fe + d_it) / d_it)


@dataclass(frozen=True)
class PueSample:
    interval_start: int
    interval_end: int
    facility_energy: float
    it_energy: float

    def __post_init__(self) -> None:
        if self.interval_end <= self.interval_start:
            raise DomainError("meter interval must have positive length")
        if not self.it_energy > 0:
            raise DomainError(f"IT energy must be positive, got {self.it_energy}")
        if self.facility_energy < 0:
            raise DomainError("facility energy must be non-negative")

    @property
    def pue(self) -> float:
        return compute_pue(self.facility_energy, self.it_energy)


@dataclass(frozen=True)
class HourlyPue:
    day: date
    hour: int
    mean_pue: float | None
    sample_count: int

    def __post_init__(self) -> None:
        if not 0 <= self.hour <= 23:
            raise DomainError(f"hour must be in 0..23, got {self.hour}")
        if (self.mean_pue is None) != (self.sample_count == 0):
            raise DomainError("mean_pue is present exactly when sample_count >= 1")


@dataclass(frozen=True)
class VariationStat:
    scope: Literal["day", "month", "year"]
    value: float
    complete: bool
    period: str = ""
    count: int = 1

    def __post_init__(self) -> None:
        if self.value < 0:
            raise DomainError("variation must be non-negative")


def _tz(offset_minutes: int) -> timezone:
    if not -720 <= offset_minutes <= 840:
        raise DomainError(f"UTC offset {offset_minutes} min outside [-720, 840]")
    return timezone(timedelta(minutes=offset_minutes))


def local_midnight_ms(day: date, tz_offset: int = 0) -> int:
    dt = datetime(day.year, day.month, day.day, tzinfo=_tz(tz_offset))
    return int(dt.timestamp()) * 1000


def local_date(ms: int, tz_offset: int = 0) -> date:
    return datetime.fromtimestamp(ms / 1000, tz=_tz(tz_offset)).date()


def _bucket(samples: Iterable[PueSample], tz_offset: int):
    """Accumulate (weight, weight*pue) terms per local (day, hour).

    Each sample contributes to every hour its interval overlaps, weighted by
    the overlap in milliseconds.
    """
    origin = local_midnight_ms(date(1970, 1, 1), tz_offset)
    terms: dict[tuple[date, int], list[tuple[int, float]]] = defaultdict(list)
    for s in samples:
        pue = s.pue
        t = s.interval_start
        while t < s.interval_end:
            hour_start = origin + (t - origin) // HOUR_MS * HOUR_MS
            hour_end = min(hour_start + HOUR_MS, s.interval_end)
            local = datetime.fromtimestamp(hour_start / 1000, tz=_tz(tz_offset))
            terms[(local.date(), local.hour)].append((hour_end - t, pue))
            t = hour_end
    return terms


def _mean(terms: list[tuple[int, float]]) -> float:
    total = math.fsum(w for w, _ in terms)
    return math.fsum(w * p for w, p in terms) / total


def hourly_by_day(
    samples: Iterable[PueSample], tz_offset: int = 0
) -> dict[date, list[HourlyPue]]:
    """Duration-weighted hourly mean PUE for every local day touched."""
    terms = _bucket(samples, tz_offset)
    days = sorted({d for d, _ in terms})
    out: dict[date, list[HourlyPue]] = {}
    for d in days:
        row = []
        for h in range(24):
            t = terms.get((d, h))
            row.append(HourlyPue(d, h, _mean(t), len(t)) if t else HourlyPue(d, h, None, 0))
        out[d] = row
    return out


def hourly_averages(
    samples: Iterable[PueSample], day: date, tz_offset: int = 0
) -> list[HourlyPue]:
    """The 24 hourly means for one local day.

    Samples straddling the day's edges contribute only their overlap.
    """
    start = local_midnight_ms(day, tz_offset)
    inside = [s for s in samples if s.interval_end > start and s.interval_start < start + DAY_MS]
    row = hourly_by_day(inside, tz_offset).get(day)
    return row if row is not None else [HourlyPue(day, h, None, 0) for h in range(24)]


def daily_variation(hourly: Sequence[HourlyPue]) -> VariationStat:
    """Percent difference between the day's highest and lowest hourly mean,
    relative to the lowest."""
    present = [h.mean_pue for h in hourly if h.mean_pue is not None]
    if len(present) < 2:
        raise InsufficientDataError(f"daily variation needs 2 hourly means, got {len(present)}")
    lo, hi = min(present), max(present)
    period = hourly[0].day.isoformat() if hourly else ""
    return VariationStat("day", 100.0 * (hi - lo) / lo, len(present) == 24, period)


def _average(stats: Sequence[VariationStat], scope, period: str) -> VariationStat:
    if not stats:
        raise InsufficientDataError(f"{scope} variation needs at least one day")
    value = math.fsum(s.value for s in stats) / len(stats)
    return VariationStat(scope, value, all(s.complete for s in stats), period, len(stats))


def monthly_variation(days: Sequence[VariationStat], period: str = "") -> VariationStat:
    """Mean of the daily variations of one month."""
    return _average(list(days), "month", period)


def annual_variation(days: Sequence[VariationStat], period: str = "") -> VariationStat:
    """Mean over every day of the year (not the mean of monthly means)."""
    return _average(list(days), "year", period)


@dataclass(frozen=True)
class VariationTable:
    months: tuple[VariationStat, ...]
    annual: VariationStat | None
    days: tuple[VariationStat, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["month", "variation_pct"])
        for m in self.months:
            w.writerow([m.period, f"{m.value:.2f}"])
        if self.annual is not None:
            w.writerow(["annual", f"{self.annual.value:.2f}"])
        return buf.getvalue()


def variation_table(samples: Iterable[PueSample], tz_offset: int = 0) -> VariationTable:
    """Daily, monthly and annual variation for a meter history.

    Days with fewer than two hourly means are skipped.  The annual figure
    averages all days when every day falls in one calendar year; otherwise
    it is omitted.
    """
    daily: list[VariationStat] = []
    for row in hourly_by_day(samples, tz_offset).values():
        try:
            daily.append(daily_variation(row))
        except InsufficientDataError:
            continue
    by_month: dict[str, list[VariationStat]] = defaultdict(list)
    for d in daily:
        by_month[d.period[:7]].append(d)
    months = tuple(monthly_variation(v, k) for k, v in sorted(by_month.items()))
    years = {d.period[:4] for d in daily}
    annual = annual_variation(daily, years.pop()) if len(years) == 1 else None
    return VariationTable(months, annual, tuple(daily))


@dataclass(frozen=True)
class PueForecast:
    """Piecewise-constant PUE values on a regular grid starting at ``start``."""

    start: int
    values: tuple[float, ...]
    step: int = HOUR_MS

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.step <= 0:
            raise DomainError("forecast step must be positive")
        if any(not v >= 1 for v in self.values):
            raise DomainError("forecast PUE values must be >= 1")

    @property
    def end(self) -> int:
        return self.start + self.step * len(self.values)

    @classmethod
    def from_hourly(cls, hourly: Sequence[HourlyPue], tz_offset: int = 0) -> PueForecast:
        """Use observed hourly means (consecutive, all present) as a forecast."""
        if not hourly:
            raise InsufficientDataError("no hourly values")
        rows = sorted(hourly, key=lambda h: (h.day, h.hour))
        start = local_midnight_ms(rows[0].day, tz_offset) + rows[0].hour * HOUR_MS
        values = []
        for i, h in enumerate(rows):
            expect = start + i * HOUR_MS
            if local_midnight_ms(h.day, tz_offset) + h.hour * HOUR_MS != expect:
                raise InsufficientDataError(f"hourly values are not consecutive at {h.day} {h.hour}:00")
            if h.mean_pue is None:
                raise InsufficientDataError(f"no PUE observed at {h.day} {h.hour}:00")
            values.append(h.mean_pue)
        return cls(start, tuple(values))


def forecast_pue(
    history: Iterable[HourlyPue], horizon: int, tz_offset: int = 0
) -> PueForecast:
    """Seasonal-naive forecast: each hour is the mean of that hour-of-day over
    the last seven complete days of history.

    The forecast starts at local midnight after the latest complete day.
    """
    if horizon < 1:
        raise DomainError("forecast horizon must be at least one hour")
    by_day: dict[date, dict[int, float]] = defaultdict(dict)
    for h in history:
        if h.mean_pue is not None:
            by_day[h.day][h.hour] = h.mean_pue
    complete = sorted(d for d, hours in by_day.items() if len(hours) == 24)
    if len(complete) < FORECAST_DAYS:
        raise InsufficientDataError(
            f"forecast needs {FORECAST_DAYS} complete days of hourly PUE history, "
            f"got {len(complete)}"
        )
    recent = complete[-FORECAST_DAYS:]
    profile = [math.fsum(by_day[d][hr] for d in recent) / FORECAST_DAYS for hr in range(24)]
    start = local_midnight_ms(recent[-1] + timedelta(days=1), tz_offset)
    return PueForecast(start, tuple(profile[i % 24] for i in range(horizon)))


METER_HEADER = ("start_ms", "end_ms", "facility_j", "it_j")


def read_meter_csv(source: str | Path | Iterable[str]) -> list[PueSample]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return read_meter_csv(fh.readlines())
    rows = csv.reader(source)
    try:
        header = [c.strip() for c in next(rows)]
    except StopIteration:
        raise ParseError("empty meter file (header required)", line=1) from None
    try:
        idx = [header.index(c) for c in METER_HEADER]
    except ValueError:
        missing = [c for c in METER_HEADER if c not in header]
        raise ParseError("required column missing from header", column=missing[0], line=1) from None
    out = []
    for lineno, row in enumerate(rows, start=2):
        if not row or not any(c.strip() for c in row):
            continue
        vals = []
        for name, i in zip(METER_HEADER, idx):
            if i >= len(row) or not row[i].strip():
                raise ParseError("missing value", column=name, line=lineno)
            try:
                vals.append(int(row[i]) if name.endswith("_ms") else float(row[i]))
            except ValueError:
                raise ParseError(f"malformed number {row[i]!r}", column=name, line=lineno) from None
        try:
            out.append(PueSample(*vals))
        except DomainError as exc:
            raise ParseError(str(exc), line=lineno) from None
    return out


def iter_meter_lines(samples: Iterable[PueSample]) -> Iterator[str]:
    yield ",".join(METER_HEADER)
    for s in samples:
        yield f"{s.interval_start},{s.interval_end},{s.facility_energy!r},{s.it_energy!r}"


def write_meter_csv(samples: Iterable[PueSample], dest: str | Path) -> None:
    with open(dest, "w", encoding="utf-8", newline="") as fh:
        for line in iter_meter_lines(samples):
            fh.write(line + "\n")


def monthly_mean_pue(samples: Iterable[PueSample], tz_offset: int = 0) -> Mapping[str, float]:
    """Duration-weighted mean PUE per ``YYYY-MM``."""
    acc: dict[str, list[tuple[int, float]]] = defaultdict(list)
    for (d, _), terms in _bucket(samples, tz_offset).items():
        acc[d.isoformat()[:7]].extend(terms)
    return {k: _mean(v) for k, v in sorted(acc.items())}
