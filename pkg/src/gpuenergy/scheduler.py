"""Start-time and datacenter planning against a PUE forecast.

IT energy is taken as independent of when a job runs, so minimising
facility-adjusted energy means minimising the mean PUE over the job window.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

from .errors import CoverageError, DomainError
from .pue import HOUR_MS, PueForecast

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class JobSpec:
    job_id: str
    duration: float
    it_energy_estimate: float

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise DomainError(f"job duration must be positive, got {self.duration}")
        if not self.it_energy_estimate > 0:
            raise DomainError("IT energy estimate must be positive")

    @property
    def duration_ms(self) -> int:
        return max(1, round(self.duration * 1000))


@dataclass(frozen=True)
class Candidate:
    start: int
    mean_pue: float
    facility_energy: float


@dataclass(frozen=True)
class Recommendation:
    job_id: str
    start: int
    mean_pue: float
    facility_energy: float
    savings_vs_worst: float

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CandidateWindow:
    """Candidate starts ``earliest, earliest + step, ...`` up to ``latest``."""

    earliest: int
    latest: int
    step: int = HOUR_MS

    def __post_init__(self) -> None:
        if self.step <= 0:
            raise DomainError("candidate step must be positive")

    def starts(self) -> list[int]:
        if self.latest < self.earliest:
            return []
        return list(range(self.earliest, self.latest + 1, self.step))

    @classmethod
    def fitting(cls, job: JobSpec, forecast: PueForecast, step: int = HOUR_MS) -> CandidateWindow:
        """Every start on the grid whose window lies inside the forecast."""
        return cls(forecast.start, forecast.end - job.duration_ms, step)


def mean_pue(forecast: PueForecast, start: int, end: int) -> float:
    """Duration-weighted mean forecast PUE over ``[start, end)``."""
    if end <= start:
        raise DomainError("window must have positive length")
    if start < forecast.start or end > forecast.end:
        raise CoverageError(
            f"window [{start}, {end}) ms not covered by forecast "
            f"[{forecast.start}, {forecast.end}) ms"
        )
    step = forecast.step
    first = (start - forecast.start) // step
    last = (end - 1 - forecast.start) // step
    terms = []
    for i in range(first, last + 1):
        lo = max(start, forecast.start + i * step)
        hi = min(end, forecast.start + (i + 1) * step)
        terms.append((hi - lo) * forecast.values[i])
    return math.fsum(terms) / (end - start)


def facility_energy(job: JobSpec, start: int, forecast: PueForecast) -> float:
    """IT energy scaled by the mean PUE over the job window."""
    return job.it_energy_estimate * mean_pue(forecast, start, start + job.duration_ms)


def evaluate_candidates(
    job: JobSpec, window: CandidateWindow, forecast: PueForecast
) -> list[Candidate]:
    out = []
    for start in window.starts():
        m = mean_pue(forecast, start, start + job.duration_ms)
        out.append(Candidate(start, m, job.it_energy_estimate * m))
    return out


def choose(job: JobSpec, candidates: Sequence[Candidate]) -> Recommendation:
    if not candidates:
        raise DomainError(f"job {job.job_id}: no candidate start times")
    best_e = min(c.facility_energy for c in candidates)
    worst_e = max(c.facility_energy for c in candidates)
    best = min(
        (c for c in candidates if c.facility_energy <= best_e * (1 + TIE_RTOL)),
        key=lambda c: c.start,
    )
    return Recommendation(
        job.job_id, best.start, best.mean_pue, best.facility_energy,
        100.0 * (1.0 - best.facility_energy / worst_e),
    )


def plan_start(job: JobSpec, window: CandidateWindow, forecast: PueForecast) -> Recommendation:
    """Exhaustive search for the start with the least facility energy.

    Ties go to the earliest start; savings are measured against the worst
    candidate.
    """
    return choose(job, evaluate_candidates(job, window, forecast))


def candidates_csv(candidates: Sequence[Candidate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["candidate_start", "mean_pue", "facility_j"])
    for c in candidates:
        w.writerow([c.start, repr(c.mean_pue), repr(c.facility_energy)])
    return buf.getvalue()


def estimate_shift_savings(pue_from: float, pue_to: float) -> float:
    """Percent of facility energy saved by moving a job from one PUE to
    another; negative when the move is worse."""
    if not (pue_from > 0 and pue_to > 0):
        raise DomainError("PUE values must be positive")
    return 100.0 * (1.0 - pue_to / pue_from)


@dataclass(frozen=True)
class RankedCenter:
    name: str
    pue: float
    facility_energy: float


def rank_datacenters(job: JobSpec, centers: Mapping[str, float]) -> list[RankedCenter]:
    if not centers:
        raise DomainError("no datacenters to rank")
    for name, pue in centers.items():
        if not pue >= 1:
            raise DomainError(f"{name}: PUE must be >= 1, got {pue}")
    ranked = [RankedCenter(n, p, job.it_energy_estimate * p) for n, p in centers.items()]
    return sorted(ranked, key=lambda r: (r.facility_energy, r.name))
