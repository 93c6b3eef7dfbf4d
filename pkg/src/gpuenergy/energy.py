"""Energy accounting: integrate power traces and write energy statements."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ContractError, DomainError, MissingTelemetryError
from .telemetry import GAP_FACTOR, DeviceId, JobRecord, SampleSeries, slice_for_job

JOULES_PER_KWH = 3.6e6


@dataclass(frozen=True)
class Integral:
    joules: float
    partial: bool = False
    excluded_ms: int = 0


def integrate_detailed(series: SampleSeries) -> Integral:
    """Trapezoidal integral of power over time.

    Segments longer than ``GAP_FACTOR * nominal_interval`` contribute
    nothing and mark the result partial.  Segment energies are summed with
    ``math.fsum`` so day-long 100 ms traces keep full precision.

    Raises:
        ContractError: if timestamps are not strictly increasing.
    """
    ts = series.timestamps
    if ts.size < 2:
        return Integral(0.0)
    dt = np.diff(ts)
    if np.any(dt <= 0):
        raise ContractError(f"series for device {series.device} is not strictly ordered")
    p = series.power
    gap = dt > GAP_FACTOR * series.nominal_interval
    seg = 0.5 * (p[:-1] + p[1:]) * dt
    if gap.any():
        seg = np.where(gap, 0.0, seg)
    joules = math.fsum(seg.tolist()) / 1000.0
    return Integral(joules, bool(gap.any()), int(dt[gap].sum()))


def integrate(series: SampleSeries) -> float:
    """Energy in joules of one device's trace (see :func:`integrate_detailed`)."""
    return integrate_detailed(series).joules


@dataclass(frozen=True)
class EnergyReport:
    job_id: str
    per_device: Mapping[DeviceId, float]
    total: float
    duration: float
    mean_power: float
    partial: bool = False

    @property
    def kwh(self) -> float:
        return self.total / JOULES_PER_KWH

    def to_json(self) -> dict:
        return {
            "job_id": self.job_id,
            "per_device_j": {str(d): j for d, j in sorted(self.per_device.items())},
            "total_j": self.total,
            "total_kwh": self.kwh,
            "duration_s": self.duration,
            "mean_power_w": self.mean_power,
            "partial": self.partial,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> EnergyReport:
        per = {DeviceId.parse(k): float(v) for k, v in obj["per_device_j"].items()}
        return cls(
            job_id=str(obj["job_id"]),
            per_device=per,
            total=float(obj["total_j"]),
            duration=float(obj["duration_s"]),
            mean_power=float(obj["mean_power_w"]),
            partial=bool(obj.get("partial", False)),
        )


def aggregate_job(job: JobRecord, series: Mapping[DeviceId, SampleSeries]) -> EnergyReport:
    """Sum per-device energy over the job window.

    Series are sliced to the window here, so callers may pass whole traces.

    Raises:
        MissingTelemetryError: a job device has no samples inside the window.
    """
    per_device: dict[DeviceId, float] = {}
    partial = False
    for dev in sorted(job.devices):
        trace = series.get(dev)
        if trace is None:
            raise MissingTelemetryError(f"job {job.job_id}: no telemetry for device {dev}")
        window = slice_for_job(trace, job)
        if len(window) == 0:
            raise MissingTelemetryError(
                f"job {job.job_id}: no samples for device {dev} inside the job window"
            )
        res = integrate_detailed(window)
        per_device[dev] = res.joules
        partial |= res.partial
    total = math.fsum(per_device.values())
    duration = job.duration_s
    return EnergyReport(job.job_id, per_device, total, duration, total / duration, partial)


def project_energy(report: EnergyReport, step_fraction: float) -> float:
    """Energy of running ``step_fraction`` of the job at the same mean power."""
    if not 0 < step_fraction <= 1:
        raise DomainError(f"step fraction must lie in (0, 1], got {step_fraction}")
    return report.total * step_fraction


def round_sig(value: float, digits: int = 3) -> float:
    if value == 0 or not math.isfinite(value):
        return value
    return round(value, digits - 1 - math.floor(math.log10(abs(value))))


def format_sig(value: float, digits: int = 3) -> str:
    """Fixed-point text for ``value`` rounded to ``digits`` significant figures."""
    rounded = round_sig(value, digits)
    if rounded == 0:
        return "0"
    exponent = math.floor(math.log10(abs(rounded)))
    return f"{rounded:.{max(0, digits - 1 - exponent)}f}"


def render_energy_statement(
    reports: Iterable[EnergyReport],
    pue: float | None = None,
    digits: int = 3,
) -> str:
    """Plain-text energy statement with a fixed layout.

    Layout::

        Energy statement
        Jobs: <n>
        The reported jobs consumed a total of <kWh> kWh (<J> J) of IT energy.
        Facility-adjusted at mean PUE <pue>: <kWh> kWh.      (only with pue)
        Per-job breakdown:
          <job_id>: <kWh> kWh over <s> s on <k> device(s)[, partial]
    """
    rows = sorted(reports, key=lambda r: r.job_id)
    total = math.fsum(r.total for r in rows)
    kwh = total / JOULES_PER_KWH
    lines = [
        "Energy statement",
        f"Jobs: {len(rows)}",
        f"The reported jobs consumed a total of {format_sig(kwh, digits)} kWh "
        f"({format_sig(total, digits)} J) of IT energy.",
    ]
    if pue is not None:
        if pue < 1:
            raise DomainError(f"PUE must be >= 1, got {pue}")
        lines.append(
            f"Facility-adjusted at mean PUE {pue:g}: {format_sig(kwh * pue, digits)} kWh."
        )
    if rows:
        lines.append("Per-job breakdown:")
        for r in rows:
            flag = ", partial" if r.partial else ""
            lines.append(
                f"  {r.job_id}: {format_sig(r.kwh, digits)} kWh over "
                f"{format_sig(r.duration, digits)} s on {len(r.per_device)} device(s){flag}"
            )
    return "\n".join(lines) + "\n"


def reports_to_json(reports: Iterable[EnergyReport]) -> str:
    return json.dumps([r.to_json() for r in reports], indent=2, sort_keys=True)
