"""Per-device power telemetry: parsing, job scoping and validation.

Samples arrive as CSV rows written by an external collector (one row per
device per 100 ms tick).  A :class:`SampleSeries` keeps one device's rows in
columnar numpy arrays so day-long traces stay cheap to slice and integrate.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ContractError, DomainError, ParseError

DEFAULT_INTERVAL_MS = 100
GAP_FACTOR = 10
EXCURSION_TOLERANCE = 1.05

CANONICAL_COLUMNS = ("ts_ms", "device", "power_w", "cap_w", "util_pct", "temp_c")
REQUIRED_FIELDS = ("ts_ms", "device", "power_w", "cap_w")
OPTIONAL_FIELDS = ("util_pct", "temp_c")

_INT_RE = re.compile(r"^[+-]?\d+$")

Number = int | float


@dataclass(frozen=True, order=True)
class DeviceId:
    """A GPU index, optionally qualified by the host it lives on."""

    host: str = ""
    index: int = 0

    def __post_init__(self) -> None:
        if self.index < 0:
            raise DomainError(f"device index must be non-negative, got {self.index}")
        if ":" in self.host or "," in self.host:
            raise DomainError(f"invalid host name {self.host!r}")

    @classmethod
    def parse(cls, value: str | int | DeviceId) -> DeviceId:
        """Accept ``3``, ``"3"`` or ``"node07:3"``."""
        if isinstance(value, DeviceId):
            return value
        if isinstance(value, bool):
            raise ValueError(f"invalid device identifier {value!r}")
        if isinstance(value, int):
            return cls(index=value)
        text = str(value).strip()
        host, sep, idx = text.rpartition(":")
        if not _INT_RE.match(idx):
            raise ValueError(f"invalid device identifier {value!r}")
        return cls(host=host if sep else "", index=int(idx))

    def to_json(self) -> int | str:
        return self.index if not self.host else str(self)

    def __str__(self) -> str:
        return f"{self.host}:{self.index}" if self.host else str(self.index)


@dataclass(frozen=True)
class PowerSample:
    timestamp: int
    device: DeviceId
    power: Number
    cap: Number
    utilization: Number | None = None
    temperature: Number | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.power) or self.power < 0:
            raise DomainError(f"power must be a non-negative number, got {self.power}")
        if not math.isfinite(self.cap) or self.cap <= 0:
            raise DomainError(f"cap must be positive, got {self.cap}")
        if self.utilization is not None and not 0 <= self.utilization <= 100:
            raise DomainError(f"utilization must lie in [0, 100], got {self.utilization}")

    @property
    def over_cap(self) -> bool:
        return self.power > self.cap

    @property
    def suspect(self) -> bool:
        """Draw beyond the tolerated transient headroom above the cap."""
        return self.power > self.cap * EXCURSION_TOLERANCE


@dataclass(frozen=True)
class CsvSchema:
    """Column layout of one telemetry file.

    ``header`` is the file's header row; ``rename`` maps canonical field
    names to the vendor's column names where they differ.
    """

    header: tuple[str, ...] = CANONICAL_COLUMNS
    rename: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_header(cls, line: str, rename: Mapping[str, str] | None = None) -> CsvSchema:
        header = tuple(cell.strip() for cell in line.rstrip("\r\n").split(","))
        schema = cls(header=header, rename=dict(rename or {}))
        schema.positions  # fail early on missing required columns
        return schema

    def column(self, name: str) -> str:
        return self.rename.get(name, name)

    @cached_property
    def positions(self) -> dict[str, int]:
        pos: dict[str, int] = {}
        for name in REQUIRED_FIELDS + OPTIONAL_FIELDS:
            col = self.column(name)
            if col in self.header:
                pos[name] = self.header.index(col)
            elif name in REQUIRED_FIELDS:
                raise ParseError("required column missing from header", column=col, line=1)
        return pos

    def header_line(self) -> str:
        return ",".join(self.header)


DEFAULT_SCHEMA = CsvSchema()


def _parse_number(text: str, column: str, line: int | None) -> Number:
    try:
        if _INT_RE.match(text):
            return int(text)
        value = float(text)
    except ValueError:
        raise ParseError(f"malformed number {text!r}", column=column, line=line) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite number {text!r}", column=column, line=line)
    return value


def parse_sample_line(
    line: str, schema: CsvSchema = DEFAULT_SCHEMA, lineno: int | None = None
) -> PowerSample:
    """Parse one telemetry CSV row into a :class:`PowerSample`.

    Raises:
        ParseError: naming the offending column (and line when given).
    """
    cells = line.rstrip("\r\n").split(",")
    pos = schema.positions
    values: dict[str, object] = {}
    for name, idx in pos.items():
        col = schema.column(name)
        text = cells[idx].strip() if idx < len(cells) else None
        if text is None and name in REQUIRED_FIELDS:
            raise ParseError("missing required column", column=col, line=lineno)
        if not text:
            if name in REQUIRED_FIELDS:
                raise ParseError("empty required value", column=col, line=lineno)
            values[name] = None
            continue
        if name == "device":
            try:
                values[name] = DeviceId.parse(text)
            except ValueError as exc:
                raise ParseError(str(exc), column=col, line=lineno) from None
        else:
            values[name] = _parse_number(text, col, lineno)

    ts = values["ts_ms"]
    if not isinstance(ts, int):
        raise ParseError(f"timestamp must be integer milliseconds, got {ts!r}",
                         column=schema.column("ts_ms"), line=lineno)
    if values["power_w"] < 0:  # type: ignore[operator]
        raise ParseError(f"negative power {values['power_w']}",
                         column=schema.column("power_w"), line=lineno)
    if values["cap_w"] <= 0:  # type: ignore[operator]
        raise ParseError(f"cap must be positive, got {values['cap_w']}",
                         column=schema.column("cap_w"), line=lineno)
    util = values.get("util_pct")
    if util is not None and not 0 <= util <= 100:  # type: ignore[operator]
        raise ParseError(f"utilization {util} outside [0, 100]",
                         column=schema.column("util_pct"), line=lineno)
    return PowerSample(
        timestamp=ts,
        device=values["device"],  # type: ignore[arg-type]
        power=values["power_w"],  # type: ignore[arg-type]
        cap=values["cap_w"],  # type: ignore[arg-type]
        utilization=util,  # type: ignore[arg-type]
        temperature=values.get("temp_c"),  # type: ignore[arg-type]
    )


def _fmt(value: Number | None) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return ""
        return repr(value)
    return str(int(value))


def format_sample_line(sample: PowerSample, schema: CsvSchema = DEFAULT_SCHEMA) -> str:
    """Inverse of :func:`parse_sample_line` for canonical number spellings."""
    cells = [""] * len(schema.header)
    row = {
        "ts_ms": str(sample.timestamp),
        "device": str(sample.device),
        "power_w": _fmt(sample.power),
        "cap_w": _fmt(sample.cap),
        "util_pct": _fmt(sample.utilization),
        "temp_c": _fmt(sample.temperature),
    }
    for name, idx in schema.positions.items():
        cells[idx] = row[name]
    return ",".join(cells)


class ContractMismatch(ContractError, ValueError):
    """Samples from different devices mixed into one series."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class SampleSeries:
    """Timestamp-ordered power samples for a single device.

    Ordering is *not* enforced at construction: :func:`validate_series`
    exists to report on series that violate it.
    """

    def __init__(
        self,
        device: DeviceId,
        timestamps: Sequence[int] | np.ndarray,
        power: Sequence[float] | np.ndarray,
        cap: Sequence[float] | np.ndarray | float,
        utilization: Sequence[float] | np.ndarray | None = None,
        temperature: Sequence[float] | np.ndarray | None = None,
        nominal_interval: int = DEFAULT_INTERVAL_MS,
    ):
        ts = np.array(timestamps, dtype=np.int64).reshape(-1)
        n = ts.size
        pw = np.array(power, dtype=np.float64).reshape(-1)
        cp = np.broadcast_to(np.asarray(cap, dtype=np.float64), (n,)).copy()
        if pw.size != n:
            raise ValueError("timestamps and power must have equal length")
        if n and (pw.min() < 0 or not np.isfinite(pw).all()):
            raise DomainError("power must be finite and non-negative")
        if n and cp.min() <= 0:
            raise DomainError("cap must be positive")
        if nominal_interval <= 0:
            raise DomainError("nominal_interval must be positive")

        def optional(values) -> np.ndarray:
            if values is None:
                return np.full(n, np.nan)
            arr = np.array([np.nan if v is None else v for v in values], dtype=np.float64)
            if arr.size != n:
                raise ValueError("optional columns must match series length")
            return arr

        util = optional(utilization)
        if np.any((util < 0) | (util > 100)):
            raise DomainError("utilization must lie in [0, 100]")
        self.device = device
        self.timestamps = _frozen(ts)
        self.power = _frozen(pw)
        self.cap = _frozen(cp)
        self.utilization = _frozen(util)
        self.temperature = _frozen(optional(temperature))
        self.nominal_interval = int(nominal_interval)

    @classmethod
    def from_samples(
        cls,
        samples: Iterable[PowerSample],
        device: DeviceId | None = None,
        nominal_interval: int = DEFAULT_INTERVAL_MS,
    ) -> SampleSeries:
        rows = list(samples)
        if device is None:
            if not rows:
                raise ValueError("device is required for an empty series")
            device = rows[0].device
        for s in rows:
            if s.device != device:
                raise ContractMismatch(f"sample for device {s.device} in series for {device}")
        return cls(
            device,
            [s.timestamp for s in rows],
            [s.power for s in rows],
            [s.cap for s in rows],
            [s.utilization for s in rows],
            [s.temperature for s in rows],
            nominal_interval=nominal_interval,
        )

    def _take(self, index) -> SampleSeries:
        return SampleSeries(
            self.device,
            self.timestamps[index],
            self.power[index],
            self.cap[index],
            self.utilization[index],
            self.temperature[index],
            nominal_interval=self.nominal_interval,
        )

    @cached_property
    def samples(self) -> tuple[PowerSample, ...]:
        def opt(x: float) -> float | None:
            return None if math.isnan(x) else float(x)

        return tuple(
            PowerSample(int(t), self.device, float(p), float(c), opt(u), opt(tc))
            for t, p, c, u, tc in zip(self.timestamps, self.power, self.cap,
                                      self.utilization, self.temperature)
        )

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def __iter__(self) -> Iterator[PowerSample]:
        return iter(self.samples)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SampleSeries):
            return NotImplemented
        return (
            self.device == other.device
            and self.nominal_interval == other.nominal_interval
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.power, other.power)
            and np.array_equal(self.cap, other.cap)
            and np.array_equal(self.utilization, other.utilization, equal_nan=True)
            and np.array_equal(self.temperature, other.temperature, equal_nan=True)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        span = ""
        if len(self):
            span = f", {int(self.timestamps[0])}..{int(self.timestamps[-1])} ms"
        return f"SampleSeries(device={self.device}, n={len(self)}{span})"

    @property
    def is_ordered(self) -> bool:
        return bool(np.all(np.diff(self.timestamps) > 0))


def concat(first: SampleSeries, second: SampleSeries) -> SampleSeries:
    if first.device != second.device:
        raise ContractMismatch(f"cannot concatenate {first.device} with {second.device}")
    return SampleSeries(
        first.device,
        np.concatenate([first.timestamps, second.timestamps]),
        np.concatenate([first.power, second.power]),
        np.concatenate([first.cap, second.cap]),
        np.concatenate([first.utilization, second.utilization]),
        np.concatenate([first.temperature, second.temperature]),
        nominal_interval=first.nominal_interval,
    )


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    devices: frozenset[DeviceId]
    start: int
    end: int
    cap: float

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise DomainError(f"job {self.job_id}: end must be after start")
        if not self.devices:
            raise DomainError(f"job {self.job_id}: no devices")
        object.__setattr__(self, "devices", frozenset(self.devices))

    @property
    def duration_s(self) -> float:
        return (self.end - self.start) / 1000.0

    def to_json(self) -> dict:
        return {
            "job_id": self.job_id,
            "devices": [d.to_json() for d in sorted(self.devices)],
            "start_ms": self.start,
            "end_ms": self.end,
            "cap_w": self.cap,
        }

    @classmethod
    def from_json(cls, obj: Mapping, lineno: int | None = None) -> JobRecord:
        try:
            devices = frozenset(DeviceId.parse(d) for d in obj["devices"])
            start, end = obj["start_ms"], obj["end_ms"]
            if not (isinstance(start, int) and isinstance(end, int)):
                raise ValueError("start_ms and end_ms must be integers")
            return cls(str(obj["job_id"]), devices, start, end, float(obj["cap_w"]))
        except KeyError as exc:
            raise ParseError("missing key", column=exc.args[0], line=lineno) from None
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc), line=lineno) from None


def slice_for_job(series: SampleSeries, job: JobRecord) -> SampleSeries:
    """Samples with ``job.start <= timestamp < job.end``."""
    ts = series.timestamps
    return series._take((ts >= job.start) & (ts < job.end))


@dataclass(frozen=True)
class Gap:
    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Excursion:
    timestamp: int
    power: float
    cap: float

    @property
    def suspect(self) -> bool:
        return self.power > self.cap * EXCURSION_TOLERANCE


@dataclass(frozen=True)
class ValidationReport:
    device: DeviceId
    out_of_order: tuple[tuple[int, int], ...] = ()
    duplicates: tuple[int, ...] = ()
    gaps: tuple[Gap, ...] = ()
    excursions: tuple[Excursion, ...] = ()

    @property
    def clean(self) -> bool:
        return not (self.out_of_order or self.duplicates or self.gaps or self.excursions)

    @property
    def suspect(self) -> tuple[Excursion, ...]:
        return tuple(e for e in self.excursions if e.suspect)


def find_gaps(series: SampleSeries) -> tuple[Gap, ...]:
    ts = series.timestamps
    if ts.size < 2:
        return ()
    limit = GAP_FACTOR * series.nominal_interval
    idx = np.nonzero(np.diff(ts) > limit)[0]
    return tuple(Gap(int(ts[i]), int(ts[i + 1])) for i in idx)


def validate_series(series: SampleSeries) -> ValidationReport:
    """Report ordering problems, gaps and over-cap draw; never raises.

    Every sample drawing more than its cap is listed; those beyond the 5%
    transient headroom are additionally marked ``suspect``.
    """
    ts = series.timestamps
    d = np.diff(ts)
    back = np.nonzero(d < 0)[0]
    dup = np.nonzero(d == 0)[0]
    over = np.nonzero(series.power > series.cap)[0]
    return ValidationReport(
        device=series.device,
        out_of_order=tuple((int(ts[i]), int(ts[i + 1])) for i in back),
        duplicates=tuple(int(ts[i]) for i in dup),
        gaps=find_gaps(series),
        excursions=tuple(
            Excursion(int(ts[i]), float(series.power[i]), float(series.cap[i])) for i in over
        ),
    )


def _lines(source: str | Path | Iterable[str]) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def read_telemetry_csv(
    source: str | Path | Iterable[str],
    rename: Mapping[str, str] | None = None,
    nominal_interval: int = DEFAULT_INTERVAL_MS,
) -> dict[DeviceId, SampleSeries]:
    """Read a telemetry CSV into one series per device, keeping file order."""
    it = iter(_lines(source))
    try:
        header = next(it)
    except StopIteration:
        raise ParseError("empty telemetry file (header required)", line=1) from None
    schema = CsvSchema.from_header(header, rename)
    grouped: dict[DeviceId, list[PowerSample]] = {}
    for lineno, line in enumerate(it, start=2):
        if not line.strip():
            continue
        sample = parse_sample_line(line, schema, lineno)
        grouped.setdefault(sample.device, []).append(sample)
    return {
        dev: SampleSeries.from_samples(rows, dev, nominal_interval)
        for dev, rows in sorted(grouped.items())
    }


def iter_csv_lines(series: Iterable[SampleSeries]) -> Iterator[str]:
    yield DEFAULT_SCHEMA.header_line()
    for s in series:
        dev = str(s.device)
        for t, p, c, u, tc in zip(s.timestamps.tolist(), s.power.tolist(), s.cap.tolist(),
                                  s.utilization.tolist(), s.temperature.tolist()):
            yield f"{t},{dev},{_fmt(p)},{_fmt(c)},{_fmt(u)},{_fmt(tc)}"


def write_telemetry_csv(series: Iterable[SampleSeries], dest: str | Path) -> None:
    with open(dest, "w", encoding="utf-8", newline="") as fh:
        for line in iter_csv_lines(series):
            fh.write(line + "\n")


def read_jobs(source: str | Path | Iterable[str]) -> list[JobRecord]:
    jobs = []
    for lineno, line in enumerate(_lines(source), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
        if not isinstance(obj, dict):
            raise ParseError("job record must be a JSON object", line=lineno)
        jobs.append(JobRecord.from_json(obj, lineno))
    return jobs


def write_jobs(jobs: Iterable[JobRecord], dest: str | Path) -> None:
    with open(dest, "w", encoding="utf-8") as fh:
        for job in jobs:
            fh.write(json.dumps(job.to_json(), sort_keys=True) + "\n")
