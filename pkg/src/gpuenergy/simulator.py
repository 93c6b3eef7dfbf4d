"""Deterministic synthetic GPUs and datacenter meters.

Power is modelled only at the (time, energy) level: a run at some cap takes
``base_duration * rel_time`` seconds and draws a mean of
``nominal_draw * rel_energy / rel_time`` watts, with seeded, clipped Gaussian
noise on each 100 ms sample.
"""

from __future__ import annotations

import calendar
import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Mapping

import numpy as np

from . import fixtures
from .errors import CapRangeError, DomainError, ParseError, UnknownDeviceError
from .powercap import CapProfile, DeviceClass, interpolate
from .pue import HOUR_MS, PueSample, local_midnight_ms
from .telemetry import DEFAULT_INTERVAL_MS, DeviceId, SampleSeries

DEFAULT_NOISE_FRACTION = 0.02


@dataclass(frozen=True)
class SimDevice:
    device_class: str
    nominal_draw: float
    cap_range: tuple[float, float]
    default_cap: float
    cap_response: CapProfile
    noise_stddev: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.cap_range
        object.__setattr__(self, "cap_range", (float(lo), float(hi)))
        if not 0 < lo <= self.default_cap <= hi:
            raise DomainError("need 0 < min cap <= default cap <= max cap")
        if not 0 < self.nominal_draw <= hi:
            raise DomainError("nominal draw must be positive and at most the max cap")
        if self.cap_response.default_cap.watts != self.default_cap:
            raise DomainError("cap response must be normalised to the default cap")
        if self.noise_stddev is None:
            object.__setattr__(self, "noise_stddev", DEFAULT_NOISE_FRACTION * self.nominal_draw)
        if self.noise_stddev < 0:
            raise DomainError("noise stddev must be non-negative")
        for watts, perf in self.cap_response.points.items():
            if perf.rel_power * self.nominal_draw > watts:
                raise DomainError(
                    f"cap response implies {perf.rel_power * self.nominal_draw:.1f} W mean draw "
                    f"under a {watts:g} W cap"
                )

    @property
    def klass(self) -> DeviceClass:
        return DeviceClass(self.device_class, *self.cap_range, self.default_cap)

    @classmethod
    def from_fixture(cls, curve: fixtures.CurveFixture, seed: int = 0,
                     noise_stddev: float | None = None) -> SimDevice:
        caps = sorted(curve.points)
        return cls(curve.device_class, curve.nominal_draw, (caps[0], curve.default_cap),
                   curve.default_cap, curve.profile(), noise_stddev, seed)

    def to_json(self) -> dict:
        return {
            "device_class": self.device_class,
            "nominal_draw_w": self.nominal_draw,
            "cap_range_w": list(self.cap_range),
            "default_cap_w": self.default_cap,
            "cap_response": self.cap_response.to_json(),
            "noise_stddev_w": self.noise_stddev,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> SimDevice:
        return cls(
            str(obj["device_class"]),
            float(obj["nominal_draw_w"]),
            tuple(obj["cap_range_w"]),
            float(obj["default_cap_w"]),
            CapProfile.from_json(obj["cap_response"]),
            None if obj.get("noise_stddev_w") is None else float(obj["noise_stddev_w"]),
            int(obj.get("seed", 0)),
        )


@dataclass(frozen=True)
class SimWorkload:
    base_duration: float
    steps: int = 1

    def __post_init__(self) -> None:
        if not self.base_duration > 0:
            raise DomainError("base duration must be positive")
        if self.steps < 1:
            raise DomainError("steps must be at least 1")


@dataclass(frozen=True)
class SimDatacenterProfile:
    winter_mean_pue: float
    summer_mean_pue: float
    diurnal_amplitude: float = 0.03
    noise_stddev: float = 0.002
    seed: int = 0
    it_power: float = 1.0e6

    def __post_init__(self) -> None:
        if self.winter_mean_pue < 1 or self.summer_mean_pue < 1:
            raise DomainError("mean PUE values must be >= 1")
        if self.diurnal_amplitude < 0 or self.noise_stddev < 0:
            raise DomainError("amplitude and noise must be non-negative")
        if not self.it_power > 0:
            raise DomainError("IT power must be positive")


def _emit(
    duration: float, mean_power: float, cap: float, noise: float, seed: int,
    start_ms: int, device_id: DeviceId,
) -> SampleSeries:
    end = round(duration * 1000)
    if end <= 0:
        raise DomainError("run too short to sample")
    ts = np.arange(0, end, DEFAULT_INTERVAL_MS, dtype=np.int64)
    ts = np.append(ts, end)
    rng = np.random.default_rng(seed)
    power = np.full(ts.size, mean_power)
    if noise > 0:
        power = np.clip(power + rng.normal(0.0, noise, ts.size), 0.0, cap)
    return SampleSeries(device_id, ts + start_ms, power, cap)


def _check_cap(device: SimDevice, cap: float) -> None:
    lo, hi = device.cap_range
    if not lo <= cap <= hi:
        raise CapRangeError(f"{cap:g} W outside {device.device_class} cap range [{lo:g}, {hi:g}] W")


def simulate_fraction(
    device: SimDevice,
    workload: SimWorkload,
    cap: float,
    fraction: float,
    seed: int | None = None,
    *,
    start_ms: int = 0,
    device_id: DeviceId = DeviceId(),
) -> tuple[float, SampleSeries]:
    """Run only ``fraction`` of the workload's steps at ``cap``."""
    if not 0 < fraction <= 1:
        raise DomainError(f"fraction must lie in (0, 1], got {fraction}")
    _check_cap(device, cap)
    perf = interpolate(device.cap_response, cap)
    duration = workload.base_duration * perf.rel_time * fraction
    series = _emit(
        duration, device.nominal_draw * perf.rel_power, cap, device.noise_stddev,
        device.seed if seed is None else seed, start_ms, device_id,
    )
    return duration, series


def simulate_run(
    device: SimDevice,
    workload: SimWorkload,
    cap: float,
    seed: int | None = None,
    *,
    start_ms: int = 0,
    device_id: DeviceId = DeviceId(),
) -> tuple[float, SampleSeries]:
    """Wall time and 100 ms power trace of one run at ``cap``."""
    return simulate_fraction(device, workload, cap, 1.0, seed,
                             start_ms=start_ms, device_id=device_id)


def generate_pue_year(
    profile: SimDatacenterProfile, year: int, tz_offset: int = 0
) -> list[PueSample]:
    """Hourly meter readings for one local calendar year.

    PUE follows a yearly cosine peaking mid-July, plus a daily cosine peaking
    at 14:00 local, plus seeded Gaussian noise; it is floored at 1.
    """
    start = local_midnight_ms(date(year, 1, 1), tz_offset)
    ndays = 366 if calendar.isleap(year) else 365
    hours = np.arange(ndays * 24)
    t_days = hours / 24.0
    peak = (date(year, 7, 15) - date(year, 1, 1)).days + 0.5
    mid = 0.5 * (profile.winter_mean_pue + profile.summer_mean_pue)
    swing = 0.5 * (profile.summer_mean_pue - profile.winter_mean_pue)
    pue = (
        mid
        + swing * np.cos(2 * np.pi * (t_days - peak) / ndays)
        + profile.diurnal_amplitude * np.cos(2 * np.pi * ((hours % 24) - 14) / 24)
    )
    if profile.noise_stddev > 0:
        rng = np.random.default_rng(profile.seed)
        pue = pue + rng.normal(0.0, profile.noise_stddev, pue.size)
    pue = np.maximum(pue, 1.0)
    it = profile.it_power * HOUR_MS / 1000.0
    return [
        PueSample(start + h * HOUR_MS, start + (h + 1) * HOUR_MS, it * (p - 1.0), it)
        for h, p in zip(hours.tolist(), pue.tolist())
    ]


class SimBackend:
    """In-memory cap-controllable fleet of simulated devices."""

    def __init__(self, devices: Mapping[int, SimDevice], seed: int | None = None):
        self.devices = dict(devices)
        self.seed = seed
        self._caps = {i: d.default_cap for i, d in self.devices.items()}
        self.history: list[tuple[int, float]] = []

    def _device(self, device: int) -> SimDevice:
        try:
            return self.devices[device]
        except KeyError:
            raise UnknownDeviceError(f"unknown device {device}") from None

    def device_class(self, device: int) -> DeviceClass:
        return self._device(device).klass

    def get_cap(self, device: int) -> float:
        self._device(device)
        return self._caps[device]

    def set_cap(self, device: int, watts: float) -> float:
        self._device(device).klass.check(watts)
        previous = self._caps[device]
        self._caps[device] = float(watts)
        self.history.append((device, float(watts)))
        return previous

    def run(self, device: int, workload: SimWorkload) -> tuple[float, SampleSeries]:
        dev = self._device(device)
        return simulate_run(dev, workload, self._caps[device], self.seed,
                            device_id=DeviceId(index=device))


@dataclass(frozen=True)
class Scenario:
    name: str
    device: SimDevice
    workload: SimWorkload
    caps: tuple[float, ...] = ()
    seed: int = 0
    gpus: int = 1
    datacenter: SimDatacenterProfile | None = None
    year: int = 2020
    extra: Mapping = field(default_factory=dict)

    def to_json(self) -> dict:
        obj = {
            "name": self.name,
            "device": self.device.to_json(),
            "workload": {"base_duration_s": self.workload.base_duration,
                         "steps": self.workload.steps},
            "caps_w": list(self.caps),
            "seed": self.seed,
            "gpus": self.gpus,
            "year": self.year,
        }
        if self.datacenter is not None:
            dc = self.datacenter
            obj["datacenter"] = {
                "winter_mean_pue": dc.winter_mean_pue,
                "summer_mean_pue": dc.summer_mean_pue,
                "diurnal_amplitude": dc.diurnal_amplitude,
                "noise_stddev": dc.noise_stddev,
                "seed": dc.seed,
                "it_power_w": dc.it_power,
            }
        obj.update(self.extra)
        return obj

    @classmethod
    def from_json(cls, obj: Mapping) -> Scenario:
        try:
            wl = obj["workload"]
            dc = obj.get("datacenter")
            known = {"name", "device", "workload", "caps_w", "seed", "gpus", "datacenter", "year"}
            return cls(
                name=str(obj.get("name", "scenario")),
                device=SimDevice.from_json(obj["device"]),
                workload=SimWorkload(float(wl["base_duration_s"]), int(wl.get("steps", 1))),
                caps=tuple(float(c) for c in obj.get("caps_w", ())),
                seed=int(obj.get("seed", 0)),
                gpus=int(obj.get("gpus", 1)),
                datacenter=None if dc is None else SimDatacenterProfile(
                    float(dc["winter_mean_pue"]), float(dc["summer_mean_pue"]),
                    float(dc.get("diurnal_amplitude", 0.03)), float(dc.get("noise_stddev", 0.002)),
                    int(dc.get("seed", 0)), float(dc.get("it_power_w", 1.0e6)),
                ),
                year=int(obj.get("year", 2020)),
                extra={k: v for k, v in obj.items() if k not in known},
            )
        except KeyError as exc:
            raise ParseError("scenario is missing a key", column=exc.args[0]) from None
        except (TypeError, ValueError) as exc:
            raise ParseError(f"invalid scenario: {exc}") from None

    def backend(self) -> SimBackend:
        return SimBackend({0: self.device}, self.seed)


REFERENCE_2020_DATACENTER = SimDatacenterProfile(
    winter_mean_pue=fixtures.PUE_JANUARY_2020,
    summer_mean_pue=fixtures.PUE_JULY_2020,
    diurnal_amplitude=0.03,
    seed=2020,
)
# Mid-July days span roughly 1.48 to 1.63 with this tuning.
JULY_DIURNAL_DATACENTER = SimDatacenterProfile(
    winter_mean_pue=fixtures.PUE_JANUARY_2020,
    summer_mean_pue=0.5 * (fixtures.PUE_JULY27_MIN + fixtures.PUE_JULY27_MAX),
    diurnal_amplitude=0.5 * (fixtures.PUE_JULY27_MAX - fixtures.PUE_JULY27_MIN),
    seed=727,
)
CONSTANT_DATACENTER = SimDatacenterProfile(1.2, 1.2, 0.0, 0.0, 0)


def builtin_scenarios() -> dict[str, Scenario]:
    out: dict[str, Scenario] = {}
    for curve in fixtures.CURVES.values():
        dev = SimDevice.from_fixture(curve, seed=17)
        out[curve.name] = Scenario(
            curve.name, dev, SimWorkload(curve.base_duration, 1000),
            tuple(sorted(curve.points)), seed=42, gpus=curve.gpus,
        )
    base = out["bert-mlm-v100"]
    for name, dc in (("datacenter-2020", REFERENCE_2020_DATACENTER),
                     ("datacenter-july", JULY_DIURNAL_DATACENTER),
                     ("datacenter-constant", CONSTANT_DATACENTER)):
        out[name] = Scenario(name, base.device, base.workload, base.caps, 42,
                             datacenter=dc, year=2020)
    return out


def load_scenario(source: str | Path) -> Scenario:
    """Read a scenario JSON file, or ``builtin:<name>`` for a shipped one."""
    text = str(source)
    if text.startswith("builtin:"):
        name = text.split(":", 1)[1]
        table = builtin_scenarios()
        if name not in table:
            raise ParseError(f"unknown builtin scenario {name!r}; choose from {sorted(table)}")
        return table[name]
    with open(source, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(obj, dict):
        raise ParseError("scenario must be a JSON object")
    return Scenario.from_json(obj)
