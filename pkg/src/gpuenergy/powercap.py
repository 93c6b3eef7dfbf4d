"""Power-cap profiles, cap sweeps and cap selection policies."""

from __future__ import annotations

import bisect
import json
import shutil
import subprocess
from dataclasses import dataclass
from typing import Callable, Iterable, Literal, Mapping, Protocol, Sequence, Union

from .energy import integrate
from .errors import CapRangeError, DomainError, NoFeasibleCapError, ParseError
from .telemetry import SampleSeries

TIE_RTOL = 1e-6


@dataclass(frozen=True)
class DeviceClass:
    name: str
    min_cap: float
    max_cap: float
    default_cap: float

    def __post_init__(self) -> None:
        if not 0 < self.min_cap <= self.default_cap <= self.max_cap:
            raise DomainError(f"{self.name}: need 0 < min <= default <= max cap")

    def check(self, watts: float) -> None:
        if not self.min_cap <= watts <= self.max_cap:
            raise CapRangeError(
                f"{watts:g} W outside {self.name} cap range "
                f"[{self.min_cap:g}, {self.max_cap:g}] W"
            )


# Defaults follow the platforms studied; ranges are the limits we allow sweeping.
DEVICE_CLASSES: dict[str, DeviceClass] = {
    "V100": DeviceClass("V100", 100.0, 250.0, 250.0),
    "A100": DeviceClass("A100", 100.0, 250.0, 250.0),
    "K80": DeviceClass("K80", 100.0, 150.0, 150.0),
    "T4": DeviceClass("T4", 60.0, 70.0, 70.0),
}


@dataclass(frozen=True)
class CapSetting:
    watts: float
    device_class: str = ""

    def __post_init__(self) -> None:
        if self.watts <= 0:
            raise DomainError(f"cap must be positive, got {self.watts}")
        cls = DEVICE_CLASSES.get(self.device_class)
        if cls is not None:
            cls.check(self.watts)


@dataclass(frozen=True)
class RelPerf:
    rel_time: float
    rel_energy: float

    def __post_init__(self) -> None:
        if self.rel_time <= 0 or self.rel_energy <= 0:
            raise DomainError("relative time and energy must be positive")

    @property
    def edp(self) -> float:
        return self.rel_time * self.rel_energy

    @property
    def rel_power(self) -> float:
        return self.rel_energy / self.rel_time


Provenance = Literal["measured", "configured"]


@dataclass(frozen=True)
class CapProfile:
    default_cap: CapSetting
    points: Mapping[float, RelPerf]
    provenance: Provenance = "configured"

    def __post_init__(self) -> None:
        pts = {float(w): p for w, p in sorted(self.points.items())}
        base = pts.get(float(self.default_cap.watts))
        if base is None:
            raise DomainError(f"profile lacks the default cap {self.default_cap.watts:g} W")
        if (base.rel_time, base.rel_energy) != (1.0, 1.0):
            raise DomainError("default cap must map to relative (1, 1)")
        if self.provenance not in ("measured", "configured"):
            raise DomainError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "points", pts)

    @property
    def caps(self) -> list[float]:
        return list(self.points)

    @property
    def device_class(self) -> str:
        return self.default_cap.device_class

    def to_json(self) -> dict:
        return {
            "default_cap": self.default_cap.watts,
            "device_class": self.default_cap.device_class,
            "points": [
                {"watts": w, "rel_time": p.rel_time, "rel_energy": p.rel_energy}
                for w, p in self.points.items()
            ],
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> CapProfile:
        try:
            points = {
                float(p["watts"]): RelPerf(float(p["rel_time"]), float(p["rel_energy"]))
                for p in obj["points"]
            }
            default = CapSetting(float(obj["default_cap"]), str(obj.get("device_class", "")))
            return cls(default, points, obj.get("provenance", "configured"))
        except KeyError as exc:
            raise ParseError("profile is missing a key", column=exc.args[0]) from None
        except (TypeError, ValueError) as exc:
            raise ParseError(f"invalid profile: {exc}") from None

    @classmethod
    def from_table(
        cls,
        table: Mapping[float, tuple[float, float]],
        default_cap: float,
        device_class: str = "",
        provenance: Provenance = "configured",
    ) -> CapProfile:
        return cls(
            CapSetting(default_cap, device_class),
            {w: RelPerf(t, e) for w, (t, e) in table.items()},
            provenance,
        )


def normalize_profile(
    raw: Mapping[float, tuple[float, float]],
    default_cap: CapSetting | float,
    provenance: Provenance = "measured",
) -> CapProfile:
    """Divide each ``cap -> (seconds, joules)`` measurement by the default's."""
    if not isinstance(default_cap, CapSetting):
        default_cap = CapSetting(float(default_cap))
    raw = {float(w): v for w, v in raw.items()}
    for w, (secs, joules) in raw.items():
        if secs <= 0 or joules <= 0:
            raise DomainError(f"nonpositive measurement at {w:g} W: ({secs}, {joules})")
    base = raw.get(float(default_cap.watts))
    if base is None:
        raise DomainError(f"measurements lack the default cap {default_cap.watts:g} W")
    t0, e0 = base
    points = {w: RelPerf(t / t0, e / e0) for w, (t, e) in raw.items()}
    return CapProfile(default_cap, points, provenance)


def denormalize(profile: CapProfile, seconds: float, joules: float) -> dict[float, tuple[float, float]]:
    """Absolute ``(seconds, joules)`` per cap given the default run's values."""
    return {w: (p.rel_time * seconds, p.rel_energy * joules) for w, p in profile.points.items()}


def interpolate(profile: CapProfile, watts: float) -> RelPerf:
    """Piecewise-linear relative performance between measured caps.

    Raises:
        CapRangeError: outside the measured span (no extrapolation).
    """
    caps = profile.caps
    if not caps[0] <= watts <= caps[-1]:
        raise CapRangeError(
            f"{watts:g} W outside profiled range [{caps[0]:g}, {caps[-1]:g}] W"
        )
    exact = profile.points.get(float(watts))
    if exact is not None:
        return exact
    hi = bisect.bisect_right(caps, watts)
    w0, w1 = caps[hi - 1], caps[hi]
    p0, p1 = profile.points[w0], profile.points[w1]
    f = (watts - w0) / (w1 - w0)
    return RelPerf(
        p0.rel_time + f * (p1.rel_time - p0.rel_time),
        p0.rel_energy + f * (p1.rel_energy - p0.rel_energy),
    )


@dataclass(frozen=True)
class MinEnergy:
    pass


@dataclass(frozen=True)
class MinEnergyWithSlowdownBudget:
    budget: float

    def __post_init__(self) -> None:
        if not self.budget >= 1:
            raise DomainError(f"slowdown budget must be >= 1, got {self.budget}")


@dataclass(frozen=True)
class MinEDP:
    pass


Policy = Union[MinEnergy, MinEnergyWithSlowdownBudget, MinEDP]


def parse_policy(name: str, budget: float | None = None) -> Policy:
    key = name.lower().replace("_", "-")
    if key in ("min-energy", "energy"):
        return MinEnergy() if budget is None else MinEnergyWithSlowdownBudget(budget)
    if key in ("budget", "min-energy-budget"):
        if budget is None:
            raise DomainError("the budget policy needs a slowdown budget")
        return MinEnergyWithSlowdownBudget(budget)
    if key in ("min-edp", "edp"):
        return MinEDP()
    raise DomainError(f"unknown policy {name!r}")


def _score(policy: Policy, perf: RelPerf) -> float:
    if isinstance(policy, MinEDP):
        return perf.edp
    return perf.rel_energy


def select_from_points(points: Mapping[float, RelPerf], policy: Policy) -> float:
    """Watts of the best point under ``policy``.

    Scores within ``TIE_RTOL`` of the best count as ties; the highest tied
    cap wins since it costs the least slowdown.
    """
    candidates = list(points.items())
    if isinstance(policy, MinEnergyWithSlowdownBudget):
        candidates = [(w, p) for w, p in candidates if p.rel_time <= policy.budget]
        if not candidates:
            raise NoFeasibleCapError(f"no cap meets slowdown budget {policy.budget:g}")
    scored = [(w, _score(policy, p)) for w, p in candidates]
    best = min(s for _, s in scored)
    return max(w for w, s in scored if s <= best + TIE_RTOL * abs(best))


def select_cap(profile: CapProfile, policy: Policy) -> CapSetting:
    """Pick one of the profile's measured caps under ``policy``."""
    if len(profile.points) < 2:
        raise DomainError("cap selection needs at least two profile points")
    return CapSetting(select_from_points(profile.points, policy), profile.device_class)


class CapBackend(Protocol):
    """Something that can set caps on devices and run workloads on them."""

    def device_class(self, device: int) -> DeviceClass: ...

    def get_cap(self, device: int) -> float: ...

    def set_cap(self, device: int, watts: float) -> float: ...

    def run(self, device: int, workload: object) -> tuple[float, SampleSeries]: ...


def get_cap(backend: CapBackend, device: int) -> float:
    return backend.get_cap(device)


def set_cap(backend: CapBackend, device: int, watts: float) -> float:
    """Set a cap and return the previous one so callers can restore it."""
    backend.device_class(device).check(watts)
    return backend.set_cap(device, watts)


def run_sweep(
    backend: CapBackend,
    caps: Iterable[float],
    workload: object,
    device: int = 0,
) -> CapProfile:
    """Run ``workload`` once per cap and normalise against the default cap.

    The device is returned to its default cap whether the sweep succeeds or
    fails part-way.
    """
    caps = list(dict.fromkeys(float(c) for c in caps))
    if not caps:
        raise DomainError("a sweep needs at least one cap")
    dclass = backend.device_class(device)
    if dclass.default_cap not in caps:
        raise DomainError(f"sweep caps must include the default {dclass.default_cap:g} W")
    raw: dict[float, tuple[float, float]] = {}
    try:
        for watts in caps:
            set_cap(backend, device, watts)
            seconds, series = backend.run(device, workload)
            raw[watts] = (seconds, integrate(series))
    finally:
        backend.set_cap(device, dclass.default_cap)
    return normalize_profile(raw, CapSetting(dclass.default_cap, dclass.name), "measured")


class NvidiaSmiBackend:
    """Cap control through the vendor CLI.

    Only cap get/set is supported; telemetry comes from the external
    collector, so :meth:`run` is not available on real hardware here.
    """

    def __init__(
        self,
        device_classes: Mapping[int, DeviceClass] | None = None,
        runner: Callable[[Sequence[str]], str] | None = None,
        executable: str = "nvidia-smi",
    ):
        self.executable = executable
        self._classes = dict(device_classes or {})
        self._runner = runner or self._subprocess

    @staticmethod
    def available(executable: str = "nvidia-smi") -> bool:
        return shutil.which(executable) is not None

    @staticmethod
    def _subprocess(argv: Sequence[str]) -> str:
        done = subprocess.run(list(argv), check=True, capture_output=True, text=True)
        return done.stdout

    def _query(self, device: int, fields: str) -> list[float]:
        out = self._runner([
            self.executable, "-i", str(device),
            f"--query-gpu={fields}", "--format=csv,noheader,nounits",
        ])
        try:
            return [float(x) for x in out.strip().splitlines()[0].split(",")]
        except (IndexError, ValueError):
            raise ParseError(f"unexpected {self.executable} output: {out!r}") from None

    def device_class(self, device: int) -> DeviceClass:
        if device not in self._classes:
            lo, hi, default = self._query(
                device, "power.min_limit,power.max_limit,power.default_limit"
            )
            self._classes[device] = DeviceClass(f"gpu{device}", lo, hi, default)
        return self._classes[device]

    def get_cap(self, device: int) -> float:
        return self._query(device, "power.limit")[0]

    def set_cap(self, device: int, watts: float) -> float:
        self.device_class(device).check(watts)
        previous = self.get_cap(device)
        self._runner([self.executable, "-i", str(device), "-pl", f"{watts:g}"])
        return previous

    def run(self, device: int, workload: object) -> tuple[float, SampleSeries]:
        raise NotImplementedError(
            "hardware runs are driven by the cluster scheduler; "
            "ingest the collector's CSV with `gpuenergy integrate` instead"
        )


def profile_to_json(profile: CapProfile) -> str:
    return json.dumps(profile.to_json(), indent=2, sort_keys=True)
