"""Operator configuration loaded from a JSON file."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import DomainError, ParseError
from .powercap import DEVICE_CLASSES, DeviceClass


@dataclass(frozen=True)
class Config:
    tz_offset: int = 0
    device_classes: Mapping[str, DeviceClass] = field(default_factory=lambda: dict(DEVICE_CLASSES))
    kwh_sig_figs: int = 3
    fixtures_dir: Path | None = None

    def __post_init__(self) -> None:
        if not -720 <= self.tz_offset <= 840:
            raise DomainError(f"timezone offset {self.tz_offset} min outside [-720, 840]")
        if self.kwh_sig_figs < 1:
            raise DomainError("kWh rounding needs at least one significant figure")

    @classmethod
    def load(cls, path: str | Path) -> Config:
        """Example file::

            {"tz_offset_minutes": -300,
             "kwh_sig_figs": 3,
             "fixtures_dir": "fixtures",
             "device_classes": {"H100": {"min_w": 200, "max_w": 700, "default_w": 700}}}

        Classes listed in the file are added to (or replace) the shipped ones.
        """
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid config JSON: {exc.msg}", line=exc.lineno) from None
        if not isinstance(obj, dict):
            raise ParseError("config must be a JSON object")
        classes = dict(DEVICE_CLASSES)
        try:
            for name, c in obj.get("device_classes", {}).items():
                classes[name] = DeviceClass(name, float(c["min_w"]), float(c["max_w"]),
                                            float(c["default_w"]))
            fixtures = obj.get("fixtures_dir")
            return cls(
                tz_offset=int(obj.get("tz_offset_minutes", 0)),
                device_classes=classes,
                kwh_sig_figs=int(obj.get("kwh_sig_figs", 3)),
                fixtures_dir=None if fixtures is None else (path.parent / fixtures),
            )
        except KeyError as exc:
            raise ParseError("device class is missing a key", column=exc.args[0]) from None
        except (TypeError, ValueError, AttributeError) as exc:
            raise ParseError(f"invalid config: {exc}") from None
