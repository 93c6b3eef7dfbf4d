"""Exception hierarchy shared by every module.

The CLI maps :class:`ParseError` to exit code 2 and every other
:class:`GpuEnergyError` to exit code 3.
"""

from __future__ import annotations


class GpuEnergyError(Exception):
    """Base class for all package errors."""


class ParseError(GpuEnergyError, ValueError):
    """Malformed input data (CSV, JSON lines, scenario files)."""

    def __init__(self, message: str, *, column: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.column = column
        self.line = line


class ContractError(GpuEnergyError):
    """A precondition of an operation was violated by otherwise valid data."""


class DomainError(GpuEnergyError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class CapRangeError(DomainError):
    """A power cap outside the device class's supported range."""


class UnknownDeviceError(GpuEnergyError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument
        return str(self.args[0]) if self.args else "unknown device"


class NoFeasibleCapError(GpuEnergyError):
    """A selection policy excluded every measured cap."""


class InsufficientDataError(GpuEnergyError):
    """Not enough observations to compute a statistic."""


class CoverageError(GpuEnergyError):
    """A forecast does not cover the requested time window."""


class MissingTelemetryError(ContractError):
    """A job lists a device for which no samples were supplied."""
