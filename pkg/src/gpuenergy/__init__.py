"""Measure, model and reduce the energy used by GPU workloads."""

from .energy import EnergyReport, aggregate_job, integrate, project_energy, render_energy_statement
from .powercap import CapProfile, MinEDP, MinEnergy, MinEnergyWithSlowdownBudget, run_sweep, select_cap
from .pue import compute_pue, daily_variation, forecast_pue, hourly_averages
from .scheduler import JobSpec, plan_start, rank_datacenters
from .telemetry import DeviceId, JobRecord, PowerSample, SampleSeries

__version__ = "0.1.0"

__all__ = [
    "CapProfile",
    "DeviceId",
    "EnergyReport",
    "JobRecord",
    "JobSpec",
    "MinEDP",
    "MinEnergy",
    "MinEnergyWithSlowdownBudget",
    "PowerSample",
    "SampleSeries",
    "aggregate_job",
    "compute_pue",
    "daily_variation",
    "forecast_pue",
    "hourly_averages",
    "integrate",
    "plan_start",
    "project_energy",
    "rank_datacenters",
    "render_energy_statement",
    "run_sweep",
    "select_cap",
]
