import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpuenergy.energy import (
    EnergyReport,
    aggregate_job,
    format_sig,
    integrate,
    integrate_detailed,
    project_energy,
    render_energy_statement,
)
from gpuenergy.errors import ContractError, DomainError, MissingTelemetryError
from gpuenergy.telemetry import DeviceId, JobRecord, SampleSeries, concat

from conftest import make_series


def series_from(ts, power, device=DeviceId(), interval=100):
    return SampleSeries(device, ts, power, 1e4, nominal_interval=interval)


class TestIntegrate:
    def test_constant_trace(self):
        assert integrate(make_series(0, 60_000, power=100.0)) == pytest.approx(6000.0, rel=1e-12)

    def test_two_point_trapezoid(self):
        # 10 s apart is only a regular segment for a 10 s sampling cadence
        assert integrate(series_from([0, 10_000], [100.0, 200.0], interval=10_000)) == 1500.0
        assert integrate_detailed(series_from([0, 10_000], [100.0, 200.0])).partial

    def test_empty_and_single(self):
        assert integrate(series_from([], [])) == 0.0
        assert integrate(series_from([5], [300.0])) == 0.0

    def test_unordered_is_a_contract_violation(self):
        with pytest.raises(ContractError):
            integrate(series_from([0, 200, 100], [1.0, 1.0, 1.0]))
        with pytest.raises(ContractError):
            integrate(series_from([0, 100, 100], [1.0, 1.0, 1.0]))

    def test_gap_segment_excluded_and_marked_partial(self):
        ts = [0, 100, 200, 2_200, 2_300]
        res = integrate_detailed(series_from(ts, [100.0] * 5))
        assert res.partial
        assert res.excluded_ms == 2000
        assert res.joules == pytest.approx(100.0 * 0.3)

    def test_sinusoid_against_closed_form(self):
        # P(t) = 200 + 50 sin(2 pi t / 60) over one hour at 100 ms.
        ts = np.arange(0, 3_600_001, 100)
        t = ts / 1000.0
        p = 200 + 50 * np.sin(2 * np.pi * t / 60)
        T = 3600.0
        exact = 200 * T + 50 * 60 / (2 * np.pi) * (1 - np.cos(2 * np.pi * T / 60))
        assert integrate(series_from(ts, p)) == pytest.approx(exact, rel=1e-4)

    def test_refinement_reduces_error(self):
        def power(t):
            return 100 + 0.01 * t**2 + 30 * np.sin(t / 7)

        T = 137.0
        exact = 100 * T + 0.01 * T**3 / 3 + 30 * 7 * (1 - math.cos(T / 7))
        errors = []
        for step in (800, 400, 200, 100):
            ts = np.arange(0, 137_001, step)
            ts = ts[ts <= 137_000]
            if ts[-1] != 137_000:
                ts = np.append(ts, 137_000)
            errors.append(abs(integrate(series_from(ts, power(ts / 1000.0))) - exact))
        assert all(a > b for a, b in zip(errors, errors[1:]))

    def test_day_long_trace_accuracy(self):
        s = make_series(0, 86_400_000, power=173.3)
        assert integrate(s) == pytest.approx(173.3 * 86_400, rel=1e-9)


steps = st.lists(st.integers(1, 1000), min_size=1, max_size=200)


@given(steps, st.floats(0.1, 1e3))
def test_constant_power_exact_for_any_sampling(deltas, p):
    ts = np.concatenate([[0], np.cumsum(deltas)])
    s = series_from(ts, np.full(ts.size, p))
    assert integrate(s) == pytest.approx(p * ts[-1] / 1000.0, rel=1e-9)


@given(steps, st.data(), st.floats(1e-3, 1e3))
def test_linearity(deltas, data, c):
    ts = np.concatenate([[0], np.cumsum(deltas)])
    p = np.array(data.draw(st.lists(st.floats(0, 500), min_size=ts.size, max_size=ts.size)))
    base = integrate(series_from(ts, p))
    assert integrate(series_from(ts, p * c)) == pytest.approx(base * c, rel=1e-12, abs=1e-300)


@given(steps, steps, st.integers(1, 1000), st.data())
def test_additivity(da, db, join, data):
    ta = np.concatenate([[0], np.cumsum(da)])
    tb = ta[-1] + join + np.concatenate([[0], np.cumsum(db)])
    pa = np.array(data.draw(st.lists(st.floats(0, 500), min_size=ta.size, max_size=ta.size)))
    pb = np.array(data.draw(st.lists(st.floats(0, 500), min_size=tb.size, max_size=tb.size)))
    a, b = series_from(ta, pa), series_from(tb, pb)
    joint = 0.5 * (pa[-1] + pb[0]) * join / 1000.0
    assert integrate(concat(a, b)) == pytest.approx(
        integrate(a) + integrate(b) + joint, rel=1e-12, abs=1e-9
    )


def _job(devices, start=0, end=60_001, job_id="job"):
    return JobRecord(job_id, frozenset(DeviceId(index=d) for d in devices), start, end, 250.0)


class TestAggregateJob:
    def test_two_devices(self):
        series = {DeviceId(index=i): make_series(0, 60_000, 100.0, device=DeviceId(index=i))
                  for i in (0, 1)}
        rep = aggregate_job(_job((0, 1), 0, 60_000 + 1), series)
        assert rep.total == pytest.approx(12_000.0)
        assert rep.per_device[DeviceId(index=0)] == pytest.approx(6000.0)
        assert rep.duration == pytest.approx(60.001)
        assert rep.mean_power * rep.duration == pytest.approx(rep.total, rel=1e-9)
        assert rep.total == pytest.approx(sum(rep.per_device.values()), rel=1e-9)

    def test_mean_power_for_exact_window(self):
        series = {DeviceId(index=i): make_series(0, 60_000, 100.0, device=DeviceId(index=i))
                  for i in (0, 1)}
        # window [0, 60 s]: the last sample sits on the exclusive end bound
        rep = aggregate_job(_job((0, 1), 0, 60_000), series)
        assert rep.mean_power == pytest.approx(200.0 * 59.9 / 60.0)

    def test_sixteen_devices_one_hour(self):
        devs = range(16)
        series = {DeviceId(index=i): make_series(0, 3_600_000, 150.0, device=DeviceId(index=i))
                  for i in devs}
        rep = aggregate_job(_job(devs, 0, 3_600_001), series)
        assert rep.total == pytest.approx(8.64e6, rel=1e-9)
        assert rep.kwh == pytest.approx(2.4, rel=1e-9)

    def test_listed_device_without_series(self):
        with pytest.raises(MissingTelemetryError, match="device 3"):
            aggregate_job(_job((0, 3)), {DeviceId(index=0): make_series()})

    def test_listed_device_without_samples_in_window(self):
        with pytest.raises(MissingTelemetryError, match="device 0"):
            aggregate_job(_job((0,), 500_000, 600_000), {DeviceId(index=0): make_series()})

    def test_json_round_trip(self):
        rep = aggregate_job(_job((0,)), {DeviceId(index=0): make_series()})
        assert EnergyReport.from_json(rep.to_json()) == rep


class TestProjectEnergy:
    rep = EnergyReport("j", {DeviceId(): 1000.0}, 1000.0, 10.0, 100.0)

    @pytest.mark.parametrize("f, expected", [(0.5, 500.0), (1.0, 1000.0), (0.25, 250.0)])
    def test_linear(self, f, expected):
        assert project_energy(self.rep, f) == expected

    @pytest.mark.parametrize("f", [0.0, -0.1, 1.01])
    def test_out_of_range(self, f):
        with pytest.raises(DomainError):
            project_energy(self.rep, f)


class TestStatement:
    def test_reported_total(self):
        reps = [EnergyReport("a", {DeviceId(): 2.0e9}, 2.0e9, 1.0, 2.0e9),
                EnergyReport("b", {DeviceId(): 0.8152e9}, 0.8152e9, 1.0, 0.8152e9)]
        text = render_energy_statement(reps)
        assert "total of 782 kWh" in text
        assert text.index("  a:") < text.index("  b:")

    def test_empty(self):
        text = render_energy_statement([])
        assert "total of 0 kWh" in text
        assert "Per-job" not in text

    def test_facility_adjusted(self):
        rep = EnergyReport("a", {DeviceId(): 3.6e6}, 3.6e6, 3600.0, 1000.0)
        text = render_energy_statement([rep], pue=1.49)
        assert "total of 1.00 kWh" in text
        assert "mean PUE 1.49: 1.49 kWh" in text

    def test_deterministic_and_order_independent(self):
        reps = [EnergyReport(j, {DeviceId(): 1e6}, 1e6, 1.0, 1e6) for j in "cab"]
        assert render_energy_statement(reps) == render_energy_statement(reversed(reps))

    @pytest.mark.parametrize(
        "value, text",
        [(782.0, "782"), (0.06097, "0.0610"), (1234.5, "1230"), (999.6, "1000"), (12.345, "12.3")],
    )
    def test_three_significant_figures(self, value, text):
        assert format_sig(value) == text
