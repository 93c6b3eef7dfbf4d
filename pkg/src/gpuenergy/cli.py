"""Batch command line: ``gpuenergy <command> ...``.

JSON (or CSV) goes to stdout, diagnostics to stderr.  Exit codes are
0 success, 1 usage, 2 unreadable or malformed input, 3 domain/contract error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from datetime import date
from pathlib import Path
from typing import Sequence, TextIO

from . import energy, powercap, pue, scheduler, simulator, telemetry
from .config import Config
from .errors import CoverageError, DomainError, GpuEnergyError, ParseError

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_DOMAIN = 0, 1, 2, 3
BACKEND_ENV = "GPUENERGY_BACKEND"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump(obj, out: TextIO) -> None:
    out.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _parse_caps(text: str) -> list[float]:
    caps = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            caps.append(float(part))
        except ValueError:
            raise UsageError(f"invalid cap {part!r}") from None
    if not caps:
        raise UsageError("--caps must list at least one cap")
    return caps


def _watts(w: float) -> int | float:
    return int(w) if float(w).is_integer() else w


def _scenario(args, cfg: Config) -> simulator.Scenario:
    source = args.scenario
    if cfg.fixtures_dir is not None and not Path(source).exists() and ":" not in source:
        candidate = cfg.fixtures_dir / f"{source}.json"
        if candidate.exists():
            source = str(candidate)
    sc = simulator.load_scenario(source)
    if args.seed is not None:
        sc = dataclasses.replace(sc, seed=args.seed)
    return sc


def cmd_integrate(args, cfg: Config, out: TextIO) -> int:
    series = telemetry.read_telemetry_csv(args.telemetry)
    jobs = telemetry.read_jobs(args.jobs)
    reports = [energy.aggregate_job(job, series) for job in jobs]
    for r in reports:
        if r.partial:
            print(f"warning: job {r.job_id} spans telemetry gaps; energy is partial",
                  file=sys.stderr)
    if args.format == "csv":
        out.write("job_id,total_j,duration_s,mean_power_w,partial\n")
        for r in reports:
            out.write(f"{r.job_id},{r.total!r},{r.duration!r},{r.mean_power!r},"
                      f"{str(r.partial).lower()}\n")
    else:
        _dump([r.to_json() for r in reports], out)
    return EXIT_OK


def _backend(sc: simulator.Scenario):
    kind = os.environ.get(BACKEND_ENV, "sim").lower()
    if kind in ("sim", "simulated", ""):
        return sc.backend()
    if kind in ("nvidia-smi", "hardware", "real"):
        if not powercap.NvidiaSmiBackend.available():
            raise DomainError("nvidia-smi backend requested but the utility is not installed")
        return powercap.NvidiaSmiBackend()
    raise UsageError(f"{BACKEND_ENV} must be 'sim' or 'nvidia-smi', got {kind!r}")


def cmd_sweep(args, cfg: Config, out: TextIO) -> int:
    caps = _parse_caps(args.caps) if args.caps is not None else None
    if args.policy == "budget" and args.budget is None:
        raise UsageError("--policy budget needs --budget")
    sc = _scenario(args, cfg)
    caps = caps or list(sc.caps)
    if not caps:
        raise UsageError("no caps given and the scenario lists none")
    klass = cfg.device_classes.get(sc.device.device_class)
    if klass is not None:
        for c in caps:
            klass.check(c)
    policy = powercap.parse_policy(args.policy, args.budget)
    profile = powercap.run_sweep(_backend(sc), caps, sc.workload)
    chosen = powercap.select_cap(profile, policy) if len(profile.points) >= 2 else profile.default_cap
    if args.format == "csv":
        out.write("watts,rel_time,rel_energy,selected\n")
        for w, p in profile.points.items():
            out.write(f"{_watts(w)},{p.rel_time!r},{p.rel_energy!r},"
                      f"{str(w == chosen.watts).lower()}\n")
    else:
        _dump({"profile": profile.to_json(), "selected_cap_w": _watts(chosen.watts)}, out)
    print(f"selected cap: {_watts(chosen.watts)} W", file=sys.stderr)
    return EXIT_OK


def _history(args, cfg: Config) -> list[pue.PueSample]:
    if args.meter:
        return pue.read_meter_csv(args.meter)
    sc = _scenario(args, cfg)
    if sc.datacenter is None:
        raise DomainError(f"scenario {sc.name} has no datacenter profile")
    dc = sc.datacenter if args.seed is None else dataclasses.replace(sc.datacenter, seed=args.seed)
    return simulator.generate_pue_year(dc, sc.year, cfg.tz_offset)


def cmd_plan(args, cfg: Config, out: TextIO) -> int:
    samples = _history(args, cfg)
    table = pue.hourly_by_day(samples, cfg.tz_offset)
    if args.history_end is not None:
        end = date.fromisoformat(args.history_end)
        table = {d: rows for d, rows in table.items() if d <= end}
    history = [h for rows in table.values() for h in rows]
    forecast = pue.forecast_pue(history, args.horizon_h, cfg.tz_offset)
    job = scheduler.JobSpec(args.job_id, args.duration_s, args.it_energy_j)
    if job.duration_ms > forecast.end - forecast.start:
        raise CoverageError(
            f"job of {args.duration_s:g} s exceeds the {args.horizon_h} h forecast horizon"
        )
    window = scheduler.CandidateWindow.fitting(job, forecast, round(args.step_s * 1000))
    candidates = scheduler.evaluate_candidates(job, window, forecast)
    rec = scheduler.choose(job, candidates)
    if args.candidates:
        Path(args.candidates).write_text(scheduler.candidates_csv(candidates), encoding="utf-8")
    if args.format == "csv":
        out.write(scheduler.candidates_csv(candidates))
    else:
        _dump(rec.to_json(), out)
    return EXIT_OK


def _read_reports(path: str | None) -> list[energy.EnergyReport]:
    if path is None:
        return []
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8") or "[]")
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if isinstance(obj, dict):
        obj = [obj]
    try:
        return [energy.EnergyReport.from_json(o) for o in obj]
    except KeyError as exc:
        raise ParseError("report is missing a key", column=exc.args[0]) from None
    except (TypeError, ValueError, AttributeError) as exc:
        raise ParseError(f"invalid report: {exc}") from None


def _overall_pue(samples: Sequence[pue.PueSample]) -> float | None:
    if not samples:
        return None
    fe = sum(s.facility_energy for s in samples)
    it = sum(s.it_energy for s in samples)
    return pue.compute_pue(fe, it)


def cmd_report(args, cfg: Config, out: TextIO) -> int:
    reports = _read_reports(args.reports)
    samples = pue.read_meter_csv(args.meter) if args.meter else []
    context = args.pue if args.pue is not None else _overall_pue(samples)
    if context is not None:
        context = float(f"{context:.4g}")
    out.write(energy.render_energy_statement(reports, context, cfg.kwh_sig_figs))
    if samples:
        out.write("\n")
        out.write(pue.variation_table(samples, cfg.tz_offset).to_csv())
    return EXIT_OK


def cmd_pue(args, cfg: Config, out: TextIO) -> int:
    samples = pue.read_meter_csv(args.meter)
    if args.day:
        rows = pue.hourly_averages(samples, date.fromisoformat(args.day), cfg.tz_offset)
        if args.format == "csv":
            out.write("hour,mean_pue,sample_count\n")
            for h in rows:
                m = "" if h.mean_pue is None else repr(h.mean_pue)
                out.write(f"{h.hour},{m},{h.sample_count}\n")
        else:
            _dump([{"day": h.day.isoformat(), "hour": h.hour, "mean_pue": h.mean_pue,
                    "sample_count": h.sample_count} for h in rows], out)
        return EXIT_OK
    table = pue.variation_table(samples, cfg.tz_offset)
    if args.format == "csv":
        out.write(table.to_csv())
    else:
        _dump({
            "months": [{"month": m.period, "variation_pct": m.value, "days": m.count,
                        "complete": m.complete} for m in table.months],
            "annual": None if table.annual is None else {
                "year": table.annual.period, "variation_pct": table.annual.value,
                "days": table.annual.count, "complete": table.annual.complete},
            "mean_pue": _overall_pue(samples),
        }, out)
    return EXIT_OK


def cmd_sim(args, cfg: Config, out: TextIO) -> int:
    if args.sim_command == "scenario":
        table = simulator.builtin_scenarios()
        if args.name is None:
            out.write("\n".join(sorted(table)) + "\n")
            return EXIT_OK
        if args.name not in table:
            raise ParseError(f"unknown builtin scenario {args.name!r}")
        _dump(table[args.name].to_json(), out)
        return EXIT_OK

    sc = _scenario(args, cfg)
    if args.sim_command == "meter":
        if sc.datacenter is None:
            raise DomainError(f"scenario {sc.name} has no datacenter profile")
        dc = sc.datacenter if args.seed is None else dataclasses.replace(sc.datacenter, seed=args.seed)
        lines = pue.iter_meter_lines(
            simulator.generate_pue_year(dc, args.year or sc.year, cfg.tz_offset)
        )
    else:
        cap = sc.device.default_cap if args.cap is None else args.cap
        seed = sc.seed
        start = args.start_ms
        series = []
        duration = 0.0
        for i in range(args.devices):
            duration, s = simulator.simulate_fraction(
                sc.device, sc.workload, cap, args.fraction, seed + i,
                start_ms=start, device_id=telemetry.DeviceId(index=i),
            )
            series.append(s)
        if args.jobs:
            end = start + round(duration * 1000) + 1
            job = telemetry.JobRecord(args.job_id, frozenset(s.device for s in series),
                                      start, end, cap)
            telemetry.write_jobs([job], args.jobs)
        lines = telemetry.iter_csv_lines(series)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            for line in lines:
                fh.write(line + "\n")
    else:
        for line in lines:
            out.write(line + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override scenario seeds")
    common.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)

    parser = _Parser(prog="gpuenergy", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("integrate", parents=[common], help="energy per job from telemetry CSV")
    p.add_argument("telemetry")
    p.add_argument("jobs", help="job records, one JSON object per line")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("sweep", parents=[common], help="sweep caps on a scenario and pick one")
    p.add_argument("scenario", help="scenario JSON path or builtin:<name>")
    p.add_argument("--caps", help="comma-separated watts (default: scenario caps)")
    p.add_argument("--policy", default="min-energy", choices=("min-energy", "min-edp", "budget"))
    p.add_argument("--budget", type=float, help="max relative time, e.g. 1.10")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plan", parents=[common], help="choose a start time from PUE history")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--meter", help="meter CSV history")
    src.add_argument("--scenario", help="scenario with a datacenter profile")
    p.add_argument("--duration-s", type=float, required=True)
    p.add_argument("--it-energy-j", type=float, default=3.6e6)
    p.add_argument("--job-id", default="job")
    p.add_argument("--history-end", help="last local day (YYYY-MM-DD) of history to use")
    p.add_argument("--horizon-h", type=int, default=24)
    p.add_argument("--step-s", type=float, default=3600.0)
    p.add_argument("--candidates", help="write the candidate CSV here")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("report", parents=[common], help="energy statement and PUE variation")
    p.add_argument("reports", nargs="?", help="JSON reports from `integrate`")
    p.add_argument("--meter", help="meter CSV for the variation table")
    p.add_argument("--pue", type=float, help="mean PUE for facility-adjusted energy")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pue", parents=[common], help="PUE statistics from meter CSV")
    p.add_argument("meter")
    p.add_argument("--day", help="print the 24 hourly means of this local day")
    p.set_defaults(func=cmd_pue)

    p = sub.add_parser("sim", parents=[common], help="generate synthetic telemetry or meters")
    simsub = p.add_subparsers(dest="sim_command", required=True, parser_class=_Parser)
    q = simsub.add_parser("telemetry", parents=[common])
    q.add_argument("scenario")
    q.add_argument("--cap", type=float)
    q.add_argument("--fraction", type=float, default=1.0)
    q.add_argument("--devices", type=int, default=1)
    q.add_argument("--start-ms", type=int, default=0)
    q.add_argument("--jobs", help="also write a matching job record here")
    q.add_argument("--job-id", default="sim-job")
    q.add_argument("--out")
    q = simsub.add_parser("meter", parents=[common])
    q.add_argument("scenario")
    q.add_argument("--year", type=int)
    q.add_argument("--out")
    q = simsub.add_parser("scenario", parents=[common])
    q.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_sim)
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    for name, default in (("config", None), ("seed", None), ("format", "json")):
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        cfg = Config.load(args.config) if args.config else Config()
        return args.func(args, cfg, out)
    except UsageError as exc:
        print(f"gpuenergy: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError) as exc:
        print(f"gpuenergy: input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (GpuEnergyError, ValueError) as exc:
        print(f"gpuenergy: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
