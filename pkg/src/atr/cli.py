"""Command-line entry point.

Exit codes: 0 when every scenario target holds, 2 when a detection target is
missed, 1 on any error (bad arguments, unreadable files, malformed traces).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .errors import ATRError, ConfigurationError
from .harness import ExperimentSpec, FrontendChoice, LongTermParams, Scenario
from .monitor import Monitor, MonitorConfig, new_monitor
from .traceio import (
    export_bands_csv,
    export_report_csv,
    read_report_json,
    read_trace,
    write_report_json,
    write_trace,
)

log = logging.getLogger("atr")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_TARGET_MISS = 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", type=Path, help="JSON experiment spec (schema_version 1)")
    p.add_argument("--seed", type=int, help="override the seed given in --spec")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--frontend", choices=[f.value for f in FrontendChoice], help="override the frontend given in --spec")
    p.add_argument("--no-mask", action="store_true", help="disable spectrum selection")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atr", description="Anti-tamper radio simulation and monitoring.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one experiment scenario")
    p.add_argument("scenario", choices=[s.value for s in Scenario])
    _common(p)

    p = sub.add_parser("provision", help="provision a monitor from the head of a trace")
    p.add_argument("--trace", type=Path, required=True)
    _common(p)

    p = sub.add_parser("monitor", help="feed trace records to a provisioned monitor")
    p.add_argument("--state", type=Path, required=True, help="monitor snapshot from 'provision'")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--skip", type=int, default=0, help="ignore the first N records (e.g. provisioning data)")
    p.add_argument("--out", type=Path, default=Path("."))

    p = sub.add_parser("replay", help="score a recorded trace like a live long-term run")
    p.add_argument("--trace", type=Path, required=True)
    _common(p)

    p = sub.add_parser("report", help="summarize a report JSON and optionally export CSV")
    p.add_argument("report", type=Path)
    p.add_argument("--csv", type=Path, help="write the per-hole CSV here")
    return parser


def _spec(args, scenario: Scenario | None = None) -> ExperimentSpec:
    if args.spec is not None:
        try:
            data = json.loads(args.spec.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{args.spec}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    else:
        data = {}
    if scenario is not None:
        if "scenario" in data and Scenario(data["scenario"]) is not scenario:
            raise ConfigurationError(f"spec file is for {data['scenario']}, not {scenario.value}")
        data["scenario"] = scenario.value
    data.setdefault("scenario", Scenario.LONG_TERM.value)
    if args.seed is not None:
        data["seed"] = args.seed
    if data.get("seed") is None:
        raise ConfigurationError("a seed is required (--seed or 'seed' in the --spec file)")
    if getattr(args, "frontend", None):
        data["frontend"] = args.frontend
    spec = ExperimentSpec.from_dict(data)
    if getattr(args, "no_mask", False):
        spec = replace(spec, monitor=replace(spec.monitor, drop_fraction=0.0))
    return spec


def _monitor_config(args) -> tuple[MonitorConfig, float]:
    """Monitor settings and band window, from the --spec file when one is given."""
    if args.spec is None:
        cfg = MonitorConfig()
        return (replace(cfg, drop_fraction=0.0) if args.no_mask else cfg), LongTermParams().band_window
    spec = _spec(args, Scenario.LONG_TERM)
    return spec.monitor, spec.params.band_window


def _write_reports(reports: dict, out: Path, stem: str) -> None:
    for key, rep in reports.items():
        write_report_json(rep, out / f"{stem}_{key}.json")
        export_report_csv(rep, out / f"{stem}_{key}.csv")
        if rep.bands:
            export_bands_csv(rep, out / f"{stem}_{key}_bands.csv")


def _print_targets(targets: dict[str, bool]) -> bool:
    for name, ok in targets.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return all(targets.values())


def cmd_simulate(args) -> int:
    scenario = Scenario(args.scenario)
    spec = _spec(args, scenario)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "spec.json").write_text(json.dumps(spec.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    if scenario is Scenario.LONG_TERM:
        records = harness.longterm_records(spec)
        for fe, recs in records.items():
            write_trace(args.out / f"trace_{fe.value}.jsonl", recs)
        reports = harness.run_longterm(spec, records)
    else:
        reports = harness.run(spec)
    _write_reports(reports, args.out, scenario.value)
    for key, rep in reports.items():
        print(f"{key}: detected {rep.detected_count}/{rep.total}, false positives {rep.false_positive_count}")
    return EXIT_OK if _print_targets(harness.evaluate_targets(scenario, reports)) else EXIT_TARGET_MISS


def cmd_provision(args) -> int:
    config, _ = _monitor_config(args)
    records = read_trace(args.trace)
    m = new_monitor(config)
    for r in records[: config.provisioning_count]:
        m.ingest_provisioning(r.values)
    m.finalize_provisioning()
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "monitor.json"
    path.write_text(json.dumps(m.snapshot()) + "\n", encoding="utf-8")
    print(f"armed: threshold {m.threshold!r}, {m.mask.n_kept}/{m.mask.L} indices kept -> {path}")
    return EXIT_OK


def cmd_monitor(args) -> int:
    m = Monitor.from_snapshot(json.loads(args.state.read_text(encoding="utf-8")))
    records = read_trace(args.trace)[args.skip :]
    args.out.mkdir(parents=True, exist_ok=True)
    n_flagged = 0
    with (args.out / "verdicts.jsonl").open("w", encoding="utf-8") as fh:
        for r in records:
            v = m.ingest(r)
            n_flagged += v.tampered
            fh.write(json.dumps({"timestamp": r.timestamp, "mnd": v.mnd_value, "tampered": v.tampered,
                                 "phase": v.phase_after.value}) + "\n")
    (args.out / "monitor.json").write_text(json.dumps(m.snapshot()) + "\n", encoding="utf-8")
    print(f"ingested {len(records)} responses, {n_flagged} flagged, phase {m.phase.value}")
    return EXIT_OK


def cmd_replay(args) -> int:
    config, window = _monitor_config(args)
    report = harness.replay(args.trace, config, band_window=window)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_reports({report.frontend or "trace": report}, args.out, "replay")
    print(f"replayed {report.metrics.get('n_ingested', 0)} responses: detected {report.detected_count}/"
          f"{report.total}, false positives {report.false_positive_count}")
    return EXIT_OK


def cmd_report(args) -> int:
    report = read_report_json(args.report)
    print(f"scenario {report.scenario} ({report.frontend}): detected {report.detected_count}/{report.total}, "
          f"false positives {report.false_positive_count}, threshold {report.threshold!r}")
    for k, v in sorted(report.metrics.items()):
        print(f"  {k} = {v}")
    if args.csv is not None:
        export_report_csv(report, args.csv)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "provision": cmd_provision,
    "monitor": cmd_monitor,
    "replay": cmd_replay,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; 2 is reserved for target misses here.
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ATRError, ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
