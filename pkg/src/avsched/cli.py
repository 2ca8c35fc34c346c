"""Command-line entry point: ``avsched {run,compare,calibrate,presets}``."""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .calibration import calibrate, dump_calibration
from .config import dump_scenario, load_scenario_file
from .engine import run
from .errors import AvschedError, ScenarioError
from .metrics import MetricsReport, compare, summarize
from .presets import PRESETS, get_preset
from .scenario import Scenario
from .scheduler import Policy

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3, 4

POLICY_CHOICES = [p.value for p in Policy]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_source(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", metavar="NAME", help="built-in scenario (see `presets`)")
    src.add_argument("--config", metavar="PATH", help="scenario JSON document")
    p.add_argument("--duration", type=float, metavar="SECONDS", help="override simulated duration")
    p.add_argument("--seed", type=int, help="override RNG seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="avsched", description="Heterogeneous autonomous-driving platform simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate one scenario under one policy")
    _add_source(p)
    p.add_argument("--policy", choices=POLICY_CHOICES, help="scheduling policy (default: scenario's)")
    p.add_argument("--output", metavar="PATH", help="write report (.json or .csv)")
    p.add_argument("--trace", metavar="PATH", help="write trace as JSON lines")
    p.add_argument("--json", action="store_true", help="print the report as JSON instead of a table")

    p = sub.add_parser("compare", help="run one scenario under several policies")
    _add_source(p)
    p.add_argument("--policy", action="append", required=True, metavar="POLICY",
                   help=f"repeat or comma-separate; one of {'|'.join(POLICY_CHOICES)}")
    p.add_argument("--output", metavar="PATH", help="write comparison JSON")
    p.add_argument("--json", action="store_true", help="print comparison JSON instead of a table")

    p = sub.add_parser("calibrate", help="solve calibration targets and emit the calibration file")
    p.add_argument("--duration", type=float, default=60.0, metavar="SECONDS")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--output", metavar="PATH", help="write calibration JSON here (default: stdout)")

    p = sub.add_parser("presets", help="list built-in scenarios")
    p.add_argument("--json", action="store_true", help="machine-readable listing")
    p.add_argument("--show", metavar="NAME", help="print a preset as a scenario document")
    return parser


def _scenario(args) -> Scenario:
    scenario = get_preset(args.preset) if args.preset else load_scenario_file(args.config)
    changes = {}
    if args.duration is not None:
        if not args.duration > 0:
            raise UsageError("--duration must be > 0")
        changes["duration"] = args.duration
    if args.seed is not None:
        changes["seed"] = args.seed
    return scenario.with_(**changes) if changes else scenario


def _simulate(scenario: Scenario, policy: Policy):
    s = scenario.with_(policy=policy)
    trace = run(s)
    return trace, summarize(trace, s)


def format_report(r: MetricsReport) -> str:
    lines = [f"scenario {r.scenario}  policy {r.policy}  seed {r.seed}  duration {r.totals.duration_s:g} s", ""]
    lines.append(f"{'task':<20}{'done':>7}{'thru/s':>9}{'mean ms':>10}{'p95 ms':>9}{'misses':>8}")
    for name, t in r.tasks.items():
        lines.append(f"{name:<20}{t.completed:>7}{t.throughput:>9.2f}{t.latency.mean_ms:>10.2f}"
                     f"{t.latency.p95_ms:>9.2f}{t.deadline_miss_count:>8}")
    lines += ["", f"{'unit':<12}{'kind':<10}{'util':>7}{'energy mJ':>13}"]
    for name, u in r.units.items():
        lines.append(f"{name:<12}{u.kind:<10}{u.utilization:>7.3f}{u.energy_mj:>13.1f}")
    tot = r.totals
    lines += ["", f"dynamic energy {tot.dynamic_energy_mj:.1f} mJ, static {tot.static_power_w:.3f} W, "
                  f"average power {tot.average_power_w:.3f} W"]
    return "\n".join(lines)


def cmd_run(args) -> int:
    scenario = _scenario(args)
    policy = Policy.parse(args.policy) if args.policy else scenario.policy
    trace, report = _simulate(scenario, policy)
    if args.output:
        report.write(args.output)
    if args.trace:
        trace.write_jsonl(args.trace)
    print(report.to_json(), end="") if args.json else print(format_report(report))
    return EXIT_OK


def _policies(raw: list[str]) -> list[Policy]:
    names = [x for item in raw for x in item.split(",") if x]
    try:
        policies = sorted({Policy.parse(n) for n in names}, key=lambda p: p.value)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if len(policies) < 2:
        raise UsageError("compare needs at least two distinct policies")
    return policies


def cmd_compare(args) -> int:
    policies = _policies(args.policy)
    scenario = _scenario(args)
    reports = {p.value: _simulate(scenario, p)[1] for p in policies}
    base = policies[0].value
    doc = {
        "scenario": scenario.name,
        "baseline": base,
        "reports": {k: r.to_dict() for k, r in reports.items()},
        "deltas": {k: compare(r, reports[base]) for k, r in reports.items() if k != base},
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    if args.json:
        print(text, end="")
        return EXIT_OK
    head = f"{'policy':<12}{'energy mJ':>14}{'avg W':>9}" + "".join(f"{t[:14]:>16}" for t in scenario.graph.task_names())
    print(f"throughput per task (1/s); deltas vs {base}")
    print(head)
    for k, r in reports.items():
        row = f"{k:<12}{r.totals.dynamic_energy_mj:>14.1f}{r.totals.average_power_w:>9.3f}"
        row += "".join(f"{r.tasks[t].throughput:>16.2f}" for t in scenario.graph.task_names())
        print(row)
    for k, d in doc["deltas"].items():
        e = d["totals"]["dynamic_energy_mj"]
        print(f"{k} - {base}: dynamic energy {e['abs']:+.1f} mJ")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    text = dump_calibration(calibrate(args.duration, args.seed))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.show:
        print(json.dumps(dump_scenario(get_preset(args.show)), indent=2))
        return EXIT_OK
    if args.json:
        print(json.dumps([{"name": n, "provenance": d} for n, (_, d) in PRESETS.items()], indent=2))
    else:
        for name, (_, desc) in PRESETS.items():
            print(f"{name} ({desc})")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "calibrate": cmd_calibrate, "presets": cmd_presets}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        code, msg = EXIT_USAGE, f"usage error: {exc}"
    except ScenarioError as exc:
        code, msg = EXIT_VALIDATION, f"validation error: {exc}"
    except OSError as exc:
        code, msg = EXIT_RUNTIME, f"runtime error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": ")
    except AvschedError as exc:
        code, msg = EXIT_RUNTIME, f"runtime error: {exc}"
    print(f"avsched: {' '.join(msg.split())}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
