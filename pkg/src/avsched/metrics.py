"""Reductions from a trace to throughput, latency, utilization and power."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

from .engine import Trace, TraceRecord
from .errors import DomainError, ReportMismatch
from .scenario import Scenario

STATIC_POWER_NOTE = "platform floor; calibrated residual, absorbs sensor and I/O draw"


@dataclass
class LatencyStats:
    min_ms: float = 0.0
    mean_ms: float = 0.0
    p95_ms: float = 0.0
    max_ms: float = 0.0


@dataclass
class TaskMetrics:
    released: int = 0
    completed: int = 0
    truncated: int = 0
    dropped: int = 0
    throughput: float = 0.0  # completed instances per second
    latency: LatencyStats = field(default_factory=LatencyStats)
    deadline_ms: float | None = None
    deadline_miss_count: int = 0


@dataclass
class UnitMetrics:
    kind: str
    utilization: float = 0.0
    busy_ms: float = 0.0
    energy_mj: float = 0.0
    energy_nj: int = 0
    reconfig_ms: float = 0.0


@dataclass
class Totals:
    duration_s: float
    dynamic_energy_mj: float
    dynamic_energy_nj: int
    static_power_w: float
    average_power_w: float
    static_power_note: str = STATIC_POWER_NOTE


@dataclass
class MetricsReport:
    scenario: str
    policy: str
    seed: int
    tasks: dict[str, TaskMetrics]
    units: dict[str, UnitMetrics]
    totals: Totals

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def rows(self) -> list[tuple[str, str, str, object]]:
        """Flat (scope, name, metric, value) rows."""
        out = []
        for name, tm in sorted(self.tasks.items()):
            for metric, value in _flatten(asdict(tm)):
                out.append(("task", name, metric, value))
        for name, um in sorted(self.units.items()):
            for metric, value in _flatten(asdict(um)):
                out.append(("unit", name, metric, value))
        for metric, value in _flatten(asdict(self.totals)):
            out.append(("total", "platform", metric, value))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scope", "name", "metric", "value"])
        for row in self.rows():
            w.writerow(["" if v is None else v for v in row])
        return buf.getvalue()

    def write(self, path) -> None:
        text = self.to_csv() if str(path).endswith(".csv") else self.to_json()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        tasks = {k: TaskMetrics(**{**v, "latency": LatencyStats(**v["latency"])})
                 for k, v in d["tasks"].items()}
        units = {k: UnitMetrics(**v) for k, v in d["units"].items()}
        return cls(d["scenario"], d["policy"], d["seed"], tasks, units, Totals(**d["totals"]))

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls.from_dict(json.loads(text))


def _flatten(d: dict, prefix: str = ""):
    for k, v in d.items():
        if isinstance(v, dict):
            yield from _flatten(v, f"{prefix}{k}.")
        else:
            yield f"{prefix}{k}", v


def p95(sorted_values: list[float]) -> float:
    """Nearest-rank 95th percentile of an ascending sample."""
    if not sorted_values:
        return 0.0
    rank = math.ceil(0.95 * len(sorted_values))
    return sorted_values[max(rank, 1) - 1]


def _latency_stats(records: list[TraceRecord]) -> LatencyStats:
    lat = sorted(r.latency_us for r in records)
    if not lat:
        return LatencyStats()
    return LatencyStats(lat[0] / 1000, sum(lat) / len(lat) / 1000, p95(lat) / 1000, lat[-1] / 1000)


def _intervals(records: list[TraceRecord]) -> list[tuple[int, int]]:
    """Busy intervals: execution plus any reconfiguration before it."""
    return [(r.start - r.reconfig_charged, r.finish) for r in records]


def union_length(intervals: list[tuple[int, int]]) -> int:
    total = 0
    end = None
    for a, b in sorted(intervals):
        if end is None or a > end:
            total += b - a
            end = b
        elif b > end:
            total += b - end
            end = b
    return total


def utilization(trace: Trace, unit: str, duration: float) -> float:
    if not duration > 0:
        raise DomainError("duration must be > 0")
    busy = union_length(_intervals(trace.for_unit(unit)))
    return busy / (duration * 1_000_000)


def average_power(report: MetricsReport, static_power: float) -> float:
    if not report.totals.duration_s > 0:
        raise DomainError("average power needs a positive duration")
    return static_power + report.totals.dynamic_energy_mj / (report.totals.duration_s * 1000)


def summarize(trace: Trace, scenario: Scenario) -> MetricsReport:
    duration = scenario.duration
    tasks: dict[str, TaskMetrics] = {}
    for t in scenario.graph.tasks:
        recs = trace.for_task(t.name)
        done = [r for r in recs if not r.truncated]
        misses = 0
        if t.deadline_ms is not None:
            limit = round(t.deadline_ms * 1000)
            misses = sum(1 for r in done if r.latency_us > limit)
        tasks[t.name] = TaskMetrics(
            released=trace.released.get(t.name, 0),
            completed=len(done),
            truncated=len(recs) - len(done),
            dropped=trace.dropped.get(t.name, 0),
            throughput=len(done) / duration if duration > 0 else 0.0,
            latency=_latency_stats(done),
            deadline_ms=t.deadline_ms,
            deadline_miss_count=misses,
        )
    units: dict[str, UnitMetrics] = {}
    for u in scenario.platform.units:
        recs = trace.for_unit(u.id)
        busy = union_length(_intervals(recs))
        nj = sum(r.energy_nj for r in recs)
        units[u.id] = UnitMetrics(
            kind=u.kind.value,
            utilization=busy / trace.horizon_us if trace.horizon_us else 0.0,
            busy_ms=busy / 1000,
            energy_mj=nj / 1e6,
            energy_nj=nj,
            reconfig_ms=sum(r.reconfig_charged for r in recs) / 1000,
        )
    total_nj = sum(u.energy_nj for u in units.values())
    static = scenario.platform.static_power
    avg = static + total_nj / 1e6 / (duration * 1000) if duration > 0 else static
    totals = Totals(duration, total_nj / 1e6, total_nj, static, avg)
    return MetricsReport(scenario.name, scenario.policy.value, scenario.seed, tasks, units, totals)


def _delta(a: float, b: float) -> dict:
    rel = (a - b) / abs(b) if b else (0.0 if a == b else None)
    return {"a": a, "b": b, "abs": a - b, "rel": rel}


def compare(a: MetricsReport, b: MetricsReport) -> dict:
    """Per-metric ``a - b`` differences (absolute and relative to ``b``)."""
    if set(a.tasks) != set(b.tasks):
        diff = sorted(set(a.tasks) ^ set(b.tasks))
        raise ReportMismatch(f"reports cover different task sets: {', '.join(diff)}")
    out: dict = {"tasks": {}, "units": {}, "totals": {}}
    for name in sorted(a.tasks):
        ta, tb = a.tasks[name], b.tasks[name]
        out["tasks"][name] = {
            "throughput": _delta(ta.throughput, tb.throughput),
            "latency_mean_ms": _delta(ta.latency.mean_ms, tb.latency.mean_ms),
            "latency_p95_ms": _delta(ta.latency.p95_ms, tb.latency.p95_ms),
            "deadline_miss_count": _delta(ta.deadline_miss_count, tb.deadline_miss_count),
        }
    for name in sorted(set(a.units) & set(b.units)):
        ua, ub = a.units[name], b.units[name]
        out["units"][name] = {
            "utilization": _delta(ua.utilization, ub.utilization),
            "energy_mj": _delta(ua.energy_mj, ub.energy_mj),
        }
    out["totals"] = {
        "dynamic_energy_mj": _delta(a.totals.dynamic_energy_mj, b.totals.dynamic_energy_mj),
        "average_power_w": _delta(a.totals.average_power_w, b.totals.average_power_w),
    }
    return out
