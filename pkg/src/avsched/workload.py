"""Task taxonomy, trigger semantics and sensor event streams."""

from __future__ import annotations

import graphlib
import heapq
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Union

from .errors import CyclicTriggerChain, DomainError, ScenarioError, UnknownTriggerSource
from .model import UnitKind


class Stage(str, Enum):
    SENSING = "sensing"
    PERCEPTION = "perception"
    DECISION = "decision"
    OTHER = "other"


@dataclass(frozen=True)
class SensorSpec:
    name: str
    rate_hz: float
    bytes_per_event: int = 0
    count: int = 1
    jitter_ms: float = 0.0

    def __post_init__(self):
        if not self.rate_hz > 0:
            raise ScenarioError(f"sensor {self.name}: rate must be > 0")
        if self.bytes_per_event < 0:
            raise ScenarioError(f"sensor {self.name}: bytes_per_event must be >= 0")
        if self.count < 1:
            raise ScenarioError(f"sensor {self.name}: count must be >= 1")
        if self.jitter_ms < 0:
            raise ScenarioError(f"sensor {self.name}: jitter must be >= 0")


# Trigger kinds ---------------------------------------------------------------

@dataclass(frozen=True)
class Periodic:
    rate_hz: float

    def __post_init__(self):
        if not self.rate_hz > 0:
            raise ScenarioError("periodic rate must be > 0")


@dataclass(frozen=True)
class OnSensor:
    sensor: str


@dataclass(frozen=True)
class OnCompletion:
    parent: str
    probability: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ScenarioError(f"trigger probability {self.probability} outside [0, 1]")


@dataclass(frozen=True)
class BatchThreshold:
    source: str  # stream name
    threshold_bytes: int

    def __post_init__(self):
        if not self.threshold_bytes > 0:
            raise ScenarioError("batch threshold must be > 0")


@dataclass(frozen=True)
class SafetyOverride:
    sensor: str


Trigger = Union[Periodic, OnSensor, OnCompletion, BatchThreshold, SafetyOverride]


@dataclass(frozen=True)
class TaskSpec:
    name: str
    stage: Stage
    trigger: Trigger
    cost_kind: str
    preferred_unit: UnitKind
    deadline_ms: float | None = None
    fpga_persona: str | None = None
    output_bytes: int = 0
    threads: int = 1  # dedicated CPU worker threads

    def __post_init__(self):
        if not isinstance(self.stage, Stage):
            object.__setattr__(self, "stage", Stage(self.stage))
        if not isinstance(self.preferred_unit, UnitKind):
            object.__setattr__(self, "preferred_unit", UnitKind.parse(str(self.preferred_unit)))
        if self.deadline_ms is not None and not self.deadline_ms > 0:
            raise ScenarioError(f"task {self.name}: deadline must be > 0")
        if isinstance(self.trigger, SafetyOverride) and self.preferred_unit is not UnitKind.CPU_CORE:
            raise ScenarioError(f"task {self.name}: safety override must prefer CPU_CORE")
        if self.threads < 1:
            raise ScenarioError(f"task {self.name}: threads must be >= 1")
        if self.output_bytes < 0:
            raise ScenarioError(f"task {self.name}: output_bytes must be >= 0")

    @property
    def persona(self) -> str:
        """FPGA configuration this task needs when it runs on the fabric."""
        return self.fpga_persona or self.cost_kind

    @property
    def is_override(self) -> bool:
        return isinstance(self.trigger, SafetyOverride)


@dataclass(frozen=True)
class StreamSpec:
    """Named byte accumulator fed by task outputs and/or sensor payloads."""

    name: str
    sources: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))


@dataclass(frozen=True)
class TaskGraph:
    tasks: tuple[TaskSpec, ...] = ()
    sensors: tuple[SensorSpec, ...] = ()
    streams: tuple[StreamSpec, ...] = ()
    _children: dict = field(default_factory=dict, compare=False, repr=False)

    def task_names(self) -> list[str]:
        return [t.name for t in self.tasks]

    def task(self, name: str) -> TaskSpec:
        for t in self.tasks:
            if t.name == name:
                return t
        raise KeyError(name)

    def sensor(self, name: str) -> SensorSpec:
        for s in self.sensors:
            if s.name == name:
                return s
        raise KeyError(name)

    def children(self, parent: str) -> list[TaskSpec]:
        """OnCompletion children of ``parent`` in declaration order."""
        return self._children.get(parent, [])

    def completion_edges(self) -> list[tuple[str, str]]:
        return [(t.trigger.parent, t.name) for t in self.tasks if isinstance(t.trigger, OnCompletion)]

    def streams_fed_by(self, source: str) -> list[StreamSpec]:
        return [s for s in self.streams if source in s.sources]

    def batch_tasks(self, stream: str) -> list[TaskSpec]:
        return [t for t in self.tasks
                if isinstance(t.trigger, BatchThreshold) and t.trigger.source == stream]


def build_task_graph(tasks: Iterable[TaskSpec], sensors: Iterable[SensorSpec],
                     streams: Iterable[StreamSpec] = ()) -> TaskGraph:
    """Validate trigger references and acyclicity, returning a TaskGraph."""
    tasks, sensors, streams = tuple(tasks), tuple(sensors), tuple(streams)
    task_names = [t.name for t in tasks]
    sensor_names = [s.name for s in sensors]
    stream_names = [s.name for s in streams]
    for label, names in (("task", task_names), ("sensor", sensor_names), ("stream", stream_names)):
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise ScenarioError(f"duplicate {label} name(s): {', '.join(sorted(dup))}")

    for s in streams:
        for src in s.sources:
            if src not in task_names and src not in sensor_names:
                raise UnknownTriggerSource(f"unknown trigger source {src!r} feeding stream {s.name!r}")

    children: dict[str, list[TaskSpec]] = {}
    for t in tasks:
        trig = t.trigger
        if isinstance(trig, (OnSensor, SafetyOverride)):
            if trig.sensor not in sensor_names:
                raise UnknownTriggerSource(f"unknown trigger source: sensor {trig.sensor!r} (task {t.name})")
        elif isinstance(trig, OnCompletion):
            if trig.parent not in task_names:
                raise UnknownTriggerSource(f"unknown trigger source: task {trig.parent!r} (task {t.name})")
            children.setdefault(trig.parent, []).append(t)
        elif isinstance(trig, BatchThreshold):
            if trig.source not in stream_names:
                raise UnknownTriggerSource(f"unknown trigger source: stream {trig.source!r} (task {t.name})")

    sorter = graphlib.TopologicalSorter({n: set() for n in task_names})
    for t in tasks:
        if isinstance(t.trigger, OnCompletion):
            sorter.add(t.name, t.trigger.parent)
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        raise CyclicTriggerChain(f"cyclic trigger chain: {' -> '.join(cycle)}") from None

    return TaskGraph(tasks, sensors, streams, children)


def _as_fraction(x: float) -> Fraction:
    return Fraction(repr(x)) if isinstance(x, float) else Fraction(x)


def release_times(rate_hz: float, horizon_us: int) -> list[int]:
    """Phase-0 periodic instants in [0, horizon_us), rounded to whole microseconds."""
    period = Fraction(1_000_000) / _as_fraction(rate_hz)
    out = []
    k = 0
    while True:
        t = round(k * period)
        if t >= horizon_us:
            return out
        out.append(t)
        k += 1


def sensor_event_stream(sensors: Iterable[SensorSpec], duration: float,
                        seed: int = 0) -> list[tuple[int, str]]:
    """Merged sensor firings over [0, duration) as ``(time_us, sensor name)``.

    Each sensor fires at exact multiples of its period starting at t = 0.
    With non-zero ``jitter_ms`` each firing is delayed by a uniform integer
    number of microseconds drawn from ``random.Random(seed)``, sensors in the
    order given, firings in time order. Ties sort by sensor name.
    """
    if duration < 0:
        raise DomainError("duration must be >= 0")
    horizon = round(_as_fraction(duration) * 1_000_000)
    rng = random.Random(seed)
    streams = []
    for s in sensors:
        times = release_times(s.rate_hz, horizon)
        jitter = round(s.jitter_ms * 1000)
        if jitter:
            times = sorted(t + rng.randint(0, jitter) for t in times)
            times = [t for t in times if t < horizon]
        streams.append([(t, s.name) for t in times])
    return list(heapq.merge(*streams))


def data_rate(sensor: SensorSpec) -> float:
    """Bytes per second produced by all ``count`` copies of a sensor."""
    return sensor.rate_hz * sensor.bytes_per_event * sensor.count


def localization_error_bound(speed: float, update_rate: float) -> float:
    """Distance travelled (m) between two position updates."""
    if not update_rate > 0:
        raise DomainError("update rate must be > 0")
    return speed / update_rate
