"""Deterministic discrete-event simulation of a scenario.

Time is integer microseconds and energy integer nanojoules. Events are
processed in ``(time, kind, seq)`` order where ``kind`` is the tie priority
of :class:`EventKind` (finishes before releases before starts) and ``seq``
is the push counter, so a run is a pure function of its scenario.

Random draws (OnCompletion probabilities strictly between 0 and 1) come
from one ``random.Random(seed)`` in event-processing order, children in
declaration order. Sensor jitter uses its own generator with the same seed.
"""

from __future__ import annotations

import heapq
import json
import logging
import random
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from typing import Any, Callable

from .errors import CausalityViolation, ThresholdNotReached, UnschedulableTask
from .model import ComputeUnit, UnitKind, power_energy_nj, unit_cost
from .scenario import Scenario
from .scheduler import Instance, SchedulerState, assign, choose_override_core
from .workload import BatchThreshold, OnSensor, Periodic, SafetyOverride, release_times, sensor_event_stream

log = logging.getLogger(__name__)

OVERRIDE = "__override__"


class EventKind(IntEnum):
    # value doubles as the tie priority at equal time
    INSTANCE_FINISH = 0
    RECONFIG_DONE = 1
    OVERRIDE_PREEMPT = 2
    SENSOR_FIRE = 3
    BATCH_FIRE = 4
    INSTANCE_RELEASE = 5
    RECONFIG_START = 6
    INSTANCE_START = 7


@dataclass(frozen=True)
class SimEvent:
    time: int
    kind: EventKind
    payload: Any = None


@dataclass(frozen=True)
class TraceRecord:
    instance_id: int
    task: str
    unit: str
    release: int
    start: int
    finish: int
    energy_nj: int
    deadline_met: bool | None = None
    reconfig_charged: int = 0
    thread: int | None = None
    truncated: bool = False
    preempted_us: int = 0

    @property
    def latency_us(self) -> int:
        return self.finish - self.release

    @property
    def energy_mj(self) -> float:
        return self.energy_nj / 1e6

    def to_dict(self) -> dict:
        d = asdict(self)
        d["energy_mj"] = self.energy_mj
        return d


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)
    horizon_us: int = 0
    released: dict[str, int] = field(default_factory=dict)
    dropped: dict[str, int] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)
    thread_load: dict[str, int] = field(default_factory=dict)

    def for_task(self, name: str) -> list[TraceRecord]:
        return [r for r in self.records if r.task == name]

    def for_unit(self, unit_id: str) -> list[TraceRecord]:
        return [r for r in self.records if r.unit == unit_id]

    def completed(self, name: str) -> list[TraceRecord]:
        return [r for r in self.records if r.task == name and not r.truncated]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())


@dataclass
class _Running:
    inst: Instance
    busy_start: int
    start: int
    finish: int
    latency: int  # effective execution time, excluding pauses
    reconfig: int
    energy_nj: int
    version: int = 0
    paused_at: int | None = None
    remaining: int = 0
    preempted: int = 0


@dataclass
class _Server:
    key: tuple
    unit: ComputeUnit
    thread: int | None = None
    queue: deque = field(default_factory=deque)
    running: _Running | None = None
    start_pending: bool = False

    @property
    def is_override(self) -> bool:
        return self.key[1] == OVERRIDE


class Simulation:
    """One engine run. Owns all scheduler and runtime state exclusively."""

    def __init__(self, scenario: Scenario, on_event: Callable[[SimEvent], None] | None = None):
        self.scenario = scenario
        self.graph = scenario.graph
        self.table = scenario.table
        self.policy = scenario.policy
        self.horizon = scenario.horizon_us
        self.clock = 0
        self.on_event = on_event
        self.rng = random.Random(scenario.seed)
        self.sched = SchedulerState.for_run(scenario.platform, scenario.table, scenario.graph,
                                            scenario.policy, scenario.personas)
        self._heap: list = []
        self._seq = 0
        self._next_id = 0
        self.records: list[TraceRecord] = []
        self.released = {t.name: 0 for t in self.graph.tasks}
        self.dropped = {t.name: 0 for t in self.graph.tasks}
        self.diagnostics: list[str] = []

        self.servers: dict[tuple, _Server] = {}
        self.core_servers: dict[str, list[_Server]] = {}
        for st in self.sched.units.values():
            u = st.unit
            if u.kind is UnitKind.CPU_CORE:
                ov = _Server((u.id, OVERRIDE, 0), u)
                self.servers[ov.key] = ov
                self.core_servers[u.id] = []
                for th in st.threads:
                    srv = _Server(th.key, u, th.index)
                    self.servers[srv.key] = srv
                    self.core_servers[u.id].append(srv)
            else:
                srv = _Server(st.key, u)
                self.servers[srv.key] = srv
        self.fabric = {u.id: u.fpga_initial_persona
                       for u in scenario.platform.units if u.kind is UnitKind.FPGA}
        self.override_until: dict[str, int] = {}
        self.batch_acc = {t.name: 0 for t in self.graph.tasks if isinstance(t.trigger, BatchThreshold)}
        self.batch_pending = dict.fromkeys(self.batch_acc, 0)

        for t, name in sensor_event_stream(self.graph.sensors, scenario.duration, scenario.seed):
            self._push(t, EventKind.SENSOR_FIRE, name)
        for task in self.graph.tasks:
            if isinstance(task.trigger, Periodic):
                for t in release_times(task.trigger.rate_hz, self.horizon):
                    self._push(t, EventKind.INSTANCE_RELEASE, task.name)

    # queue plumbing ------------------------------------------------------

    def _push(self, time: int, kind: EventKind, payload=None) -> None:
        heapq.heappush(self._heap, (time, int(kind), self._seq, SimEvent(time, kind, payload)))
        self._seq += 1

    def inject(self, event: SimEvent) -> None:
        """Enqueue an external event (test hook)."""
        if event.time < self.clock:
            raise CausalityViolation(f"causality violation: event at {event.time} us < clock {self.clock} us")
        if event.kind is EventKind.BATCH_FIRE:
            thr = self.graph.task(event.payload).trigger.threshold_bytes
            if self.batch_acc[event.payload] - self.batch_pending[event.payload] * thr < thr:
                raise ThresholdNotReached(f"threshold not reached for {event.payload}")
            self.batch_pending[event.payload] += 1
        self._push(event.time, event.kind, event.payload)

    def peek(self) -> SimEvent | None:
        return self._heap[0][3] if self._heap else None

    def _due(self) -> bool:
        if not self._heap:
            return False
        t, kind = self._heap[0][0], self._heap[0][1]
        return t < self.horizon or (t == self.horizon and kind == EventKind.INSTANCE_FINISH)

    def step(self) -> SimEvent | None:
        """Pop and apply exactly one event. Returns it, or None at the horizon."""
        if not self._due():
            return None
        _, _, _, ev = heapq.heappop(self._heap)
        self.clock = ev.time
        handler = self._handlers[ev.kind]
        handler(self, ev.payload)
        if self.on_event is not None:
            self.on_event(ev)
        return ev

    def run(self) -> Trace:
        while self.step() is not None:
            pass
        return self.finalize()

    # handlers ------------------------------------------------------------

    def _new_instance(self, task_name: str) -> Instance:
        inst = Instance(self._next_id, self.graph.task(task_name), self.clock)
        self._next_id += 1
        self.released[task_name] += 1
        return inst

    def _on_sensor(self, name: str) -> None:
        sensor = self.graph.sensor(name)
        for task in self.graph.tasks:
            trig = task.trigger
            if isinstance(trig, (OnSensor, SafetyOverride)) and trig.sensor == name:
                for _ in range(sensor.count):
                    self._push(self.clock, EventKind.INSTANCE_RELEASE, task.name)
        self._accumulate(name, sensor.bytes_per_event * sensor.count)

    def _on_release(self, task_name: str) -> None:
        inst = self._new_instance(task_name)
        if inst.task.is_override:
            self._push(self.clock, EventKind.OVERRIDE_PREEMPT, inst)
            return
        try:
            asg, cand = assign(inst, self.sched, self.policy, self.clock)
        except UnschedulableTask as exc:
            self.dropped[task_name] += 1
            self.diagnostics.append(f"t={self.clock}us dropped instance {inst.id}: {exc}")
            return
        key = cand.thread.key if cand.thread is not None else cand.state.key
        srv = self.servers[key]
        srv.queue.append((inst, asg))
        self._kick(srv)

    def _kick(self, srv: _Server) -> None:
        if srv.running is None and srv.queue and not srv.start_pending:
            srv.start_pending = True
            self._push(self.clock, EventKind.INSTANCE_START, srv.key)

    def _on_start(self, key: tuple) -> None:
        srv = self.servers[key]
        srv.start_pending = False
        if srv.running is not None or not srv.queue:
            return
        u = srv.unit
        if u.kind is UnitKind.CPU_CORE and self.servers[(u.id, OVERRIDE, 0)].running is not None:
            return  # resumed when the override on this core ends
        inst, _ = srv.queue.popleft()
        entry = unit_cost(self.table, inst.task.cost_kind, u.kind)
        latency = entry.latency_us
        if srv.thread is not None:
            latency *= len(self.core_servers[u.id])
        reconfig = 0
        if u.kind is UnitKind.FPGA and self.fabric[u.id] != inst.task.persona:
            reconfig = self.sched.units[u.id].reconfig_us(inst.task.persona)
        energy = entry.energy_nj + power_energy_nj(u.active_power, reconfig)
        now = self.clock
        srv.running = _Running(inst, now, now + reconfig, now + reconfig + latency,
                               latency, reconfig, energy)
        if reconfig:
            self._push(now, EventKind.RECONFIG_START, key)
        else:
            self._push(srv.running.finish, EventKind.INSTANCE_FINISH, (key, 0))

    def _on_reconfig_start(self, key: tuple) -> None:
        srv = self.servers[key]
        r = srv.running
        self.fabric[srv.unit.id] = None
        self._push(r.start, EventKind.RECONFIG_DONE, (key, r.inst.task.persona))
        self._push(r.finish, EventKind.INSTANCE_FINISH, (key, r.version))

    def _on_reconfig_done(self, payload) -> None:
        key, persona = payload
        self.fabric[self.servers[key].unit.id] = persona

    def _on_finish(self, payload) -> None:
        key, version = payload
        srv = self.servers[key]
        r = srv.running
        if r is None or r.version != version or r.paused_at is not None:
            return  # superseded by a preemption
        now = self.clock
        task = r.inst.task
        met = None
        if task.deadline_ms is not None:
            met = now - r.inst.release <= round(task.deadline_ms * 1000)
        self.records.append(TraceRecord(
            r.inst.id, task.name, srv.unit.id, r.inst.release, r.start, now, r.energy_nj,
            met, r.reconfig, srv.thread, False, r.preempted,
        ))
        srv.running = None
        for child in self.graph.children(task.name):
            p = child.trigger.probability
            if p >= 1.0 or (p > 0.0 and self.rng.random() < p):
                self._push(now, EventKind.INSTANCE_RELEASE, child.name)
        if task.output_bytes:
            self._accumulate(task.name, task.output_bytes)
        if srv.is_override:
            self._end_override(srv)
        else:
            self._kick(srv)

    def _accumulate(self, source: str, nbytes: int) -> None:
        if not nbytes:
            return
        for stream in self.graph.streams_fed_by(source):
            for task in self.graph.batch_tasks(stream.name):
                thr = task.trigger.threshold_bytes
                self.batch_acc[task.name] += nbytes
                while self.batch_acc[task.name] - self.batch_pending[task.name] * thr >= thr:
                    self.batch_pending[task.name] += 1
                    self._push(self.clock, EventKind.BATCH_FIRE, task.name)

    def _on_batch(self, task_name: str) -> None:
        self.batch_acc[task_name] -= self.graph.task(task_name).trigger.threshold_bytes
        self.batch_pending[task_name] -= 1
        self._push(self.clock, EventKind.INSTANCE_RELEASE, task_name)

    # safety override -----------------------------------------------------

    def _on_override(self, payload) -> None:
        inst = payload if isinstance(payload, Instance) else self._new_instance(payload)
        try:
            core = choose_override_core(self.sched, self.clock, self.override_until)
        except UnschedulableTask as exc:
            self.dropped[inst.task.name] += 1
            self.diagnostics.append(f"t={self.clock}us dropped instance {inst.id}: {exc}")
            return
        ov = self.servers[(core.unit.id, OVERRIDE, 0)]
        latency = unit_cost(self.table, inst.task.cost_kind, UnitKind.CPU_CORE).latency_us
        self.override_until[core.unit.id] = max(self.clock, self.override_until.get(core.unit.id, 0)) + latency
        for th in core.threads:
            if th.busy_until > self.clock:
                th.busy_until += latency
        core.advance(self.override_until[core.unit.id])
        ov.queue.append(inst)
        if ov.running is None:
            self._begin_override(ov)

    def _begin_override(self, ov: _Server) -> None:
        now = self.clock
        inst = ov.queue.popleft()
        entry = unit_cost(self.table, inst.task.cost_kind, UnitKind.CPU_CORE)
        for srv in self.core_servers[ov.unit.id]:
            r = srv.running
            if r is not None and r.paused_at is None:
                r.paused_at = now
                r.remaining = r.finish - now
                r.version += 1
        ov.running = _Running(inst, now, now, now + entry.latency_us, entry.latency_us, 0, entry.energy_nj)
        self._push(ov.running.finish, EventKind.INSTANCE_FINISH, (ov.key, 0))

    def _end_override(self, ov: _Server) -> None:
        if ov.queue:
            self._begin_override(ov)
            return
        now = self.clock
        for srv in self.core_servers[ov.unit.id]:
            r = srv.running
            if r is not None and r.paused_at is not None:
                r.preempted += now - r.paused_at
                r.paused_at = None
                r.finish = now + r.remaining
                r.version += 1
                self._push(r.finish, EventKind.INSTANCE_FINISH, (srv.key, r.version))
        for srv in self.core_servers[ov.unit.id]:
            self._kick(srv)

    _handlers = {
        EventKind.INSTANCE_FINISH: _on_finish,
        EventKind.RECONFIG_DONE: _on_reconfig_done,
        EventKind.OVERRIDE_PREEMPT: _on_override,
        EventKind.SENSOR_FIRE: _on_sensor,
        EventKind.BATCH_FIRE: _on_batch,
        EventKind.INSTANCE_RELEASE: _on_release,
        EventKind.RECONFIG_START: _on_reconfig_start,
        EventKind.INSTANCE_START: _on_start,
    }

    # horizon -------------------------------------------------------------

    def finalize(self) -> Trace:
        """Close the run: instances still busy at the horizon become truncated
        records with energy pro-rated by the busy time they got."""
        h = self.horizon
        records = list(self.records)
        for srv in self.servers.values():
            r = srv.running
            if r is None:
                continue
            until = r.paused_at if r.paused_at is not None else h
            preempted = r.preempted + (h - r.paused_at if r.paused_at is not None else 0)
            total = r.reconfig + r.latency
            done = until - r.busy_start - r.preempted
            energy = r.energy_nj * done // total
            records.append(TraceRecord(
                r.inst.id, r.inst.task.name, srv.unit.id, r.inst.release, min(r.start, h), h,
                energy, None, min(r.reconfig, h - r.busy_start), srv.thread, True, preempted,
            ))
        return Trace(
            records=records,
            horizon_us=h,
            released=dict(self.released),
            dropped=dict(self.dropped),
            diagnostics=list(self.diagnostics),
            thread_load={s.unit.id: s.thread_load for s in self.sched.of_kind(UnitKind.CPU_CORE)},
        )


def run(scenario: Scenario) -> Trace:
    """Simulate ``scenario`` over [0, duration) and return its trace."""
    return Simulation(scenario).run()
