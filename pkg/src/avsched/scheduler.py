"""Run-time assignment of released task instances to compute units.

The scheduler keeps a *predicted* view of every server: for GPU/DSP/FPGA
units the server is the unit itself, for CPU cores it is one of the
dedicated worker threads pinned to the core. ``busy_until`` is the instant
the server's committed queue drains. Without preemption the prediction is
exact; safety-override preemption can only push it later.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .errors import DomainError, NoAffinityError, UnschedulableTask
from .model import (
    CostTable,
    FpgaPersona,
    PlatformSpec,
    UnitKind,
    ComputeUnit,
    ms_to_us,
    power_energy_nj,
    unit_cost,
)
from .workload import TaskGraph, TaskSpec


class Policy(str, Enum):
    AFFINITY_BEST = "affinity"
    MAX_THROUGHPUT = "throughput"
    MIN_LATENCY = "latency"
    MIN_ENERGY = "energy"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "Policy":
        key = text.strip()
        for p in cls:
            if key.lower() == p.value or key.upper() == p.name:
                return p
        choices = "|".join(p.value for p in cls)
        raise ValueError(f"unknown policy {text!r} (expected {choices})")


@dataclass(frozen=True)
class Instance:
    """A released task instance."""

    id: int
    task: TaskSpec
    release: int  # us


@dataclass
class CpuThread:
    core: str
    task: str
    index: int
    busy_until: int = 0

    @property
    def key(self) -> tuple:
        return (self.core, self.task, self.index)


@dataclass
class UnitState:
    unit: ComputeUnit
    order: int = 0  # position in the platform declaration; the id tie-break
    busy_until: int = 0
    loaded_persona: str | None = None  # FPGA: persona once committed work drains
    threads: list[CpuThread] = field(default_factory=list)
    persona_latency_us: dict[str, int] = field(default_factory=dict)

    @property
    def thread_load(self) -> int:
        return len(self.threads)

    @property
    def key(self) -> tuple:
        return (self.unit.id, None, 0)

    def reconfig_us(self, persona: str) -> int:
        if persona in self.persona_latency_us:
            return self.persona_latency_us[persona]
        return self.unit.reconfig_us

    def advance(self, t: int) -> None:
        if t > self.busy_until:
            self.busy_until = t


@dataclass(frozen=True)
class Assignment:
    instance_id: int
    unit_id: str
    start: int  # us, execution start (after any reconfiguration)
    finish: int  # us
    energy_nj: int
    reconfig_charged: int = 0  # us
    thread: int | None = None

    @property
    def energy_mj(self) -> float:
        return self.energy_nj / 1e6

    @property
    def reconfig_ms(self) -> float:
        return self.reconfig_charged / 1000


class SchedulerState:
    """Predicted state of every unit for one engine run."""

    def __init__(self, platform: PlatformSpec, table: CostTable,
                 personas: Iterable[FpgaPersona] = ()):
        self.platform = platform
        self.table = table
        persona_us = {p.name: ms_to_us(p.load_latency_ms) for p in personas}
        self.units: dict[str, UnitState] = {}
        for i, u in enumerate(platform.units):
            self.units[u.id] = UnitState(
                u, i, loaded_persona=u.fpga_initial_persona,
                persona_latency_us=persona_us if u.kind is UnitKind.FPGA else {},
            )
        self._threads: dict[str, list[tuple[UnitState, CpuThread]]] = {}

    @classmethod
    def for_run(cls, platform, table, graph: TaskGraph, policy: Policy,
                personas: Iterable[FpgaPersona] = ()) -> "SchedulerState":
        state = cls(platform, table, personas)
        state.pin_threads(graph, policy)
        return state

    def of_kind(self, kind: UnitKind) -> list[UnitState]:
        return [s for s in self.units.values() if s.unit.kind is kind]

    def pin_threads(self, graph: TaskGraph, policy: Policy) -> None:
        """Place every CPU-capable task's worker threads on the least-loaded core.

        Tasks are placed in declaration order. Safety-override tasks get no
        resident thread: they preempt a whole core instead. Under
        AFFINITY_BEST only CPU-preferring tasks can run on the CPU, so only
        they get threads.
        """
        cores = self.of_kind(UnitKind.CPU_CORE)
        for task in graph.tasks:
            if task.is_override or (task.cost_kind, UnitKind.CPU_CORE) not in self.table.entries:
                continue
            if policy is Policy.AFFINITY_BEST and task.preferred_unit is not UnitKind.CPU_CORE:
                continue
            if not cores:
                continue
            pinned = []
            for i in range(task.threads):
                core = min(cores, key=lambda c: (c.thread_load, c.order))
                th = CpuThread(core.unit.id, task.name, i)
                core.threads.append(th)
                pinned.append((core, th))
            self._threads[task.name] = pinned

    def threads_of(self, task_name: str) -> list[tuple[UnitState, CpuThread]]:
        return self._threads.get(task_name, [])

    def cpu_pending_us(self, core: UnitState, now: int) -> int:
        return sum(max(0, th.busy_until - now) for th in core.threads)


@dataclass(frozen=True)
class _Candidate:
    state: UnitState
    thread: CpuThread | None
    ready: int  # max(now, busy_until)
    start: int
    finish: int
    reconfig: int
    energy_nj: int

    @property
    def tie(self) -> tuple:
        return (self.state.order, self.thread.index if self.thread else -1)


def feasible_units(task: TaskSpec, table: CostTable, platform: PlatformSpec) -> list[str]:
    kinds = set(table.kinds_for(task.cost_kind))
    units = [u.id for u in platform.units if u.kind in kinds]
    if not units:
        raise UnschedulableTask(f"unschedulable task {task.name}: no unit with a cost entry for {task.cost_kind}")
    return units


def cpu_multiplex_latency(base_latency, resident_threads: int):
    """Processor-sharing latency: resident threads split the core evenly."""
    if resident_threads < 1:
        raise DomainError("resident_threads must be >= 1")
    return base_latency * resident_threads


def _candidate(inst: Instance, st: UnitState, th: CpuThread | None, table: CostTable,
               now: int) -> _Candidate:
    task = inst.task
    entry = unit_cost(table, task.cost_kind, st.unit.kind)
    busy = th.busy_until if th is not None else st.busy_until
    ready = max(now, busy)
    reconfig = 0
    if st.unit.kind is UnitKind.FPGA and st.loaded_persona != task.persona:
        reconfig = st.reconfig_us(task.persona)
    latency = entry.latency_us
    if th is not None:
        latency = cpu_multiplex_latency(latency, st.thread_load)
    start = ready + reconfig
    energy = entry.energy_nj + power_energy_nj(st.unit.active_power, reconfig)
    return _Candidate(st, th, ready, start, start + latency, reconfig, energy)


def candidates(inst: Instance, state: SchedulerState, policy: Policy, now: int) -> list[_Candidate]:
    task = inst.task
    kinds = state.table.kinds_for(task.cost_kind)
    if policy is Policy.AFFINITY_BEST:
        kinds = [k for k in kinds if k is task.preferred_unit]
    out = []
    for kind in kinds:
        if kind is UnitKind.CPU_CORE:
            for st, th in state.threads_of(task.name):
                out.append(_candidate(inst, st, th, state.table, now))
        else:
            for st in state.of_kind(kind):
                out.append(_candidate(inst, st, None, state.table, now))
    return out


def _unit_busy_after(c: _Candidate) -> int:
    if c.thread is None:
        return c.finish
    others = [th.busy_until for th in c.state.threads if th is not c.thread]
    return max([c.finish] + others)


def choose(cands: list[_Candidate], policy: Policy) -> _Candidate:
    if policy is Policy.AFFINITY_BEST:
        key = lambda c: (c.ready, c.tie)  # least-loaded instance of the preferred kind
    elif policy is Policy.MIN_LATENCY:
        key = lambda c: (c.finish, c.tie)
    elif policy is Policy.MIN_ENERGY:
        key = lambda c: (c.energy_nj, c.finish, c.tie)
    else:
        key = lambda c: (_unit_busy_after(c), c.finish - c.ready, c.tie)
    return min(cands, key=key)


def commit(c: _Candidate, inst: Instance) -> Assignment:
    st = c.state
    if c.thread is not None:
        c.thread.busy_until = c.finish
    st.advance(c.finish)
    if st.unit.kind is UnitKind.FPGA:
        st.loaded_persona = inst.task.persona
    return Assignment(inst.id, st.unit.id, c.start, c.finish, c.energy_nj, c.reconfig,
                      c.thread.index if c.thread else None)


def assign(inst: Instance, state: SchedulerState, policy: Policy, now: int) -> tuple[Assignment, _Candidate]:
    """Pick a server for ``inst`` under ``policy`` and commit it to the state.

    Returns the predicted assignment and the chosen candidate (the engine
    needs the server it refers to). Raises UnschedulableTask when the policy
    leaves no feasible server.
    """
    cands = candidates(inst, state, policy, now)
    if not cands:
        raise UnschedulableTask(
            f"unschedulable task {inst.task.name}: no {policy.value}-eligible unit for {inst.task.cost_kind}"
        )
    chosen = choose(cands, policy)
    return commit(chosen, inst), chosen


def fpga_admit(inst: Instance, fpga_state: UnitState, now: int, table: CostTable) -> Assignment:
    """Queue ``inst`` on an FPGA, charging reconfiguration on a persona swap."""
    if fpga_state.unit.kind is not UnitKind.FPGA:
        raise NoAffinityError(f"{fpga_state.unit.id} is not an FPGA")
    return commit(_candidate(inst, fpga_state, None, table, now), inst)


def choose_override_core(state: SchedulerState, now: int,
                         override_until: dict[str, int]) -> UnitState:
    """Core that a safety-override instance should take over.

    Prefers a core with no override in progress, then the least pending
    committed work, then declaration order.
    """
    cores = state.of_kind(UnitKind.CPU_CORE)
    if not cores:
        raise UnschedulableTask("unschedulable safety override: platform has no CPU core")
    return min(cores, key=lambda c: (max(0, override_until.get(c.unit.id, 0) - now),
                                     state.cpu_pending_us(c, now), c.order))
