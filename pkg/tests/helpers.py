"""Shared test machinery: random scenario generators, trace invariant checks
and an independent brute-force event enumerator for small scenarios.

The enumerator below deliberately shares no code with ``avsched.engine`` or
``avsched.scheduler``: it re-derives start/finish times from the documented
rules (FIFO per server, commit at release, finish < release < start at equal
instants, push order breaks remaining ties, processor sharing on CPU cores,
reconfiguration on FPGA persona swaps).
"""

from __future__ import annotations

import math
import random
from collections import defaultdict
from fractions import Fraction

from avsched.model import ComputeUnit, CostTable, PlatformSpec, UnitKind
from avsched.scenario import Scenario
from avsched.scheduler import Policy
from avsched.workload import (
    OnCompletion,
    OnSensor,
    Periodic,
    SensorSpec,
    Stage,
    TaskSpec,
    build_task_graph,
)

KINDS = list(UnitKind)
DSP = UnitKind.DSP
PRIO = {"finish": 0, "sensor": 3, "release": 5, "start": 7}


# --------------------------------------------------------------------------
# generators


def random_small_scenario(rng: random.Random, max_units: int = 2, max_tasks: int = 3) -> Scenario:
    """At most ``max_units`` units and ``max_tasks`` tasks over a 100 ms horizon."""
    n_units = rng.randint(1, max_units)
    units = []
    for i in range(n_units):
        kind = rng.choice(KINDS)
        power = rng.choice([0.5, 1.0, 1.5, 2.25, 2.5])
        if kind is UnitKind.FPGA:
            units.append(ComputeUnit(f"u{i}", kind, power, fpga_reconfig_ms=rng.choice([0.0, 1.0, 3.0]),
                                     fpga_initial_persona=rng.choice([None, "pa"])))
        else:
            units.append(ComputeUnit(f"u{i}", kind, power))
    present = sorted({u.kind for u in units}, key=KINDS.index)

    rows = []
    tasks = []
    sensor = SensorSpec("cam", rng.choice([10.0, 20.0, 30.0, 40.0]), count=rng.randint(1, 2))
    for i in range(rng.randint(1, max_tasks)):
        name = f"t{i}"
        kinds = {rng.choice(present)}
        for k in KINDS:
            if rng.random() < 0.35:
                kinds.add(k)
        for k in sorted(kinds, key=KINDS.index):
            lat = rng.choice([1.0, 2.0, 2.5, 4.0, 5.0, 10.0, 20.0, 35.0])
            rows.append((name, k, lat, lat * rng.choice([0.5, 1.0, 1.5, 2.5])))
        if i == 0 or rng.random() < 0.4:
            trig = rng.choice([Periodic(rng.choice([10.0, 20.0, 25.0, 40.0])), OnSensor("cam")])
        else:
            trig = OnCompletion(f"t{rng.randrange(i)}")
        preferred = rng.choice(sorted(kinds, key=KINDS.index))
        tasks.append(TaskSpec(name, Stage.PERCEPTION, trig, name, preferred,
                              deadline_ms=rng.choice([None, 5.0, 30.0]),
                              fpga_persona=rng.choice([None, "pa", "pb"]),
                              threads=rng.randint(1, 2)))
    graph = build_task_graph(tasks, [sensor])
    return Scenario(PlatformSpec(tuple(units)), graph, CostTable.from_rows(rows),
                    rng.choice(list(Policy)), 0.1, rng.randrange(1000))


def oracle_release_count(scn: Scenario) -> int:
    return len(brute_force_trace(scn)["released_ids"])


def random_oracle_case(rng: random.Random, max_instances: int = 10) -> Scenario:
    while True:
        scn = random_small_scenario(rng)
        if 0 < oracle_release_count(scn) <= max_instances:
            return scn


def random_independent_scenario(rng: random.Random) -> Scenario:
    """Independent periodic instances whose energy does not depend on history.

    Every task is released at 1 Hz and all work drains well within each
    second, so every instance completes and no policy drops any. The FPGA,
    when present, starts with the single persona all tasks use.
    """
    n_units = rng.randint(1, 4)
    kinds = [rng.choice(KINDS) for _ in range(n_units)]
    units = []
    for i, k in enumerate(kinds):
        power = rng.choice([0.5, 1.0, 1.5, 2.25, 2.5])
        if k is UnitKind.FPGA:
            units.append(ComputeUnit(f"u{i}", k, power, fpga_reconfig_ms=3.0, fpga_initial_persona="p"))
        else:
            units.append(ComputeUnit(f"u{i}", k, power))
    present = sorted(set(kinds), key=KINDS.index)
    rows, tasks = [], []
    for i in range(rng.randint(1, 4)):
        name = f"t{i}"
        ks = {rng.choice(present)} | {k for k in KINDS if rng.random() < 0.5}
        for k in sorted(ks, key=KINDS.index):
            lat = rng.randint(1, 50)
            rows.append((name, k, float(lat), round(lat * rng.uniform(0.2, 3.0), 3)))
        preferred = rng.choice([k for k in sorted(ks, key=KINDS.index) if k in present])
        tasks.append(TaskSpec(name, Stage.PERCEPTION, Periodic(1.0), name, preferred,
                              fpga_persona="p", threads=1))
    graph = build_task_graph(tasks, [])
    return Scenario(PlatformSpec(tuple(units)), graph, CostTable.from_rows(rows), Policy.MIN_ENERGY,
                    float(rng.randint(1, 5)), rng.randrange(1000))


# --------------------------------------------------------------------------
# brute-force enumeration


def _times(rate: float, horizon: int) -> list[int]:
    period = Fraction(1_000_000) / Fraction(repr(float(rate)))
    n = math.ceil(horizon / period) + 1
    return [t for t in (round(k * period) for k in range(n)) if t < horizon]


def brute_force_trace(scn: Scenario) -> dict:
    """Enumerate events of a scenario without overrides, batches or jitter.

    Returns ``{"records": [...], "released_ids": [...], "dropped": n}`` where
    each record is ``(id, task, unit, thread, release, start, finish,
    energy_nj, reconfig_us, truncated)``.
    """
    H = round(scn.duration * 1_000_000)
    units = list(scn.platform.units)
    table = scn.table.entries
    policy = scn.policy
    order = {u.id: i for i, u in enumerate(units)}

    def has(task, kind):
        return (task.cost_kind, kind) in table

    # worker threads, pinned least-loaded-first
    load = {u.id: 0 for u in units if u.kind is UnitKind.CPU_CORE}
    threads = {}  # task -> [(core id, index)]
    for t in scn.graph.tasks:
        if not has(t, UnitKind.CPU_CORE) or not load:
            continue
        if policy is Policy.AFFINITY_BEST and t.preferred_unit is not UnitKind.CPU_CORE:
            continue
        threads[t.name] = []
        for i in range(t.threads):
            core = sorted(load, key=lambda c: (load[c], order[c]))[0]
            load[core] += 1
            threads[t.name].append((core, i))

    # servers: key -> state
    srv = {}
    for u in units:
        if u.kind is UnitKind.CPU_CORE:
            for tname, lst in threads.items():
                for core, i in lst:
                    if core == u.id:
                        srv[(core, tname, i)] = dict(unit=u, thread=i, queue=[], run=None, pend=False,
                                                     free=0)
        else:
            srv[(u.id,)] = dict(unit=u, thread=None, queue=[], run=None, pend=False, free=0,
                                tail=u.fpga_initial_persona, fabric=u.fpga_initial_persona)

    def persona(task):
        return task.fpga_persona or task.cost_kind

    def reconf(u, task, loaded):
        if u.kind is not UnitKind.FPGA or loaded == persona(task):
            return 0
        return round(u.fpga_reconfig_ms * 1000)

    def energy(u, task, rc):
        e = table[(task.cost_kind, u.kind)]
        return round(e.energy_mj * 1_000_000) + round(u.active_power * rc * 1000)

    def lat(u, task):
        base = round(table[(task.cost_kind, u.kind)].latency_ms * 1000)
        return base * load[u.id] if u.kind is UnitKind.CPU_CORE else base

    events = []
    seq = [0]

    def push(t, kind, data):
        events.append((t, PRIO[kind], seq[0], kind, data))
        seq[0] += 1

    sensors = scn.graph.sensors
    fires = sorted((t, s.name) for s in sensors for t in _times(s.rate_hz, H))
    for t, name in fires:
        push(t, "sensor", name)
    for task in scn.graph.tasks:
        if isinstance(task.trigger, Periodic):
            for t in _times(task.trigger.rate_hz, H):
                push(t, "release", task.name)

    records, released, dropped = [], [], 0
    now = 0
    next_id = 0
    while events:
        ev = min(events)
        t, p = ev[0], ev[1]
        if not (t < H or (t == H and p == 0)):
            break
        events.remove(ev)
        now, kind, data = t, ev[3], ev[4]
        if kind == "sensor":
            s = next(x for x in sensors if x.name == data)
            for task in scn.graph.tasks:
                if isinstance(task.trigger, OnSensor) and task.trigger.sensor == data:
                    for _ in range(s.count):
                        push(now, "release", task.name)
        elif kind == "release":
            task = scn.graph.task(data)
            iid = next_id
            next_id += 1
            released.append(iid)
            cands = []
            for key, s in srv.items():
                u = s["unit"]
                if not has(task, u.kind):
                    continue
                if policy is Policy.AFFINITY_BEST and u.kind is not task.preferred_unit:
                    continue
                if u.kind is UnitKind.CPU_CORE and key[1] != task.name:
                    continue
                ready = max(now, s["free"])
                rc = reconf(u, task, s.get("tail"))
                fin = ready + rc + lat(u, task)
                e = energy(u, task, rc)
                if u.kind is UnitKind.CPU_CORE:
                    others = [x["free"] for k2, x in srv.items() if k2[0] == u.id and k2 != key]
                    unit_after = max([fin] + others)
                else:
                    unit_after = fin
                tie = (order[u.id], s["thread"] if s["thread"] is not None else -1)
                if policy is Policy.AFFINITY_BEST:
                    k = (ready, tie)
                elif policy is Policy.MIN_LATENCY:
                    k = (fin, tie)
                elif policy is Policy.MIN_ENERGY:
                    k = (e, fin, tie)
                else:
                    k = (unit_after, fin - ready, tie)
                cands.append((k, key, fin))
            if not cands:
                dropped += 1
                continue
            _, key, fin = min(cands)
            s = srv[key]
            s["free"] = fin
            if "tail" in s:
                s["tail"] = persona(task)
            s["queue"].append((iid, task, now))
            if s["run"] is None and not s["pend"]:
                s["pend"] = True
                push(now, "start", key)
        elif kind == "start":
            s = srv[data]
            s["pend"] = False
            if s["run"] is not None or not s["queue"]:
                continue
            iid, task, rel = s["queue"].pop(0)
            u = s["unit"]
            rc = reconf(u, task, s.get("fabric"))
            if "fabric" in s:
                s["fabric"] = persona(task)
            st = now + rc
            fin = st + lat(u, task)
            s["run"] = (iid, task, rel, now, st, fin, rc, energy(u, task, rc))
            push(fin, "finish", data)
        elif kind == "finish":
            s = srv[data]
            iid, task, rel, busy0, st, fin, rc, e = s["run"]
            s["run"] = None
            records.append((iid, task.name, s["unit"].id, s["thread"], rel, st, fin, e, rc, False))
            for child in scn.graph.tasks:
                if isinstance(child.trigger, OnCompletion) and child.trigger.parent == task.name:
                    push(now, "release", child.name)
            if s["queue"] and not s["pend"]:
                s["pend"] = True
                push(now, "start", data)

    for key, s in srv.items():
        if s["run"] is None:
            continue
        iid, task, rel, busy0, st, fin, rc, e = s["run"]
        total = fin - busy0
        done = H - busy0
        records.append((iid, task.name, s["unit"].id, s["thread"], rel, min(st, H), H,
                        e * done // total, min(rc, H - busy0), True))
    return {"records": records, "released_ids": released, "dropped": dropped}


def engine_records(trace) -> list[tuple]:
    return [(r.instance_id, r.task, r.unit, r.thread, r.release, r.start, r.finish, r.energy_nj,
             r.reconfig_charged, r.truncated) for r in trace.records]


# --------------------------------------------------------------------------
# invariants over traces


def check_clock_monotonic(events) -> None:
    times = [e.time for e in events]
    assert all(a <= b for a, b in zip(times, times[1:])), "clock went backwards"


def check_causality(trace, scn: Scenario) -> None:
    finishes = defaultdict(set)
    for r in trace.records:
        assert r.release <= r.start <= r.finish, r
        if not r.truncated:
            finishes[r.task].add(r.finish)
    for r in trace.records:
        trig = scn.graph.task(r.task).trigger
        if isinstance(trig, OnCompletion):
            assert r.release in finishes[trig.parent], f"{r.task}@{r.release} has no parent finish"


def check_unit_exclusivity(trace, scn: Scenario) -> None:
    by_server = defaultdict(list)
    for r in trace.records:
        u = scn.platform.unit(r.unit)
        if u.kind is UnitKind.CPU_CORE:
            key = (r.unit, r.task if r.thread is not None else "__override__", r.thread)
        else:
            key = (r.unit,)
        by_server[key].append((r.start - r.reconfig_charged, r.finish))
    for key, spans in by_server.items():
        spans.sort()
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            assert a1 <= b0, f"overlap on {key}: {(a0, a1)} {(b0, b1)}"
    # processor sharing: one running instance per resident thread, each at 1/load
    for core, load in trace.thread_load.items():
        spans = [(r.start, r.finish) for r in trace.records if r.unit == core and r.thread is not None]
        points = sorted({p for s in spans for p in s})
        for p in points:
            active = sum(1 for a, b in spans if a <= p < b)
            assert active * Fraction(1, max(load, 1)) <= 1, f"core {core} oversubscribed at {p}"


def check_work_conserving(trace, scn: Scenario) -> None:
    """Without overrides: each server starts its next committed instance the
    moment both it and the instance are ready."""
    by_server = defaultdict(list)
    for r in trace.records:
        by_server[(r.unit, r.task if r.thread is not None else None, r.thread)].append(r)
    for recs in by_server.values():
        recs.sort(key=lambda r: r.start)
        prev_finish = 0
        for r in recs:
            assert r.start - r.reconfig_charged == max(r.release, prev_finish), r
            prev_finish = r.finish


def check_energy_additivity(trace, report) -> None:
    total = sum(r.energy_nj for r in trace.records)
    assert total == report.totals.dynamic_energy_nj
    assert sum(u.energy_nj for u in report.units.values()) == total


# --------------------------------------------------------------------------
# small builders


def scenario(tasks, units, rows, sensors=(), streams=(), duration=1.0, policy=Policy.AFFINITY_BEST, seed=0):
    return Scenario(PlatformSpec(tuple(units)), build_task_graph(tasks, sensors, streams),
                    CostTable.from_rows(rows), policy, duration, seed)


def fe_scenario(duration=10.0):
    return scenario(
        [TaskSpec("fe", Stage.SENSING, OnSensor("camera"), "fe", DSP)],
        [ComputeUnit("dsp0", DSP, 1.5)],
        [("fe", DSP, 4.0, 6.0)],
        [SensorSpec("camera", 30.0)],
        duration=duration,
    )
