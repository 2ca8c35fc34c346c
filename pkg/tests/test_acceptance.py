"""Acceptance suite: one test per criterion, each within its wall-clock budget.

Run ``pytest tests/test_acceptance.py`` to get a pass/fail line per criterion
in the terminal summary.
"""

import math
import random
import time

import pytest

from helpers import (
    brute_force_trace,
    check_causality,
    check_clock_monotonic,
    check_energy_additivity,
    check_unit_exclusivity,
    check_work_conserving,
    engine_records,
    random_independent_scenario,
    random_oracle_case,
)

from avsched.engine import Simulation, run
from avsched.metrics import summarize
from avsched.model import (
    ComputeUnit,
    CostTable,
    PlatformSpec,
    UnitKind,
    active_power,
    aggregate_capability,
    unit_cost,
)
from avsched.presets import (
    PRODUCTION_CAMERA,
    canonical_cost_table,
    get_preset,
    mobile_platform,
)
from avsched.scenario import Scenario
from avsched.scheduler import Instance, Policy, SchedulerState, assign
from avsched.workload import (
    OnSensor,
    SensorSpec,
    Stage,
    TaskSpec,
    build_task_graph,
    data_rate,
    localization_error_bound,
)

CPU, GPU, DSP, FPGA = UnitKind.CPU_CORE, UnitKind.GPU, UnitKind.DSP, UnitKind.FPGA

SIX_PAIRS = {
    ("convolution", CPU): (8.0, 20.0),
    ("convolution", DSP): (5.0, 7.5),
    ("convolution", GPU): (2.0, 4.5),
    ("feature_extraction", CPU): (20.0, 50.0),
    ("feature_extraction", GPU): (10.0, 22.5),
    ("feature_extraction", DSP): (4.0, 6.0),
}


class Budget:
    def __init__(self, seconds: float):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        if exc[0] is None:
            elapsed = time.perf_counter() - self.t0
            assert elapsed < self.seconds, f"took {elapsed:.2f} s, budget {self.seconds} s"


@pytest.mark.criterion(1, "cost-table fidelity")
def test_c1_cost_table_fidelity():
    with Budget(1):
        table = canonical_cost_table()
        for (task, kind), (lat, en) in SIX_PAIRS.items():
            e = unit_cost(table, task, kind)
            assert (e.latency_ms, e.energy_mj) == (lat, en)


@pytest.mark.criterion(2, "power-model consistency")
def test_c2_power_model():
    with Budget(1):
        table = canonical_cost_table()
        expected = {CPU: 2.5, GPU: 2.25, DSP: 1.5}
        for kind, watts in expected.items():
            assert active_power(table, kind) == pytest.approx(watts, rel=1e-12)
        for (task, kind), (lat, en) in SIX_PAIRS.items():
            assert en == pytest.approx(expected[kind] * lat, rel=0.01)


@pytest.mark.criterion(3, "argmin invariance of measured costs")
def test_c3_argmin_invariance():
    with Budget(1):
        platform = mobile_platform(0.0)
        table = canonical_cost_table()
        tasks = [TaskSpec(k, Stage.PERCEPTION, OnSensor("camera"), k, CPU)
                 for k in ("convolution", "feature_extraction")]
        graph = build_task_graph(tasks, [SensorSpec("camera", 30.0)])
        want = {"convolution": GPU, "feature_extraction": DSP}
        for policy in (Policy.MIN_ENERGY, Policy.MIN_LATENCY):
            for task in tasks:
                state = SchedulerState.for_run(platform, table, graph, policy)
                a, _ = assign(Instance(0, task, 0), state, policy, 0)
                assert platform.unit(a.unit_id).kind is want[task.name], (policy, task.name)


@pytest.mark.criterion(4, "mobile-SoC calibration round-trip")
def test_c4_mobile_soc_round_trip():
    with Budget(10):
        scn = get_preset("mobile-soc").with_(policy=Policy.AFFINITY_BEST, duration=60.0)
        trace = run(scn)
        report = summarize(trace, scn)
    assert abs(report.tasks["localization_solve"].throughput - 25.0) <= 0.5
    assert 2.0 <= report.tasks["recognition"].throughput <= 3.0
    planning = trace.completed("planning")
    assert planning
    within = sum(1 for r in planning if r.latency_us <= 6000)
    assert within / len(planning) >= 0.99
    assert report.totals.average_power_w == pytest.approx(11.0, rel=0.05)


@pytest.mark.criterion(5, "datacenter aggregation")
def test_c5_datacenter_aggregation():
    with Budget(1):
        tops, watts = aggregate_capability(get_preset("datacenter-box").platform)
        assert (tops, watts) == (64.4, 2800.0)
        # rounded headline: "64.5 TOPS at about 3000 W"
        assert abs(tops - 64.5) < 0.5 and abs(watts - 3000) / 3000 < 0.1


@pytest.mark.criterion(6, "sensor arithmetic")
def test_c6_sensor_arithmetic():
    with Budget(1):
        bound = localization_error_bound(26.82, 200.0)
        assert bound == pytest.approx(0.1341, rel=0.01)
        assert bound < 0.2
        assert data_rate(PRODUCTION_CAMERA) == pytest.approx(1.8e9, rel=0.01)
        scn = get_preset("production-cameras")
        assert data_rate(scn.graph.sensor("camera")) == pytest.approx(1.8e9, rel=0.01)


def _fpga_alternation(track_persona: str, pred_persona: str, initial: str | None,
                      l_track=20.0, l_pred=15.0, duration=10.0) -> Scenario:
    platform = PlatformSpec((ComputeUnit("fpga0", FPGA, 1.0, fpga_reconfig_ms=3.0,
                                         fpga_initial_persona=initial),))
    table = CostTable.from_rows([("tracking", FPGA, l_track, l_track), ("prediction", FPGA, l_pred, l_pred)])
    # the sensor outpaces the fabric, so both queues stay non-empty
    tasks = [
        TaskSpec("tracking", Stage.PERCEPTION, OnSensor("cam"), "tracking", FPGA, fpga_persona=track_persona),
        TaskSpec("prediction", Stage.DECISION, OnSensor("cam"), "prediction", FPGA, fpga_persona=pred_persona),
    ]
    graph = build_task_graph(tasks, [SensorSpec("cam", 100.0)])
    return Scenario(platform, graph, table, Policy.AFFINITY_BEST, duration)


@pytest.mark.criterion(7, "FPGA time-sharing")
def test_c7_fpga_time_sharing():
    with Budget(5):
        for l_track, l_pred in ((20.0, 15.0), (10.0, 10.0), (7.0, 25.0)):
            scn = _fpga_alternation("tracking", "prediction", None, l_track, l_pred)
            trace = run(scn)
            analytic = 1000.0 / (l_track + l_pred + 2 * 3.0)
            for task in ("tracking", "prediction"):
                got = len(trace.completed(task)) / scn.duration
                assert got == pytest.approx(analytic, rel=0.02), (task, l_track, l_pred)
            assert all(r.reconfig_charged == 3000 for r in trace.records if not r.truncated)

        same = run(_fpga_alternation("shared", "shared", "shared"))
        assert sum(r.reconfig_charged for r in same.records) == 0
        for task in ("tracking", "prediction"):
            assert len(same.completed(task)) / 10.0 == pytest.approx(1000.0 / 35.0, rel=0.02)


@pytest.mark.criterion(8, "engine property suite and brute-force oracle")
def test_c8_engine_properties():
    with Budget(60):
        rng = random.Random(20240601)
        cases = 1200
        for _ in range(cases):
            scn = random_oracle_case(rng)
            events = []
            sim = Simulation(scn, on_event=events.append)
            trace = sim.run()
            report = summarize(trace, scn)

            check_clock_monotonic(events)
            check_causality(trace, scn)
            check_unit_exclusivity(trace, scn)
            check_work_conserving(trace, scn)
            check_energy_additivity(trace, report)

            replay = run(scn)
            assert replay.to_jsonl() == trace.to_jsonl()

            oracle = brute_force_trace(scn)
            assert sorted(engine_records(trace)) == sorted(oracle["records"])
            assert sum(trace.dropped.values()) == oracle["dropped"]
            assert sum(trace.released.values()) == len(oracle["released_ids"]) <= 10


@pytest.mark.criterion(9, "MIN_ENERGY dominance without contention")
def test_c9_policy_dominance():
    with Budget(30):
        rng = random.Random(99)
        for _ in range(150):
            scn = random_independent_scenario(rng)
            totals = {}
            for policy in Policy:
                s = scn.with_(policy=policy)
                trace = run(s)
                assert not any(r.truncated for r in trace.records)
                assert sum(trace.dropped.values()) == 0
                assert all(len(trace.completed(t)) == math.ceil(s.duration) for t in s.graph.task_names())
                totals[policy] = summarize(trace, s).totals.dynamic_energy_nj
            for policy, total in totals.items():
                assert totals[Policy.MIN_ENERGY] <= total, (policy, totals)
