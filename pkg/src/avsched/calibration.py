"""Inversion formulas for cost-table entries that are implied but not measured.

The mobile-SoC preset reads its calibrated values from
``avsched/data/calibration.json``; :func:`calibrate` regenerates that file.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

from .errors import InfeasibleCalibration, ScenarioError
from .model import CostTable, PlatformSpec, ComputeUnit, UnitKind, active_power

CALIBRATION_VERSION = 1
CALIBRATION_FILE = "calibration.json"

#: observed pipeline figures on the mobile SoC
TARGET_LOCALIZATION_RATE = 25.0  # images/s
LOCALIZATION_THREADS = 2
TARGET_RECOGNITION_RATE = 2.5  # midpoint of 2..3 recognitions/s
TARGET_AVERAGE_POWER_W = 11.0

THROUGHPUT_TOL = 0.02
POWER_TOL = 0.05


@dataclass(frozen=True)
class CalibrationTarget:
    name: str
    observed_value: float
    unit: str
    free_parameter: str

    def __post_init__(self):
        if not self.observed_value > 0:
            raise ScenarioError(f"calibration target {self.name}: observed value must be > 0")
        if not self.free_parameter:
            raise ScenarioError(f"calibration target {self.name}: free parameter required")


TARGETS = (
    CalibrationTarget("localization_throughput", TARGET_LOCALIZATION_RATE, "1/s",
                      "cost_table.localization_solve.CPU_CORE.latency_ms"),
    CalibrationTarget("recognition_throughput", TARGET_RECOGNITION_RATE, "1/s",
                      "cost_table.recognition.GPU.latency_ms"),
    CalibrationTarget("average_power", TARGET_AVERAGE_POWER_W, "W", "platform.static_power_w"),
)


def calibrate_stage_latency(target_throughput: float, replicas: int) -> float:
    """Service time (ms) at which ``replicas`` parallel servers sustain the target rate."""
    if not target_throughput > 0:
        raise ValueError("target throughput must be > 0")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    return replicas / target_throughput * 1000.0


def calibrate_static_power(target_avg: float, simulated_dynamic: float) -> float:
    if simulated_dynamic > target_avg:
        raise InfeasibleCalibration(
            f"infeasible calibration: dynamic power {simulated_dynamic} W exceeds target {target_avg} W"
        )
    return target_avg - simulated_dynamic


def derive_task_energy(latency_ms: float, unit: UnitKind, table: CostTable) -> float:
    """Energy (mJ) of a task on ``unit`` from the table's implied active power."""
    return latency_ms * active_power(table, unit)


def verify_stage_throughput(latency_ms: float, replicas: int, kind: UnitKind = UnitKind.CPU_CORE,
                            duration: float = 60.0) -> float:
    """Simulate an overloaded stage and return its achieved completions per second.

    The stage runs on ``replicas`` servers (worker threads on as many cores
    for CPU, separate units otherwise) and is fed at twice its capacity.
    """
    from .engine import run
    from .scenario import Scenario
    from .scheduler import Policy
    from .workload import Periodic, Stage, TaskSpec, build_task_graph

    prefix = kind.value.lower()
    n_units = replicas
    platform = PlatformSpec(tuple(ComputeUnit(f"{prefix}{i}", kind, 1.0) for i in range(n_units)))
    table = CostTable.from_rows([("stage", kind, latency_ms, latency_ms)])
    rate = 2.0 * replicas / (latency_ms / 1000.0)
    task = TaskSpec("stage", Stage.PERCEPTION, Periodic(rate), "stage", kind,
                    threads=replicas if kind is UnitKind.CPU_CORE else 1)
    scenario = Scenario(platform, build_task_graph([task], []), table, Policy.AFFINITY_BEST, duration)
    trace = run(scenario)
    return len(trace.completed("stage")) / duration


def calibrate(duration: float = 60.0, seed: int = 1) -> dict:
    """Solve every calibration target and verify it by re-simulation."""
    from .engine import run
    from .metrics import summarize
    from .presets import build_mobile_soc

    loc_ms = calibrate_stage_latency(TARGET_LOCALIZATION_RATE, LOCALIZATION_THREADS)
    rec_ms = calibrate_stage_latency(TARGET_RECOGNITION_RATE, 1)

    scenario = build_mobile_soc(loc_ms, rec_ms, static_power=0.0, duration=duration, seed=seed)
    report = summarize(run(scenario), scenario)
    dynamic_w = report.totals.average_power_w
    static_w = calibrate_static_power(TARGET_AVERAGE_POWER_W, dynamic_w)

    return {
        "version": CALIBRATION_VERSION,
        "duration_s": duration,
        "seed": seed,
        "policy": "affinity",
        "targets": [asdict(t) for t in TARGETS],
        "localization_solve_latency_ms": loc_ms,
        "recognition_latency_ms": rec_ms,
        "static_power_w": static_w,
        "simulated_dynamic_power_w": dynamic_w,
        "verification": {
            "stage_localization_throughput": verify_stage_throughput(loc_ms, LOCALIZATION_THREADS,
                                                                     UnitKind.CPU_CORE, duration),
            "stage_recognition_throughput": verify_stage_throughput(rec_ms, 1, UnitKind.GPU, duration),
            "pipeline_localization_throughput": report.tasks["localization_solve"].throughput,
            "pipeline_recognition_throughput": report.tasks["recognition"].throughput,
        },
    }


def dump_calibration(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def load_calibration(path: str | Path | None = None) -> dict:
    if path is None:
        text = resources.files("avsched").joinpath("data", CALIBRATION_FILE).read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text)
    if data.get("version") != CALIBRATION_VERSION:
        raise ScenarioError(f"unsupported calibration version {data.get('version')!r}")
    return data
