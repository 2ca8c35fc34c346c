"""Built-in scenarios.

``mobile-soc`` maps the vision pipeline onto a four-core CPU, GPU, DSP and a
time-shared FPGA. ``production-cameras`` feeds the same platform from an
eight-camera 60 Hz rig. ``datacenter-box`` is the Xeon + eight K80 compute
box, used for capability aggregation and policy comparisons.
"""

from __future__ import annotations

from typing import Callable

from .calibration import derive_task_energy, load_calibration
from .errors import ScenarioError
from .model import ComputeUnit, CostTable, PlatformSpec, UnitKind, active_power
from .scenario import Scenario
from .scheduler import Policy
from .workload import (
    BatchThreshold,
    OnCompletion,
    OnSensor,
    Periodic,
    SafetyOverride,
    SensorSpec,
    Stage,
    StreamSpec,
    TaskSpec,
    build_task_graph,
)

CPU, GPU, DSP, FPGA = UnitKind.CPU_CORE, UnitKind.GPU, UnitKind.DSP, UnitKind.FPGA

#: measured per-instance (latency ms, energy mJ) on the mobile SoC
MEASURED_COSTS = (
    ("convolution", CPU, 8.0, 20.0),
    ("convolution", DSP, 5.0, 7.5),
    ("convolution", GPU, 2.0, 4.5),
    ("feature_extraction", CPU, 20.0, 50.0),
    ("feature_extraction", GPU, 10.0, 22.5),
    ("feature_extraction", DSP, 4.0, 6.0),
)

# Not measured; chosen inside the observed envelope (planning within 6 ms,
# reconfiguration within a few ms).
PLANNING_MS = 4.0
OBSTACLE_AVOIDANCE_MS = 3.0
RADAR_OVERRIDE_MS = 0.5
TRACKING_MS = 20.0
PREDICTION_MS = 15.0
UPLOAD_MS = 30.0
FPGA_POWER_W = 1.0
FPGA_RECONFIG_MS = 3.0
UPLOAD_THRESHOLD_BYTES = 1_000_000
UPLINK_BYTES_PER_S = 1_250_000.0

MOBILE_CAMERA = SensorSpec("camera", 30.0, 640 * 480 * 3)
PRODUCTION_CAMERA = SensorSpec("camera", 60.0, 3_750_000, count=8)
RADAR = SensorSpec("radar", 20.0, 1024)


def canonical_cost_table() -> CostTable:
    return CostTable.from_rows(MEASURED_COSTS)


def _mobile_table(localization_ms: float, recognition_ms: float) -> CostTable:
    base = canonical_cost_table()
    rows = [
        ("localization_solve", CPU, localization_ms),
        ("planning", CPU, PLANNING_MS),
        ("obstacle_avoidance", CPU, OBSTACLE_AVOIDANCE_MS),
        ("radar_override", CPU, RADAR_OVERRIDE_MS),
        ("recognition", GPU, recognition_ms),
    ]
    derived = CostTable.from_rows(
        (task, kind, ms, derive_task_energy(ms, kind, base)) for task, kind, ms in rows
    )
    fpga = CostTable.from_rows([
        ("tracking", FPGA, TRACKING_MS, TRACKING_MS * FPGA_POWER_W),
        ("traffic_prediction", FPGA, PREDICTION_MS, PREDICTION_MS * FPGA_POWER_W),
        ("upload", FPGA, UPLOAD_MS, UPLOAD_MS * FPGA_POWER_W),
    ])
    return base.merged(derived).merged(fpga)


def mobile_platform(static_power: float) -> PlatformSpec:
    table = canonical_cost_table()
    units = [ComputeUnit(f"cpu{i}", CPU, active_power(table, CPU)) for i in range(4)]
    units += [
        ComputeUnit("gpu0", GPU, active_power(table, GPU)),
        ComputeUnit("dsp0", DSP, active_power(table, DSP)),
        ComputeUnit("fpga0", FPGA, FPGA_POWER_W, fpga_reconfig_ms=FPGA_RECONFIG_MS),
    ]
    return PlatformSpec(tuple(units), static_power, UPLINK_BYTES_PER_S, "mobile-soc")


def _mobile_tasks(recognition_rate: float) -> list[TaskSpec]:
    return [
        TaskSpec("feature_extraction", Stage.SENSING, OnSensor("camera"), "feature_extraction", DSP),
        TaskSpec("localization_solve", Stage.PERCEPTION, OnCompletion("feature_extraction"),
                 "localization_solve", CPU, threads=2, output_bytes=32_768),
        TaskSpec("recognition", Stage.PERCEPTION, Periodic(recognition_rate), "recognition", GPU),
        TaskSpec("tracking", Stage.PERCEPTION, OnCompletion("recognition"), "tracking", FPGA,
                 fpga_persona="tracking", output_bytes=16_384),
        TaskSpec("traffic_prediction", Stage.DECISION, OnCompletion("tracking"), "traffic_prediction",
                 FPGA, fpga_persona="prediction", output_bytes=16_384),
        TaskSpec("planning", Stage.DECISION, Periodic(10.0), "planning", CPU, deadline_ms=6.0),
        TaskSpec("obstacle_avoidance", Stage.DECISION, Periodic(10.0), "obstacle_avoidance", CPU),
        TaskSpec("radar_override", Stage.DECISION, SafetyOverride("radar"), "radar_override", CPU,
                 deadline_ms=1.0),
        TaskSpec("upload", Stage.OTHER, BatchThreshold("upload_data", UPLOAD_THRESHOLD_BYTES), "upload",
                 FPGA, fpga_persona="compression-upload"),
    ]


def build_mobile_soc(localization_ms: float, recognition_ms: float, static_power: float,
                     duration: float = 60.0, seed: int = 1, camera: SensorSpec = MOBILE_CAMERA,
                     name: str = "mobile-soc") -> Scenario:
    """Mobile-SoC scenario with explicit calibrated parameters.

    Recognition is released at exactly the rate the GPU can sustain, so the
    GPU runs back-to-back without a growing backlog.
    """
    graph = build_task_graph(
        _mobile_tasks(1000.0 / recognition_ms),
        [camera, RADAR],
        [StreamSpec("upload_data", ("localization_solve", "tracking", "traffic_prediction"))],
    )
    return Scenario(mobile_platform(static_power), graph, _mobile_table(localization_ms, recognition_ms),
                    Policy.AFFINITY_BEST, duration, seed, name=name)


def preset_mobile_soc(calibration: dict | None = None) -> Scenario:
    cal = calibration or load_calibration()
    return build_mobile_soc(cal["localization_solve_latency_ms"], cal["recognition_latency_ms"],
                            cal["static_power_w"])


def preset_production_cameras(calibration: dict | None = None) -> Scenario:
    cal = calibration or load_calibration()
    return build_mobile_soc(cal["localization_solve_latency_ms"], cal["recognition_latency_ms"],
                            cal["static_power_w"], duration=10.0, camera=PRODUCTION_CAMERA,
                            name="production-cameras")


XEON_CORES = 12
XEON_TOPS = 0.4
XEON_W = 400.0
K80_COUNT = 8
K80_TOPS = 8.0
K80_W = 300.0


def datacenter_platform() -> PlatformSpec:
    units = [ComputeUnit(f"xeon-c{i}", CPU, XEON_W / XEON_CORES, peak_tops=XEON_TOPS / XEON_CORES)
             for i in range(XEON_CORES)]
    units += [ComputeUnit(f"k80-{i}", GPU, K80_W, peak_tops=K80_TOPS) for i in range(K80_COUNT)]
    return PlatformSpec(tuple(units), 0.0, 0.0, "datacenter-box")


def preset_datacenter() -> Scenario:
    cpu_w, gpu_w = XEON_W / XEON_CORES, K80_W
    # latencies assumed; energy = unit power x latency
    rows = [
        ("recognition", GPU, 25.0), ("recognition", CPU, 400.0),
        ("tracking", GPU, 5.0), ("tracking", CPU, 40.0),
        ("localization_solve", CPU, 50.0),
        ("planning", CPU, 5.0),
    ]
    table = CostTable.from_rows(
        (t, k, ms, ms * (cpu_w if k is CPU else gpu_w)) for t, k, ms in rows
    )
    tasks = [
        TaskSpec("recognition", Stage.PERCEPTION, OnSensor("camera"), "recognition", GPU),
        TaskSpec("tracking", Stage.PERCEPTION, OnCompletion("recognition"), "tracking", GPU),
        TaskSpec("localization_solve", Stage.PERCEPTION, OnSensor("lidar"), "localization_solve", CPU,
                 threads=2),
        TaskSpec("planning", Stage.DECISION, Periodic(10.0), "planning", CPU, deadline_ms=100.0),
    ]
    sensors = [SensorSpec("camera", 30.0, 1920 * 1080 * 3, count=12), SensorSpec("lidar", 10.0, 130_000 * 16)]
    graph = build_task_graph(tasks, sensors)
    return Scenario(datacenter_platform(), graph, table, Policy.AFFINITY_BEST, 10.0, 1,
                    name="datacenter-box")


PRESETS: dict[str, tuple[Callable[[], Scenario], str]] = {
    "mobile-soc": (preset_mobile_soc,
                   "heterogeneous mobile SoC pipeline: DSP features, GPU recognition, CPU threads, shared FPGA"),
    "datacenter-box": (preset_datacenter, "Xeon E5 (12 cores) + 8 K80 GPUs compute box"),
    "production-cameras": (preset_production_cameras, "mobile SoC fed by eight 60 Hz production cameras"),
}


def get_preset(name: str) -> Scenario:
    try:
        builder, _ = PRESETS[name]
    except KeyError:
        raise ScenarioError(f"unknown preset {name!r} (known: {', '.join(sorted(PRESETS))})") from None
    return builder()
