"""JSON scenario documents: validation, loading and dumping.

Field names follow the scenario schema documented in the README. Validation
errors are raised as :class:`ScenarioError` with the offending path, e.g.
``platform.units[1].active_power_w: non-positive power``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ScenarioError
from .model import ComputeUnit, CostTable, FpgaPersona, PlatformSpec, UnitKind
from .scenario import Scenario
from .scheduler import Policy
from .workload import (
    BatchThreshold,
    OnCompletion,
    OnSensor,
    Periodic,
    SafetyOverride,
    SensorSpec,
    StreamSpec,
    TaskSpec,
    build_task_graph,
)


class _Doc(BaseModel):
    model_config = ConfigDict(extra="forbid")


class UnitDoc(_Doc):
    id: str
    kind: str
    active_power_w: float
    peak_tops: float | None = None
    fpga_reconfig_ms: float | None = None
    fpga_initial_persona: str | None = None

    @field_validator("kind")
    @classmethod
    def _kind(cls, v: str) -> str:
        return UnitKind.parse(v).value

    @field_validator("active_power_w")
    @classmethod
    def _power(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("non-positive power")
        return v

    @field_validator("fpga_reconfig_ms")
    @classmethod
    def _reconfig(cls, v):
        if v is not None and v < 0:
            raise ValueError("negative reconfiguration latency")
        return v

    @model_validator(mode="after")
    def _fpga_fields(self):
        if self.kind != UnitKind.FPGA.value and (self.fpga_reconfig_ms is not None
                                                  or self.fpga_initial_persona is not None):
            raise ValueError("fpga_* fields are only valid on FPGA units")
        return self


class PlatformDoc(_Doc):
    name: str = "platform"
    units: list[UnitDoc]
    static_power_w: float = Field(0.0, ge=0)
    uplink_bytes_per_s: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _unique_ids(self):
        seen = set()
        for u in self.units:
            if u.id in seen:
                raise ValueError(f"duplicate unit id {u.id!r}")
            seen.add(u.id)
        return self


class CostDoc(_Doc):
    task: str
    unit: str
    latency_ms: float = Field(gt=0)
    energy_mj: float = Field(gt=0)

    @field_validator("unit")
    @classmethod
    def _unit(cls, v: str) -> str:
        return UnitKind.parse(v).value


class PeriodicDoc(_Doc):
    kind: Literal["periodic"]
    rate_hz: float = Field(gt=0)


class OnSensorDoc(_Doc):
    kind: Literal["on_sensor"]
    sensor: str


class OnCompletionDoc(_Doc):
    kind: Literal["on_completion"]
    parent: str
    probability: float = Field(1.0, ge=0, le=1)


class BatchThresholdDoc(_Doc):
    kind: Literal["batch_threshold"]
    source: str
    threshold_bytes: int = Field(gt=0)


class SafetyOverrideDoc(_Doc):
    kind: Literal["safety_override"]
    sensor: str


TriggerDoc = Annotated[
    Union[PeriodicDoc, OnSensorDoc, OnCompletionDoc, BatchThresholdDoc, SafetyOverrideDoc],
    Field(discriminator="kind"),
]


class TaskDoc(_Doc):
    name: str
    stage: Literal["sensing", "perception", "decision", "other"] = "other"
    trigger: TriggerDoc
    cost_kind: str
    preferred_unit: str
    deadline_ms: float | None = Field(None, gt=0)
    fpga_persona: str | None = None
    output_bytes: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)

    @field_validator("preferred_unit")
    @classmethod
    def _unit(cls, v: str) -> str:
        return UnitKind.parse(v).value


class SensorDoc(_Doc):
    name: str
    rate_hz: float = Field(gt=0)
    bytes_per_event: int = Field(0, ge=0)
    count: int = Field(1, ge=1)
    jitter_ms: float = Field(0.0, ge=0)


class StreamDoc(_Doc):
    name: str
    sources: list[str] = []


class PersonaDoc(_Doc):
    name: str
    load_latency_ms: float = Field(ge=0)


class ScenarioDoc(_Doc):
    name: str = "scenario"
    platform: PlatformDoc
    cost_table: list[CostDoc]
    tasks: list[TaskDoc] = []
    sensors: list[SensorDoc] = []
    streams: list[StreamDoc] = []
    personas: list[PersonaDoc] = []
    duration_s: float = Field(10.0, ge=0)
    policy: Literal["affinity", "throughput", "latency", "energy"] = "affinity"
    seed: int = 0


def _path(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        elif part in {"periodic", "on_sensor", "on_completion", "batch_threshold", "safety_override"}:
            continue  # discriminator tag inserted by pydantic
        else:
            out += f".{part}" if out else str(part)
    return out or "<document>"


def _validate(model: type[_Doc], doc):
    try:
        return model.model_validate(doc)
    except ValidationError as exc:
        err = exc.errors()[0]
        msg = err["msg"].removeprefix("Value error, ")
        raise ScenarioError(f"{_path(err['loc'])}: {msg}") from None
    except ScenarioError as exc:
        raise ScenarioError(str(exc)) from None


def _platform(p: PlatformDoc) -> PlatformSpec:
    units = tuple(
        ComputeUnit(u.id, UnitKind(u.kind), u.active_power_w, u.peak_tops, u.fpga_reconfig_ms,
                    u.fpga_initial_persona)
        for u in p.units
    )
    return PlatformSpec(units, p.static_power_w, p.uplink_bytes_per_s, p.name)


def load_platform(doc: dict) -> PlatformSpec:
    """Validate the ``platform`` section (or a whole scenario document)."""
    section = doc.get("platform", doc) if isinstance(doc, dict) else doc
    return _platform(_validate(PlatformDoc, section))


def _trigger(t):
    if isinstance(t, PeriodicDoc):
        return Periodic(t.rate_hz)
    if isinstance(t, OnSensorDoc):
        return OnSensor(t.sensor)
    if isinstance(t, OnCompletionDoc):
        return OnCompletion(t.parent, t.probability)
    if isinstance(t, BatchThresholdDoc):
        return BatchThreshold(t.source, t.threshold_bytes)
    return SafetyOverride(t.sensor)


def load_scenario(doc: dict) -> Scenario:
    d = _validate(ScenarioDoc, doc)
    platform = _platform(d.platform)
    table = CostTable.from_rows((c.task, UnitKind(c.unit), c.latency_ms, c.energy_mj) for c in d.cost_table)
    tasks = [
        TaskSpec(t.name, t.stage, _trigger(t.trigger), t.cost_kind, UnitKind(t.preferred_unit),
                 t.deadline_ms, t.fpga_persona, t.output_bytes, t.threads)
        for t in d.tasks
    ]
    sensors = [SensorSpec(s.name, s.rate_hz, s.bytes_per_event, s.count, s.jitter_ms) for s in d.sensors]
    streams = [StreamSpec(s.name, tuple(s.sources)) for s in d.streams]
    graph = build_task_graph(tasks, sensors, streams)
    personas = tuple(FpgaPersona(p.name, p.load_latency_ms) for p in d.personas)
    return Scenario(platform, graph, table, Policy(d.policy), d.duration_s, d.seed, personas, d.name)


def load_scenario_file(path: str | Path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return load_scenario(doc)


def _trigger_doc(trig) -> dict:
    if isinstance(trig, Periodic):
        return {"kind": "periodic", "rate_hz": trig.rate_hz}
    if isinstance(trig, OnSensor):
        return {"kind": "on_sensor", "sensor": trig.sensor}
    if isinstance(trig, OnCompletion):
        return {"kind": "on_completion", "parent": trig.parent, "probability": trig.probability}
    if isinstance(trig, BatchThreshold):
        return {"kind": "batch_threshold", "source": trig.source, "threshold_bytes": trig.threshold_bytes}
    return {"kind": "safety_override", "sensor": trig.sensor}


def dump_scenario(s: Scenario) -> dict:
    """Inverse of :func:`load_scenario`."""
    def unit(u: ComputeUnit) -> dict:
        d = {"id": u.id, "kind": u.kind.value, "active_power_w": u.active_power}
        if u.peak_tops is not None:
            d["peak_tops"] = u.peak_tops
        if u.kind is UnitKind.FPGA:
            d["fpga_reconfig_ms"] = u.fpga_reconfig_ms
            if u.fpga_initial_persona is not None:
                d["fpga_initial_persona"] = u.fpga_initial_persona
        return d

    def task(t: TaskSpec) -> dict:
        d = {"name": t.name, "stage": t.stage.value, "trigger": _trigger_doc(t.trigger),
             "cost_kind": t.cost_kind, "preferred_unit": t.preferred_unit.value,
             "output_bytes": t.output_bytes, "threads": t.threads}
        if t.deadline_ms is not None:
            d["deadline_ms"] = t.deadline_ms
        if t.fpga_persona is not None:
            d["fpga_persona"] = t.fpga_persona
        return d

    return {
        "name": s.name,
        "platform": {
            "name": s.platform.name,
            "units": [unit(u) for u in s.platform.units],
            "static_power_w": s.platform.static_power,
            "uplink_bytes_per_s": s.platform.uplink_bandwidth,
        },
        "cost_table": [
            {"task": t, "unit": k.value, "latency_ms": e.latency_ms, "energy_mj": e.energy_mj}
            for (t, k), e in s.table.entries.items()
        ],
        "tasks": [task(t) for t in s.graph.tasks],
        "sensors": [
            {"name": x.name, "rate_hz": x.rate_hz, "bytes_per_event": x.bytes_per_event,
             "count": x.count, "jitter_ms": x.jitter_ms}
            for x in s.graph.sensors
        ],
        "streams": [{"name": x.name, "sources": list(x.sources)} for x in s.graph.streams],
        "personas": [{"name": p.name, "load_latency_ms": p.load_latency_ms} for p in s.personas],
        "duration_s": s.duration,
        "policy": s.policy.value,
        "seed": s.seed,
    }
