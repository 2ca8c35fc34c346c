"""Compute units, cost tables and platform specifications.

Costs are stored the way they are measured (milliseconds, millijoules) and
exposed as integer microseconds / nanojoules for the simulator, so that
event times and energy sums are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .errors import (
    CapabilityUnknown,
    InconsistentPowerModel,
    NoAffinityError,
    ScenarioError,
)

#: relative tolerance for every power/energy consistency check
POWER_REL_TOL = 0.01

#: reconfiguration latency used when an FPGA unit does not declare one
DEFAULT_FPGA_RECONFIG_MS = 3.0


class UnitKind(str, Enum):
    CPU_CORE = "CPU_CORE"
    GPU = "GPU"
    DSP = "DSP"
    FPGA = "FPGA"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "UnitKind":
        """Accept the enum name in any case; ``cpu`` is an alias for CPU_CORE."""
        key = text.strip().upper()
        if key == "CPU":
            key = "CPU_CORE"
        try:
            return cls[key]
        except KeyError:
            raise ScenarioError(f"unknown unit kind {text!r}") from None


def ms_to_us(ms: float) -> int:
    return round(ms * 1000)


def mj_to_nj(mj: float) -> int:
    return round(mj * 1_000_000)


def power_energy_nj(power_w: float, duration_us: int) -> int:
    """Energy drawn at ``power_w`` for ``duration_us``, in nanojoules."""
    return round(power_w * duration_us * 1000)


@dataclass(frozen=True)
class ComputeUnit:
    id: str
    kind: UnitKind
    active_power: float  # W while executing
    peak_tops: float | None = None
    fpga_reconfig_ms: float | None = None
    fpga_initial_persona: str | None = None

    def __post_init__(self):
        if not isinstance(self.kind, UnitKind):
            object.__setattr__(self, "kind", UnitKind.parse(str(self.kind)))
        if not self.active_power > 0:
            raise ScenarioError(f"unit {self.id}: non-positive power {self.active_power}")
        if self.kind is UnitKind.FPGA:
            if self.fpga_reconfig_ms is None:
                object.__setattr__(self, "fpga_reconfig_ms", DEFAULT_FPGA_RECONFIG_MS)
            if self.fpga_reconfig_ms < 0:
                raise ScenarioError(f"unit {self.id}: negative reconfiguration latency")
        elif self.fpga_reconfig_ms is not None or self.fpga_initial_persona is not None:
            raise ScenarioError(f"unit {self.id}: FPGA fields on a {self.kind} unit")

    @property
    def reconfig_us(self) -> int:
        return ms_to_us(self.fpga_reconfig_ms or 0.0)


@dataclass(frozen=True)
class CostEntry:
    latency_ms: float
    energy_mj: float

    def __post_init__(self):
        if not self.latency_ms > 0:
            raise ScenarioError(f"non-positive latency {self.latency_ms}")
        if not self.energy_mj > 0:
            raise ScenarioError(f"non-positive energy {self.energy_mj}")

    @property
    def latency_us(self) -> int:
        return ms_to_us(self.latency_ms)

    @property
    def energy_nj(self) -> int:
        return mj_to_nj(self.energy_mj)

    @property
    def power_w(self) -> float:
        return self.energy_mj / self.latency_ms


@dataclass(frozen=True)
class CostTable:
    """(task kind, unit kind) -> CostEntry."""

    entries: Mapping[tuple[str, UnitKind], CostEntry] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))

    def __hash__(self):
        return hash(tuple(sorted((k[0], k[1].value, v) for k, v in self.entries.items())))

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, UnitKind | str, float, float]]) -> "CostTable":
        entries: dict[tuple[str, UnitKind], CostEntry] = {}
        for task, unit, latency, energy in rows:
            kind = unit if isinstance(unit, UnitKind) else UnitKind.parse(unit)
            if (task, kind) in entries:
                raise ScenarioError(f"duplicate cost entry ({task}, {kind})")
            entries[(task, kind)] = CostEntry(latency, energy)
        return cls(entries)

    def kinds_for(self, task_kind: str) -> list[UnitKind]:
        """Affinity set of a task kind, in enum order."""
        return [k for k in UnitKind if (task_kind, k) in self.entries]

    def task_kinds(self) -> list[str]:
        return sorted({t for t, _ in self.entries})

    def merged(self, other: "CostTable") -> "CostTable":
        return CostTable({**self.entries, **other.entries})


@dataclass(frozen=True)
class FpgaPersona:
    name: str
    load_latency_ms: float

    def __post_init__(self):
        if self.load_latency_ms < 0:
            raise ScenarioError(f"persona {self.name}: negative load latency")


@dataclass(frozen=True)
class PlatformSpec:
    units: tuple[ComputeUnit, ...]
    static_power: float = 0.0
    uplink_bandwidth: float = 0.0  # bytes/s
    name: str = "platform"

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        if self.static_power < 0:
            raise ScenarioError("static_power must be >= 0")
        if self.uplink_bandwidth < 0:
            raise ScenarioError("uplink_bandwidth must be >= 0")
        seen = set()
        for u in self.units:
            if u.id in seen:
                raise ScenarioError(f"duplicate unit id {u.id!r}")
            seen.add(u.id)

    def unit(self, unit_id: str) -> ComputeUnit:
        for u in self.units:
            if u.id == unit_id:
                return u
        raise KeyError(unit_id)

    def of_kind(self, kind: UnitKind) -> list[ComputeUnit]:
        return [u for u in self.units if u.kind is kind]

    def count(self, kind: UnitKind) -> int:
        return len(self.of_kind(kind))


def unit_cost(table: CostTable, task_kind: str, unit: UnitKind) -> CostEntry:
    try:
        return table.entries[(task_kind, unit)]
    except KeyError:
        raise NoAffinityError(f"no affinity: {task_kind} has no cost entry on {unit}") from None


def active_power(table: CostTable, unit: UnitKind) -> float:
    """Active power of a unit kind, implied by its energy/latency ratios.

    Every entry for the unit must agree within ``POWER_REL_TOL``.
    """
    ratios = [e.power_w for (_, k), e in sorted(table.entries.items(), key=lambda kv: kv[0][0])
              if k is unit]
    if not ratios:
        raise NoAffinityError(f"no affinity: cost table has no entries for {unit}")
    ref = ratios[0]
    for r in ratios[1:]:
        if not math.isclose(r, ref, rel_tol=POWER_REL_TOL):
            raise InconsistentPowerModel(
                f"inconsistent power model for {unit}: ratios {ref:.4g} W and {r:.4g} W"
            )
    return math.fsum(ratios) / len(ratios)


def aggregate_capability(platform: PlatformSpec) -> tuple[float, float]:
    """(sum of peak TOPS, sum of active power + static power).

    Sums are rounded to 9 decimals so per-core splits such as 400 W / 12
    add back to the whole.
    """
    missing = [u.id for u in platform.units if u.peak_tops is None]
    if missing:
        raise CapabilityUnknown(f"capability unknown for units {', '.join(missing)}")
    tops = math.fsum(u.peak_tops for u in platform.units)
    watts = math.fsum([u.active_power for u in platform.units] + [platform.static_power])
    return round(tops, 9), round(watts, 9)
