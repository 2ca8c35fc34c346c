from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ScenarioError
from .model import CostTable, FpgaPersona, PlatformSpec
from .scheduler import Policy
from .workload import TaskGraph


@dataclass(frozen=True)
class Scenario:
    platform: PlatformSpec
    graph: TaskGraph
    table: CostTable
    policy: Policy = Policy.AFFINITY_BEST
    duration: float = 10.0  # seconds
    seed: int = 0
    personas: tuple[FpgaPersona, ...] = ()
    name: str = "scenario"

    def __post_init__(self):
        if not isinstance(self.policy, Policy):
            object.__setattr__(self, "policy", Policy.parse(str(self.policy)))
        object.__setattr__(self, "personas", tuple(self.personas))
        if self.duration < 0:
            raise ScenarioError("duration must be >= 0")
        for t in self.graph.tasks:
            if not self.table.kinds_for(t.cost_kind):
                raise ScenarioError(f"task {t.name}: cost kind {t.cost_kind!r} has no cost-table entry")
        names = [p.name for p in self.personas]
        if len(set(names)) != len(names):
            raise ScenarioError("persona names must be unique")

    @property
    def horizon_us(self) -> int:
        return round(self.duration * 1_000_000)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)
