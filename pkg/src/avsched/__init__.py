"""Discrete-event simulation and run-time scheduling for heterogeneous
autonomous-driving compute platforms (CPU cores, GPU, DSP, time-shared FPGA)."""

__version__ = "0.1.0"

from .engine import Simulation, Trace, TraceRecord, run
from .metrics import MetricsReport, compare, summarize
from .model import ComputeUnit, CostEntry, CostTable, PlatformSpec, UnitKind
from .scenario import Scenario
from .scheduler import Policy

__all__ = [
    "ComputeUnit", "CostEntry", "CostTable", "MetricsReport", "PlatformSpec", "Policy",
    "Scenario", "Simulation", "Trace", "TraceRecord", "UnitKind", "compare", "run", "summarize",
]
