"""Exception hierarchy shared by every avsched module."""


class AvschedError(Exception):
    """Base class for all library errors."""


class ScenarioError(AvschedError, ValueError):
    """A scenario document or domain object violates its schema or invariants."""


class NoAffinityError(AvschedError):
    """The cost table has no entry for a (task kind, unit kind) pair."""


class InconsistentPowerModel(AvschedError):
    pass


class CapabilityUnknown(AvschedError):
    pass


class CyclicTriggerChain(ScenarioError):
    pass


class UnknownTriggerSource(ScenarioError):
    pass


class UnschedulableTask(AvschedError):
    pass


class CausalityViolation(AvschedError):
    pass


class ThresholdNotReached(AvschedError):
    pass


class InfeasibleCalibration(AvschedError):
    pass


class DomainError(AvschedError, ValueError):
    """Argument outside an operation's mathematical domain."""


class ReportMismatch(AvschedError):
    pass
