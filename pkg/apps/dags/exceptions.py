"""Errors raised by the DAG, scheduling and benchmark modules."""


class SchedulingError(Exception):
    """Base class for every domain error in the project."""


class CycleDetected(SchedulingError):
    def __init__(self, cycle=None):
        self.cycle = list(cycle or [])
        path = " -> ".join(str(node) for node in self.cycle)
        super().__init__(f"cycle detected: {path}" if path else "cycle detected")


class InvalidMutation(SchedulingError):
    def __init__(self, message, violations=()):
        self.violations = list(violations)
        super().__init__(message)


class EmptyDag(SchedulingError):
    pass


class BudgetExhausted(SchedulingError):
    """The job has no residual budget left to distribute."""

    def __init__(self, now_us, deadline_us):
        self.now_us = now_us
        self.deadline_us = deadline_us
        super().__init__(f"deadline {deadline_us}us already reached at {now_us}us")


class EmptyReadyQueue(SchedulingError):
    pass


class UnknownJob(SchedulingError):
    pass


class IllegalState(SchedulingError):
    pass


class ScenarioInvalid(SchedulingError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations) or "invalid scenario")


class UnknownPlatform(SchedulingError):
    pass


class UnknownCaseStudy(SchedulingError):
    pass


class MalformedTrace(SchedulingError):
    pass
