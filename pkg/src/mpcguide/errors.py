class PlanningError(Exception):
    """Base class for planning failures surfaced to the harness."""


class InvalidQuery(PlanningError):
    pass


class NoPath(PlanningError):
    pass


class InvalidPath(PlanningError):
    pass


class CorridorInfeasible(PlanningError):
    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"corridor collapses at step {step}")


class AlreadyRelaxed(PlanningError):
    pass


class NoFallbackAvailable(PlanningError):
    pass


class ScenarioError(ValueError):
    pass
