"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for validation problems, 3 for solver failures, 4 for I/O problems.
"""

from __future__ import annotations


class ConcordanceError(Exception):
    exit_code = 1

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


class ValidationError(ConcordanceError):
    exit_code = 2


class SolverError(ConcordanceError):
    exit_code = 3


class DataIOError(ConcordanceError):
    exit_code = 4


# network
class DuplicateActivityId(ValidationError):
    pass


class UnknownTransitionEndpoint(ValidationError):
    pass


class InvalidNetworkSpec(ValidationError):
    pass


class TrivialNetwork(ValidationError):
    """Fewer than two distinct START->END paths; the inverse model has no solution."""


class MissingArc(ValidationError):
    def __init__(self, tail: str, head: str):
        super().__init__(f"no arc {tail} -> {head} in the network")
        self.tail = tail
        self.head = head


# solver
class NumericalFailure(SolverError):
    pass


class NegativeCycleDetected(SolverError):
    def __init__(self, cycle: list[int], cost: float):
        super().__init__(f"negative cycle of cost {cost:.3g} through arcs {cycle}")
        self.cycle = cycle
        self.cost = cost


# inverse
class InfeasibleConstraints(SolverError):
    pass


class InfeasibleStage2(SolverError):
    pass


class UnknownArcInConstraint(ValidationError):
    pass


# score
class WalkTooLong(ValidationError):
    pass


class InfeasibleWalk(ValidationError):
    pass


# detour
class NotAWalk(ValidationError):
    pass


class UnknownActivity(ValidationError):
    pass


class MissingArcForDetour(ValidationError):
    pass


class IdentityViolation(ConcordanceError):
    """Detour costs do not add up to the discordance of the walk."""

    exit_code = 3

    def __init__(self, residual: float, message: str = ""):
        super().__init__(message or f"detour decomposition residual {residual:.3e}")
        self.residual = residual


# cohort
class EmptyGroup(ValidationError):
    pass


class NoEvents(ValidationError):
    pass


# ingestion
class UnmappedActivity(ValidationError):
    def __init__(self, codes: list[str]):
        super().__init__("unmapped activity codes: " + ", ".join(sorted(codes)))
        self.codes = sorted(codes)
