"""Exception types raised across the simulator."""


class CoexSimError(Exception):
    pass


class SchedulingInPast(CoexSimError):
    pass


class AnchorConflict(CoexSimError):
    pass


class EmptyWindow(CoexSimError):
    pass


class PayloadTooLarge(CoexSimError):
    pass


class RateInfeasible(CoexSimError):
    pass


class EmptyAudit(CoexSimError):
    pass


class UncoveredInterval(CoexSimError):
    pass


class InvalidInterval(CoexSimError):
    pass


class IllegalTransition(CoexSimError):
    pass


class UnsupportedPhy(CoexSimError):
    pass


class OutOfRange(CoexSimError):
    pass


class DegenerateFit(CoexSimError):
    pass


class Infeasible(CoexSimError):
    def __init__(self, message: str, nearest_feasible: tuple[float, float]):
        super().__init__(message)
        self.nearest_feasible = nearest_feasible


class ParseError(CoexSimError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        super().__init__(message)
        self.line = line
        self.field = field


class SchemaViolation(CoexSimError):
    def __init__(self, message: str, field: str | None = None, constraint: str | None = None):
        super().__init__(message)
        self.field = field
        self.constraint = constraint
