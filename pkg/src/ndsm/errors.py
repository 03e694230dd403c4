"""Exception types raised across the package."""


class NDSMError(Exception):
    """Base class for every error raised by ndsm."""


class NonUniformShiftable(NDSMError):
    pass


class InfeasibleThreshold(NDSMError):
    pass


class InfeasibleCap(NDSMError):
    pass


class Infeasible(NDSMError):
    """The target LP has no feasible point (discomfort caps too tight for the PAR goal)."""


class IndexOutOfBounds(NDSMError):
    """An index update left the box [0, min(1, cap)]."""

    def __init__(self, message, period=None, consumer=None, value=None):
        super().__init__(message)
        self.period = period
        self.consumer = consumer
        self.value = value


class NotIC(NDSMError):
    pass


class InsufficientShiftable(NDSMError):
    pass


class ScenarioError(NDSMError):
    pass


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
