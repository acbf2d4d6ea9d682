"""Exception hierarchy shared across the package."""


class FocusError(Exception):
    """Base class for every error raised by vpfocus."""


class DomainError(FocusError, ValueError):
    """An input lies outside the domain of an operation."""


class SingularityError(FocusError, ArithmeticError):
    """A shell radius fell below the r_min guard during integration."""

    def __init__(self, message, shell=None, t=None):
        super().__init__(message)
        self.shell = shell
        self.t = t


class InfeasibleError(FocusError, ValueError):
    """Derived parameters violate a feasibility constraint."""

    def __init__(self, constraint, detail=""):
        super().__init__(f"infeasible parameters: {constraint}" + (f" ({detail})" if detail else ""))
        self.constraint = constraint


class SamplingError(FocusError, RuntimeError):
    """The initial-data sampler produced no shells."""


class NotFoundError(FocusError, LookupError):
    """A searched-for event (e.g. a turning point) is absent from the data."""


class BinningError(FocusError, ValueError):
    """A radial binning window does not cover every shell."""

    def __init__(self, message, escapees=()):
        super().__init__(message)
        self.escapees = tuple(escapees)
