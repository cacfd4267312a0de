"""Exception hierarchy shared by all lemica modules."""

from __future__ import annotations


class LemicaError(Exception):
    """Base class for every error raised by this package."""


class ContractViolation(LemicaError, ValueError):
    """An operation was called with arguments outside its precondition."""


class DegenerateReferenceError(LemicaError, ValueError):
    """The reference vector of a relative distance has (near) zero L1 norm."""


class BudgetInfeasibleError(LemicaError, ValueError):
    def __init__(self, budget: int, min_budget: int, max_budget: int) -> None:
        self.budget = budget
        self.min_budget = min_budget
        self.max_budget = max_budget
        super().__init__(
            f"budget B={budget} is infeasible; feasible budgets are "
            f"{min_budget} <= B <= {max_budget}"
        )


class OracleTooLargeError(LemicaError, RuntimeError):
    """The enumeration oracle would have to visit too many paths."""


class PathValidationError(LemicaError, ValueError):
    """Base class for schedule-path validation failures."""


class WrongEndpointsError(PathValidationError):
    pass


class NonMonotoneError(PathValidationError):
    pass


class WrongEdgeCountError(PathValidationError):
    pass


class MissingEdgeError(PathValidationError):
    pass
