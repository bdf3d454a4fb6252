"""Exception types shared across the package.

Each class maps onto one failure family so the command-line front end can
translate it into a stable exit code.
"""


class ContractViolation(ValueError):
    """A caller broke a documented precondition (shape, index, length...)."""


class DomainError(ArithmeticError):
    """A numerical quantity left the domain where it is defined.

    Typical causes are the logarithm of a non-positive eigenvalue or a
    target state that is not positive definite.
    """


class SingularMetricError(DomainError):
    """The regularized information matrix is too ill-conditioned to solve."""

    def __init__(self, message: str, cond: float):
        super().__init__(message)
        self.cond = cond


class DegenerateModelError(DomainError):
    """The model has no weight to sample from, e.g. an all-zero theta."""


class CapabilityError(RuntimeError):
    """The requested estimator needs a resource that is unavailable."""
