"""Exception types shared across the package."""


class FedadmError(Exception):
    """Base class for all package errors."""


class ConfigError(FedadmError):
    """Invalid system configuration or malformed config file."""


class InvalidActionError(FedadmError):
    """An action was applied in a state where it is not legal."""


class InvalidStateError(FedadmError):
    """A state violates the occupancy or event-mark invariants."""


class TractabilityError(FedadmError):
    """The enumerated state space would exceed the configured ceiling."""


class IncompletePolicyError(FedadmError):
    """A policy does not cover every state it is asked to act in."""


class NonConvergenceError(FedadmError):
    """An iterative numerical procedure hit its cap before converging."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class LifecycleError(FedadmError):
    """Environment used out of order (e.g. step before reset)."""


class GapUndefinedError(FedadmError):
    """Optimality gap requested against a non-positive reference profit."""


class SweepCellError(FedadmError):
    """A sweep cell failed; carries the identity of the failing cell."""

    def __init__(self, cell: str, cause: BaseException):
        super().__init__(f"sweep cell {cell} failed: {cause!r}")
        self.cell = cell
        self.cause = cause
