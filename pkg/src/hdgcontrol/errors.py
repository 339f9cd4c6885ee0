class HDGControlError(Exception):
    """Base class for package errors."""


class ConfigurationError(HDGControlError, ValueError):
    """Invalid parameters or configuration values."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class AssumptionViolation(HDGControlError):
    """Problem data breaks a structural assumption of the discretization."""

    def __init__(self, message: str, assumption: str, value: float):
        super().__init__(message)
        self.assumption = assumption
        self.value = value


class SolverError(HDGControlError):
    """Linear solve failed."""


class SingularMatrixError(SolverError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row
