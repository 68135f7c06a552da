from typing import Any, Dict, Optional

from pydantic import ValidationError as PydanticValidationError


class ErwLabError(Exception):
    """
    Base exception class for erwlab errors.

    Attributes
    ----------
    message : str
        The error message associated with the error.
    details : Dict[str, Any]
        Structured context (offending index, seed key, horizon, ...).

    Parameters
    ----------
    message : str
        The error message to be set for the exception.
    details : Optional[Dict[str, Any]]
        Context to attach to the error, by default None.
    """

    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.message = message
        self.details = self._normalize_details(details)

    def _normalize_details(
        self, details: Optional[Dict[str, Any]]
    ) -> Dict[str, Any]:
        """
        Turn the optional context into a plain dictionary.

        Parameters
        ----------
        details : Optional[Dict[str, Any]]
            The context passed by the raiser.

        Returns
        -------
        Dict[str, Any]
            The context, or an empty dictionary when none was given.
        """
        if details is None:
            return {}
        return dict(details)

    def __str__(self):
        if not self.details:
            return self.message
        return f"{self.message}: {self.details}"


class InvalidEnvironmentError(ErwLabError):
    def __init__(
        self,
        message: str = "Invalid cookie environment",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message=message, details=details)


class KernelValidationError(ErwLabError):
    def __init__(
        self,
        message: str = "Coupling kernel violates its preconditions",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message=message, details=details)


class CouplingPreconditionError(ErwLabError):
    def __init__(
        self,
        message: str = "Coupling does not satisfy the strict domination condition",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message=message, details=details)


class HorizonGuardError(ErwLabError):
    def __init__(
        self,
        message: str = "Horizon exceeds the enumeration guard",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message=message, details=details)


class MaterializationCapError(ErwLabError):
    def __init__(
        self,
        message: str = "Per-site cookie cap exceeded",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message=message, details=details)


class UnmaterializedCellError(ErwLabError):
    def __init__(
        self,
        message: str = "Arrow cell was never materialized",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message=message, details=details)


class DominationViolationError(ErwLabError, AssertionError):
    """Raised when a sampled (Y, Z) pair breaks prefix-sum domination.

    This is a kernel bug, not a data problem; library code never catches it.
    """

    exit_code = 2

    def __init__(
        self,
        message: str = "Prefix-sum domination violated",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message=message, details=details)


class InsufficientRegenerationsError(ErwLabError):
    exit_code = 3

    def __init__(
        self,
        message: str = "insufficient regenerations",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message=message, details=details)


class ValidationError(ErwLabError):
    def __init__(
        self, error: PydanticValidationError, message: str = "Validation error occurred"
    ) -> None:
        super().__init__(message=message)
        self.error = error

    def __str__(self):
        return f"{self.message}: {self.error}"
