from typing import Any, Dict, Optional


class TVOBanditError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(TVOBanditError, ValueError):
    """Raised when an operation receives an argument outside its domain."""


class DomainError(InvalidArgumentError):
    """Raised when a closed-form expression is evaluated outside its domain."""


class BoundaryError(InvalidArgumentError):
    """Raised when a derivative is requested at a point where it is unbounded."""


class CapacityError(TVOBanditError):
    """Raised when an exact enumeration or joint draw would be too large."""


class ConfigError(TVOBanditError):
    """Raised when an experiment configuration fails validation."""

    def __init__(self, message: str, errors: Optional[list] = None):
        super().__init__(message)
        self.errors = errors or []


class NumericError(TVOBanditError, ArithmeticError):
    """Raised when a numeric routine fails; ``diagnostics`` says how."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({details})"
