"""Exception types shared across the package."""

from __future__ import annotations

__all__ = [
    "SwitchdensError",
    "ConfigError",
    "DegenerateModelError",
    "DiagnosticError",
    "NumericalError",
    "SeriesRadiusError",
    "UnsupportedCaseError",
    "ValidationFailure",
    "ExtrapolationWarning",
]


class SwitchdensError(Exception):
    """Base class for all package errors."""


class ConfigError(SwitchdensError):
    """Invalid configuration file or model description."""


class DegenerateModelError(SwitchdensError):
    """Model violates a structural assumption (zero field, vanishing linearization, ...)."""


class DiagnosticError(SwitchdensError):
    """A numerical safeguard detected a situation that must not pass silently."""


class NumericalError(SwitchdensError):
    """Numerical routine failed to reach its accuracy or stability target."""


class SeriesRadiusError(NumericalError):
    """Local series expansion has no usable validity radius."""


class UnsupportedCaseError(SwitchdensError):
    """Requested analysis is impossible for this configuration (not a bug)."""


class ValidationFailure(SwitchdensError):
    """Cross-route validation produced a failing check."""


class ExtrapolationWarning(UserWarning):
    """Evaluation requested outside a validated radius; result is extrapolated."""
