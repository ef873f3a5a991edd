"""Exception hierarchy for polyattn."""

from typing import List, Optional


class PolyAttnError(Exception):
    """Base class for every error raised by polyattn."""


class SizeError(PolyAttnError, ValueError):
    """Shape mismatch, or a size guard was exceeded."""


class DomainError(PolyAttnError, ValueError):
    """An argument lies outside the domain of an operation (e.g. a real power of a non-positive base)."""


class ValidationError(PolyAttnError, ValueError):
    """A dataset constraint was violated.

    The message always names the violated constraint, e.g. ``b + c = 1``.
    """

    def __init__(self, constraint: str, detail: Optional[str] = None):
        self.constraint = constraint
        message = f"constraint violated: {constraint}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class ConfigError(PolyAttnError, ValueError):
    """A configuration or regime gate check failed.

    Attributes:
        failed: the inequalities (as text) that did not hold
    """

    def __init__(self, message: str, failed: Optional[List[str]] = None):
        self.failed = list(failed or [])
        if self.failed:
            message = f"{message}: " + "; ".join(self.failed)
        super().__init__(message)


class ResourceError(PolyAttnError):
    """Dense materialisation was requested beyond the allowed size."""
