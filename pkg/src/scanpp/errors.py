"""Exception types shared across the package."""


class ScanppError(Exception):
    pass


class ParseError(ScanppError):
    """Malformed input file. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(ScanppError):
    """Input violates a structural invariant (non-monotone onsets, bad box, ...)."""


class UsageError(ScanppError):
    """Caller misuse: unknown strategy, bad argument combination, bad flags."""


class DomainError(ScanppError):
    """Numerical input outside the mathematical domain of an operation."""
