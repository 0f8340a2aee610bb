"""Exception hierarchy shared by every module.

Validation-type errors (bad input, bad configuration) map to CLI exit code 1;
everything else deriving from :class:`FdiError` maps to exit code 2.
"""


class FdiError(Exception):
    """Base class for all library errors."""


class ValidationError(FdiError, ValueError):
    """Input failed a structural or semantic check."""


class CaseParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CaseValidationError(ValidationError):
    pass


class ContractError(ValidationError):
    """A precondition of an operation was violated (shape, range, sign)."""


class ConfigError(ValidationError):
    pass


class ObservabilityError(FdiError):
    """The measurement matrix lost full column rank."""


class ConvergenceError(FdiError):
    """A solver stopped before reaching its tolerance.

    The partial result is kept on ``decomposition`` so callers can inspect it.
    """

    def __init__(self, message, decomposition=None):
        super().__init__(message)
        self.decomposition = decomposition
