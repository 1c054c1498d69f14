"""
Error hierarchy and classification.

Every failure raised by the library derives from one of two roots:
``ValidationError`` for bad inputs, shapes, configs and files (CLI exit 1)
and ``RuntimeFailure`` for failures during computation (CLI exit 2).
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple


class ErrorSeverity(Enum):
    """Error severity levels."""
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


class BSCError(Exception):
    """Base class for all library errors."""

    exit_code = 2

    def __init__(self, message: str, severity: ErrorSeverity = ErrorSeverity.HIGH):
        super().__init__(message)
        self.severity = severity


class ValidationError(BSCError):
    """Input, shape, contract, configuration or file errors."""

    exit_code = 1

    def __init__(self, message: str, severity: ErrorSeverity = ErrorSeverity.MEDIUM):
        super().__init__(message, severity)


class RuntimeFailure(BSCError):
    """Failures that happen while computing."""

    exit_code = 2


class ShapeError(ValidationError):
    """Matrix or vector dimensions do not conform."""


class ContractError(ValidationError):
    """A precondition of an operation is violated."""


class DegenerateInputError(ValidationError):
    """Input is well-shaped but mathematically degenerate (e.g. a zero row under L2)."""


class EmptyBatchError(ValidationError):
    """A loss was asked to evaluate a batch with no rows."""


class AllMaskedError(ValidationError):
    """A masked loss has no row with a label above the threshold."""


class DomainError(ValidationError):
    """A function was evaluated outside its domain (empty input, constant ranks)."""


class DatasetFormatError(ValidationError):
    """A dataset file is malformed; carries the offending line number."""

    def __init__(self, message: str, line_number: Optional[int] = None, path: Optional[str] = None):
        location = ""
        if path is not None:
            location = f"{path}"
        if line_number is not None:
            location = f"{location}:{line_number}" if location else f"line {line_number}"
        super().__init__(f"{location}: {message}" if location else message)
        self.line_number = line_number
        self.path = path


class ConfigValidationError(ValidationError):
    """A run configuration failed schema validation; carries the offending keys."""

    def __init__(self, message: str, keys: Optional[Sequence[str]] = None):
        super().__init__(message)
        self.keys: List[str] = list(keys or [])


class CheckpointError(ValidationError):
    """A checkpoint is missing, corrupt, or does not match the expected shapes."""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(f"{message} ({path})" if path else message)
        self.path = path


class DivergenceError(RuntimeFailure):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message: str, step_index: Optional[int] = None):
        suffix = f" at step {step_index}" if step_index is not None else ""
        super().__init__(f"{message}{suffix}", ErrorSeverity.CRITICAL)
        self.step_index = step_index


class SeedSearchError(RuntimeFailure):
    """Every seed of a seed search failed."""

    def __init__(self, failures: Dict[int, BaseException]):
        details = "; ".join(f"seed {seed}: {err}" for seed, err in sorted(failures.items()))
        super().__init__(f"All {len(failures)} seeds failed: {details}", ErrorSeverity.CRITICAL)
        self.failures = failures


class ErrorClassifier:
    """
    Classifies errors into CLI exit codes and severities.

    Library errors carry their own exit code; errors from the Python runtime
    that indicate bad input (missing files, bad values) are treated as
    validation failures, everything else as a runtime failure.
    """

    VALIDATION_EXCEPTIONS: Tuple[type, ...] = (FileNotFoundError, IsADirectoryError, ValueError, KeyError)

    @classmethod
    def classify_exception(cls, exception: BaseException) -> Tuple[int, ErrorSeverity]:
        """
        Classify an exception.

        Args:
            exception: Exception to classify

        Returns:
            Tuple of (exit_code, severity)
        """
        if isinstance(exception, BSCError):
            return exception.exit_code, exception.severity

        if isinstance(exception, cls.VALIDATION_EXCEPTIONS):
            return ValidationError.exit_code, ErrorSeverity.MEDIUM

        return RuntimeFailure.exit_code, ErrorSeverity.CRITICAL

    @classmethod
    def exit_code_for(cls, exception: BaseException) -> int:
        """Exit code for an exception."""
        return cls.classify_exception(exception)[0]

    @classmethod
    def describe(cls, exception: BaseException) -> Dict[str, Any]:
        """Structured description suitable for a log record."""
        exit_code, severity = cls.classify_exception(exception)
        return {
            "error_type": type(exception).__name__,
            "error_message": str(exception),
            "exit_code": exit_code,
            "severity": severity.value,
        }
