"""
Shared infrastructure: structured logging, the error hierarchy and run
configuration.
"""

from .structured_logger import structured_logger, configure_logging, StructuredLogger
from .error_handler import (
    ErrorSeverity, BSCError, ValidationError, RuntimeFailure, ShapeError,
    ContractError, DegenerateInputError, EmptyBatchError, AllMaskedError,
    DomainError, DatasetFormatError, ConfigValidationError, CheckpointError,
    DivergenceError, SeedSearchError, ErrorClassifier
)

__all__ = [
    'structured_logger',
    'configure_logging',
    'StructuredLogger',
    'ErrorSeverity',
    'BSCError',
    'ValidationError',
    'RuntimeFailure',
    'ShapeError',
    'ContractError',
    'DegenerateInputError',
    'EmptyBatchError',
    'AllMaskedError',
    'DomainError',
    'DatasetFormatError',
    'ConfigValidationError',
    'CheckpointError',
    'DivergenceError',
    'SeedSearchError',
    'ErrorClassifier'
]
