"""
Structured logging with run correlation IDs and per-operation metrics.

Training, shuffling and evaluation log through ``structured_logger``. Each
seed of a seed search and each CLI command runs under its own correlation
ID; records that name an ``operation`` are tallied so a run can report how
often each step ran, failed and how long it took.
"""

import json
import sys
import threading
import time
import uuid
from collections import Counter, defaultdict
from contextlib import contextmanager
from datetime import datetime
from typing import Any, Dict, Iterator, Optional

from loguru import logger


class CorrelationContext:
    """Thread-local holder of the active correlation ID."""

    def __init__(self):
        self._local = threading.local()

    def set_correlation_id(self, correlation_id: Optional[str]) -> None:
        self._local.correlation_id = correlation_id

    def get_correlation_id(self) -> Optional[str]:
        return getattr(self._local, 'correlation_id', None)


def _new_operation_stats() -> Dict[str, Any]:
    return {
        'count': 0,
        'success_count': 0,
        'error_count': 0,
        'total_duration_ms': 0.0,
        'min_duration_ms': float('inf'),
        'max_duration_ms': 0.0,
        'error_types': Counter(),
    }


class MetricsCollector:
    """Counts, outcomes and durations per named operation."""

    def __init__(self):
        self._lock = threading.Lock()
        self._operations: Dict[str, Dict[str, Any]] = defaultdict(_new_operation_stats)
        self._error_counts: Counter = Counter()

    def record_operation(self,
                         operation: str,
                         duration_ms: Optional[float] = None,
                         status: str = "unknown",
                         error_type: Optional[str] = None) -> None:
        with self._lock:
            stats = self._operations[operation]
            stats['count'] += 1
            if status == 'success':
                stats['success_count'] += 1
            elif status == 'error':
                stats['error_count'] += 1
                if error_type:
                    stats['error_types'][error_type] += 1
            if duration_ms is not None:
                stats['total_duration_ms'] += duration_ms
                stats['min_duration_ms'] = min(stats['min_duration_ms'], duration_ms)
                stats['max_duration_ms'] = max(stats['max_duration_ms'], duration_ms)

    def record_error(self, error_type: str) -> None:
        with self._lock:
            self._error_counts[error_type] += 1

    def get_metrics(self) -> Dict[str, Any]:
        """Snapshot of the collected metrics as plain JSON-serializable data."""
        with self._lock:
            operations = {}
            for name, stats in self._operations.items():
                snapshot = dict(stats)
                snapshot['error_types'] = dict(stats['error_types'])
                if snapshot['min_duration_ms'] == float('inf'):
                    snapshot['min_duration_ms'] = 0.0
                snapshot['avg_duration_ms'] = snapshot['total_duration_ms'] / snapshot['count']
                operations[name] = snapshot
            return {
                'operations': operations,
                'error_counts': dict(self._error_counts),
                'timestamp': datetime.now().isoformat(),
            }


class OperationTimer:
    """Times a block and records it as one success or error of ``operation``."""

    def __init__(self, collector: MetricsCollector, operation: str):
        self.collector = collector
        self.operation = operation
        self.duration_ms: Optional[float] = None
        self._start = 0.0

    def __enter__(self) -> "OperationTimer":
        self._start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        self.duration_ms = (time.perf_counter() - self._start) * 1000
        self.collector.record_operation(
            self.operation,
            self.duration_ms,
            "error" if exc_type else "success",
            exc_type.__name__ if exc_type else None,
        )


class StructuredLogger:
    """
    loguru front end that stamps records with the correlation ID.

    Keyword arguments of a log call become bound fields of the record; an
    ``operation`` field also feeds the metrics collector.
    """

    def __init__(self, logger_name: str = "bsc_contrastive"):
        self.logger_name = logger_name
        self.correlation_context = CorrelationContext()
        self.metrics_collector = MetricsCollector()

    def configure(self, level: str = "INFO", json_output: bool = False, sink: Any = None) -> None:
        """
        Replace every loguru sink with one sink.

        Args:
            level: Minimum level to emit
            json_output: One JSON object per record instead of text lines
            sink: Stream to write to; stderr by default, stdout carries results
        """
        logger.remove()
        target = sink if sink is not None else sys.stderr
        if json_output:
            logger.add(lambda msg: target.write(self._format_log_record(msg.record)), format="{message}", level=level)
        else:
            logger.add(target, format="{time:HH:mm:ss} | {level: <7} | {message} | {extra}", level=level)

    def _format_log_record(self, record) -> str:
        entry = {
            'timestamp': record['time'].isoformat(),
            'level': record['level'].name,
            'logger': self.logger_name,
            'message': record['message'],
            'correlation_id': self.correlation_context.get_correlation_id(),
            'module': record.get('name'),
            'function': record.get('function'),
            'line': record.get('line'),
        }
        entry.update(record.get("extra", {}))
        return json.dumps({k: v for k, v in entry.items() if v is not None}, default=str) + '\n'

    def set_correlation_id(self, correlation_id: Optional[str] = None) -> str:
        """Activate ``correlation_id`` (a fresh UUID when None) and return it."""
        active = correlation_id if correlation_id is not None else str(uuid.uuid4())
        self.correlation_context.set_correlation_id(active)
        return active

    def get_correlation_id(self) -> Optional[str]:
        return self.correlation_context.get_correlation_id()

    @contextmanager
    def correlation_scope(self, correlation_id: Optional[str] = None) -> Iterator[str]:
        """Run a block under its own correlation ID; the previous one (or none) comes back after."""
        previous = self.get_correlation_id()
        active = self.set_correlation_id(correlation_id)
        try:
            yield active
        finally:
            self.correlation_context.set_correlation_id(previous)

    def _log_with_structure(self, level: str, message: str, **kwargs) -> None:
        if 'operation' in kwargs:
            self.metrics_collector.record_operation(
                kwargs['operation'],
                kwargs.get('duration_ms'),
                kwargs.get('status', 'unknown'),
                kwargs.get('error_type'),
            )
        if level == 'ERROR' and 'error_type' in kwargs:
            self.metrics_collector.record_error(kwargs['error_type'])

        correlation_id = self.get_correlation_id()
        if correlation_id:
            kwargs['correlation_id'] = correlation_id
        logger.bind(**kwargs).log(level, message)

    def debug(self, message: str, **kwargs) -> None:
        self._log_with_structure('DEBUG', message, **kwargs)

    def info(self, message: str, **kwargs) -> None:
        self._log_with_structure('INFO', message, **kwargs)

    def warning(self, message: str, **kwargs) -> None:
        self._log_with_structure('WARNING', message, **kwargs)

    def error(self, message: str, **kwargs) -> None:
        self._log_with_structure('ERROR', message, **kwargs)

    @contextmanager
    def time_operation(self, operation: str) -> Iterator[OperationTimer]:
        """Time a block as one run of ``operation``."""
        with OperationTimer(self.metrics_collector, operation) as timer:
            yield timer

    def get_metrics(self) -> Dict[str, Any]:
        return self.metrics_collector.get_metrics()


structured_logger = StructuredLogger()


def configure_logging(level: str = "INFO", json_output: bool = False, sink: Any = None) -> None:
    """Configure the process-wide structured logger."""
    structured_logger.configure(level=level, json_output=json_output, sink=sink)
