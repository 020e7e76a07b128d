"""Exception types shared across the engine."""

from __future__ import annotations

from dataclasses import dataclass


class EngineError(Exception):
    """Base class for every error raised by the engine itself."""


@dataclass(frozen=True)
class Violation:
    """Machine-readable description of one invariant breach."""

    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class ParseError(EngineError):
    """Input file could not be parsed at all."""


class ValidationError(EngineError):
    """Parsed input violates one or more invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class TransportError(EngineError):
    """Network or HTTP failure talking to a model backend."""

    def __init__(self, message, backend="", retryable=True):
        self.backend = backend
        self.retryable = retryable
        super().__init__(f"{message} (backend: {backend})" if backend else message)


class AuthError(EngineError):
    """Backend rejected the credential."""

    def __init__(self, message, backend=""):
        self.backend = backend
        super().__init__(f"{message} (backend: {backend})" if backend else message)


class BackendTimeoutError(EngineError):
    """Backend did not answer within the configured request timeout."""

    def __init__(self, message, backend=""):
        self.backend = backend
        super().__init__(f"{message} (backend: {backend})" if backend else message)


class EmptyTraceError(EngineError):
    """A reflection prompt was requested without an error trace."""


class EmptyHistoryError(EngineError):
    """An optimization prompt was requested with no prior correct candidates."""


class IncorrectEntryError(EngineError):
    """Optimization history contained a candidate that failed its tests."""


class ExecutorUnavailableError(EngineError):
    """The execution backend (runner command) cannot be reached at all."""


class ProtocolError(EngineError):
    """Runner produced output that does not follow the wire protocol."""


class RunnerCrashError(EngineError):
    """Runner exited nonzero without emitting a report."""


class EmptyLogError(EngineError):
    """A metric was requested over a log with no attempt records."""


class DomainError(EngineError):
    """Arguments fall outside an estimator's domain."""


class MismatchedReplicasError(EngineError):
    """Replica logs do not describe the same benchmark sweep."""


class NotExecOkError(EngineError):
    """Speedup was requested for a report with failing tests."""
