"""Error taxonomy shared by every backend, the registry, the harness and the CLI."""

from __future__ import annotations


class QrmiError(Exception):
    """Base class for every error raised by this package."""


class UnknownResource(QrmiError):
    """Resource id is not registered."""


class ResourceUnavailable(QrmiError):
    """Resource is registered but not accessible (maintenance, dead probe)."""


class AcquireTimeout(QrmiError):
    """Caller-supplied timeout elapsed while waiting for a slot."""


class PoolClosed(QrmiError):
    """Slot pool was shut down while the caller held or awaited a slot."""


class InvalidToken(QrmiError):
    """Token was not issued by this pool, or is forged/expired."""


class AlreadyReleased(QrmiError):
    """Token was valid once but has already been released or expired."""


class MalformedPayload(QrmiError):
    """Task payload failed format validation or circuit parsing."""


class UnknownTask(QrmiError):
    """Task id is not known to the backend."""


class TaskFailed(QrmiError):
    """Task reached the Failed state; carries the failure reason."""

    def __init__(self, reason: str = "") -> None:
        super().__init__(reason or "task failed")
        self.reason = reason


class TaskCancelled(QrmiError):
    """Task reached the Cancelled state before producing a result."""


class SecretMissing(QrmiError):
    """A secret named by the job or backend config is absent from the environment."""


class InvalidOption(QrmiError):
    """Unknown plugin option in the job spec."""


class TaskScriptError(QrmiError):
    """User task program exited non-zero."""

    def __init__(self, exit_status: int, detail: str = "") -> None:
        super().__init__(detail or f"task script exited {exit_status}")
        self.exit_status = exit_status


class AuthFailed(QrmiError):
    """Bearer secret missing from the environment or rejected by the gateway (401)."""


class GatewayUnreachable(QrmiError):
    """Gateway did not answer within the retry budget."""


class BindFailed(QrmiError):
    """Mock gateway could not bind its listen port."""


class ParseError(QrmiError):
    """Config or scenario file is not syntactically valid JSON."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None) -> None:
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(QrmiError):
    """Config parsed but violates a registry rule; message names the first failing rule."""


class BackendInitFailed(QrmiError):
    """A registry entry's backend could not be instantiated; message names the entry id."""


class SpecError(QrmiError):
    """Cluster or job spec handed to the simulator is inconsistent."""
