"""The QuantumResource contract every backend implements.

Nine operations control one quantum device: an accessibility probe, blocking
slot acquisition and release, task start/stop/status/result, and the static
target/metadata descriptions. Implementations must be safe to call from
multiple threads; only acquire (and task_result on a non-terminal task) may
block, and they block no one but their caller.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

from .types import AcquisitionToken, Target, TaskPayload, TaskResult, TaskStatus


class QuantumResource(ABC):
    """One scheduler-visible quantum resource: a physical device plus lanes."""

    resource_id: str

    @abstractmethod
    def is_accessible(self) -> bool:
        """Liveness probe. Never raises for a registered resource."""

    @abstractmethod
    def acquire(self, requester: str | None = None, timeout: float | None = None) -> AcquisitionToken:
        """Acquire one lane slot.

        Returns immediately when a slot is free, otherwise blocks until one
        is released, granting strictly in arrival order. Raises
        AcquireTimeout if `timeout` (ms) elapses, ResourceUnavailable if the
        device is not accessible at acquisition time.
        """

    @abstractmethod
    def release(self, token: AcquisitionToken) -> None:
        """Release a held slot and wake the longest-waiting acquirer.

        Tasks still in flight under this token are cancelled. Raises
        InvalidToken for forged tokens, AlreadyReleased on double release.
        """

    @abstractmethod
    def task_start(self, token: AcquisitionToken, payload: TaskPayload) -> str:
        """Queue a task on the token's lane and return its id (non-blocking)."""

    @abstractmethod
    def task_stop(self, task_id: str) -> None:
        """Cancel a queued or running task; no-op success on terminal tasks."""

    @abstractmethod
    def task_status(self, task_id: str) -> TaskStatus:
        """Current lifecycle state of the task."""

    @abstractmethod
    def task_result(self, task_id: str) -> TaskResult:
        """Result of the task, blocking until it is terminal.

        Raises TaskFailed with the failure reason, or TaskCancelled.
        """

    @abstractmethod
    def target(self) -> Target:
        """Serialized device constraints; stable bytes until config changes."""

    @abstractmethod
    def metadata(self) -> dict[str, str]:
        """Device/system facts; contains at least backend_type and num_lanes."""
