"""In-process simulated quantum device with lanes and discrete-event timing.

Each lane is a serial run queue: a task becomes Running when the lane is
idle and Completed after shots * exec_time_per_shot of clock time. All
times come from the device's clock, so with a VirtualClock the whole
schedule is exact and tests advance time manually; with a WallClock tasks
finish as real milliseconds pass.

Schedules are materialized lazily: every public operation first folds clock
progress into task states, which keeps the device free of worker threads
while preserving legal state transitions for every observer.
"""

from __future__ import annotations

import json
import random
import threading
import uuid
from dataclasses import dataclass, field

from .circuits import BASIS_GATES, MAX_QUBITS, CircuitV1, parse_payload
from .clock import Clock, VirtualClock, WallClock, is_virtual
from .errors import (
    InvalidToken,
    MalformedPayload,
    ResourceUnavailable,
    TaskCancelled,
    TaskFailed,
    UnknownTask,
)
from .locking import EventLog, SlotPool
from .resource import QuantumResource
from .statevector import execute_circuit
from .types import AcquisitionToken, Target, TaskPayload, TaskResult, TaskStatus

TARGET_FORMAT = "device-constraints-v1"


@dataclass
class FaultInjection:
    """Admin knobs for failure testing; fail_task_prob draws happen at submit."""

    fail_task_prob: float = 0.0
    inaccessible: bool = False
    seed: int = 0


@dataclass
class DeviceSpec:
    num_qubits: int
    num_lanes: int = 1
    exec_time_per_shot: float = 0.001  # simulated ms per shot
    basis_gates: tuple[str, ...] = BASIS_GATES
    fault_injection: FaultInjection | None = None

    def validate(self) -> None:
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise ValueError(f"num_qubits must be 1..{MAX_QUBITS}")
        if self.num_lanes < 1:
            raise ValueError("num_lanes must be >= 1")
        if self.exec_time_per_shot <= 0:
            raise ValueError("exec_time_per_shot must be > 0")


@dataclass
class _Task:
    task_id: str
    payload: TaskPayload
    circuit: CircuitV1 | None
    token: str | None
    lane: int
    submitted_at: float
    start: float
    end: float
    duration: float
    state: TaskStatus = TaskStatus.QUEUED
    result: TaskResult | None = None
    failure: str | None = None
    will_fail: bool = False
    history: list[TaskStatus] = field(default_factory=list)


class PseudoQPU(QuantumResource):
    """Simulated device implementing the full QuantumResource contract."""

    backend_type = "simulated"

    def __init__(
        self,
        resource_id: str,
        spec: DeviceSpec,
        clock: Clock | None = None,
        maintenance: bool = False,
        lease_duration: float | None = None,
        log: EventLog | None = None,
    ) -> None:
        spec.validate()
        self.resource_id = resource_id
        self.spec = spec
        self.maintenance = maintenance
        self.clock: Clock = clock if clock is not None else WallClock()
        self.pool = SlotPool(
            resource_id, spec.num_lanes, self.clock, lease_duration=lease_duration, log=log
        )
        self._cond = threading.Condition()
        self._tasks: dict[str, _Task] = {}
        self._lanes: list[list[_Task]] = [[] for _ in range(spec.num_lanes)]
        self._token_tasks: dict[str, list[str]] = {}
        fault = spec.fault_injection
        self._fault_rng = random.Random(fault.seed if fault else 0)
        if is_virtual(self.clock):
            assert isinstance(self.clock, VirtualClock)
            self.clock.subscribe(self._on_clock_advance)

    # -- QuantumResource contract -------------------------------------------

    def is_accessible(self) -> bool:
        fault = self.spec.fault_injection
        return not self.maintenance and not (fault is not None and fault.inaccessible)

    def acquire(self, requester: str | None = None, timeout: float | None = None) -> AcquisitionToken:
        if not self.is_accessible():
            raise ResourceUnavailable(f"resource {self.resource_id} is not accessible")
        return self.pool.acquire(requester, timeout)

    def release(self, token: AcquisitionToken) -> None:
        self.pool.release(token)
        self._cancel_token_tasks(token.token)

    def task_start(self, token: AcquisitionToken, payload: TaskPayload) -> str:
        if not isinstance(token, AcquisitionToken) or token.resource != self.resource_id:
            raise InvalidToken(f"token does not belong to {self.resource_id}")
        if token.lease_expiry is not None:
            self.expire_leases()
        if not self.pool.is_active(token):
            raise InvalidToken(f"token for {self.resource_id} is released or expired")
        circuit = parse_payload(payload)
        return self._enqueue(token.slot, payload, circuit, token.token)

    def run_lane_task(self, lane: int, payload: TaskPayload) -> str:
        """Token-free submission path used by the vendor-side mock service."""
        if not 0 <= lane < self.spec.num_lanes:
            raise MalformedPayload(f"lane {lane} out of range for {self.spec.num_lanes} lanes")
        circuit = parse_payload(payload)
        return self._enqueue(lane, payload, circuit, None)

    def task_stop(self, task_id: str) -> None:
        with self._cond:
            now = self.clock.now()
            self._refresh(now)
            task = self._get(task_id)
            self._cancel(task, now)

    def task_status(self, task_id: str) -> TaskStatus:
        with self._cond:
            self._refresh(self.clock.now())
            return self._get(task_id).state

    def task_result(self, task_id: str) -> TaskResult:
        with self._cond:
            while True:
                now = self.clock.now()
                self._refresh(now)
                task = self._get(task_id)
                if task.state is TaskStatus.COMPLETED:
                    assert task.result is not None
                    return task.result
                if task.state is TaskStatus.FAILED:
                    raise TaskFailed(task.failure or "unknown failure")
                if task.state is TaskStatus.CANCELLED:
                    raise TaskCancelled(f"task {task_id} was cancelled")
                if is_virtual(self.clock):
                    self._cond.wait()
                else:
                    self._cond.wait(max(task.end - now, 0.0) / 1000.0)

    def target(self) -> Target:
        body = json.dumps(
            {
                "basis_gates": list(self.spec.basis_gates),
                "coupling": "all-to-all",
                "num_qubits": self.spec.num_qubits,
            },
            sort_keys=True,
            separators=(",", ":"),
        ).encode("utf-8")
        return Target(resource=self.resource_id, format=TARGET_FORMAT, body=body, version=1)

    def metadata(self) -> dict[str, str]:
        return {
            "backend_type": self.backend_type,
            "num_lanes": str(self.spec.num_lanes),
            "num_qubits": str(self.spec.num_qubits),
            "basis_gates": ",".join(self.spec.basis_gates),
            "exec_time_per_shot_ms": repr(self.spec.exec_time_per_shot),
        }

    # -- scheduling helpers --------------------------------------------------

    def eta(self, task_id: str) -> float | None:
        """Scheduled completion time of a non-terminal task; None once terminal."""
        with self._cond:
            self._refresh(self.clock.now())
            task = self._get(task_id)
            return None if task.state.is_terminal else task.end

    def expire_leases(self, now: float | None = None) -> list[AcquisitionToken]:
        expired = self.pool.expire_leases(now)
        for token in expired:
            self._cancel_token_tasks(token.token)
        return expired

    def least_loaded_lane(self) -> int:
        """Lane that would start a new task earliest; lowest index wins ties."""
        with self._cond:
            now = self.clock.now()
            self._refresh(now)
            avail = [(lane[-1].end if lane else now, i) for i, lane in enumerate(self._lanes)]
            return min(avail)[1]

    def running_tasks(self) -> list[str]:
        with self._cond:
            self._refresh(self.clock.now())
            return [t.task_id for t in self._tasks.values() if t.state is TaskStatus.RUNNING]

    def status_history(self, task_id: str) -> list[TaskStatus]:
        with self._cond:
            self._refresh(self.clock.now())
            return list(self._get(task_id).history)

    def failure_reason(self, task_id: str) -> str | None:
        with self._cond:
            self._refresh(self.clock.now())
            return self._get(task_id).failure

    def close(self) -> None:
        self.pool.close()
        with self._cond:
            self._cond.notify_all()

    # -- internals -----------------------------------------------------------

    def _get(self, task_id: str) -> _Task:
        task = self._tasks.get(task_id)
        if task is None:
            raise UnknownTask(f"no task {task_id!r} on {self.resource_id}")
        return task

    def _enqueue(self, lane: int, payload: TaskPayload, circuit: CircuitV1 | None, token: str | None) -> str:
        with self._cond:
            now = self.clock.now()
            self._refresh(now)
            queue = self._lanes[lane]
            start = queue[-1].end if queue else now
            duration = payload.shots * self.spec.exec_time_per_shot
            fault = self.spec.fault_injection
            will_fail = fault is not None and self._fault_rng.random() < fault.fail_task_prob
            task = _Task(
                task_id=str(uuid.uuid4()),
                payload=payload,
                circuit=circuit,
                token=token,
                lane=lane,
                submitted_at=now,
                start=start,
                end=start + duration,
                duration=duration,
                will_fail=will_fail,
            )
            task.history.append(TaskStatus.QUEUED)
            queue.append(task)
            self._tasks[task.task_id] = task
            if token is not None:
                self._token_tasks.setdefault(token, []).append(task.task_id)
            self._refresh(now)
            self._cond.notify_all()
            return task.task_id

    def _refresh(self, now: float) -> None:
        # Fold elapsed clock time into task states; only lane heads can run.
        for queue in self._lanes:
            while queue:
                task = queue[0]
                if task.state is TaskStatus.QUEUED and task.start <= now:
                    self._transition(task, TaskStatus.RUNNING)
                if task.state is TaskStatus.RUNNING and task.end <= now:
                    self._finalize(task)
                    queue.pop(0)
                    continue
                break

    def _finalize(self, task: _Task) -> None:
        if task.will_fail:
            task.failure = "injected"
            self._transition(task, TaskStatus.FAILED)
            return
        counts = None
        raw = None
        if task.circuit is not None:
            counts = execute_circuit(task.circuit)
        else:
            raw = task.payload.body
        task.result = TaskResult(
            task=task.task_id, counts=counts, raw=raw, completed_at=task.end
        )
        self._transition(task, TaskStatus.COMPLETED)

    def _transition(self, task: _Task, state: TaskStatus) -> None:
        task.state = state
        task.history.append(state)

    def _cancel(self, task: _Task, now: float) -> None:
        if task.state.is_terminal:
            return  # idempotent teardown
        queue = self._lanes[task.lane]
        was_running = task.state is TaskStatus.RUNNING
        if task in queue:
            queue.remove(task)
        if was_running:
            task.end = now
        self._transition(task, TaskStatus.CANCELLED)
        self._reschedule(task.lane, now)
        self._cond.notify_all()

    def _reschedule(self, lane: int, now: float) -> None:
        # Pull queued tasks forward after a cancellation freed lane time.
        prev_end = now
        for task in self._lanes[lane]:
            if task.state is TaskStatus.RUNNING:
                prev_end = task.end
                continue
            task.start = max(prev_end, task.submitted_at)
            task.end = task.start + task.duration
            prev_end = task.end
        self._refresh(now)

    def _cancel_token_tasks(self, token: str) -> None:
        with self._cond:
            now = self.clock.now()
            self._refresh(now)
            for task_id in self._token_tasks.pop(token, []):
                task = self._tasks[task_id]
                self._cancel(task, now)

    def _on_clock_advance(self, now: float) -> None:
        with self._cond:
            self._refresh(now)
            self._cond.notify_all()
