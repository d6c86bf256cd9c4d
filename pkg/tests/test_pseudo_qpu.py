from __future__ import annotations

import threading
import time

import pytest

from qrmi.circuits import bell_circuit, circuit_payload, opaque_payload
from qrmi.clock import VirtualClock, WallClock
from qrmi.errors import (
    InvalidToken,
    MalformedPayload,
    ResourceUnavailable,
    TaskCancelled,
    TaskFailed,
    UnknownTask,
)
from qrmi.pseudo_qpu import DeviceSpec, FaultInjection, PseudoQPU
from qrmi.types import TaskStatus

import oracles


def make_device(lanes: int = 1, per_shot: float = 1.0, **kwargs):
    clock = VirtualClock()
    spec = DeviceSpec(num_qubits=5, num_lanes=lanes, exec_time_per_shot=per_shot,
                      fault_injection=kwargs.pop("fault", None))
    return clock, PseudoQPU("qpu0", spec, clock, **kwargs)


def bell_payload(shots=10, seed=42):
    return circuit_payload(bell_circuit(shots=shots, seed=seed))


class TestAccessibility:
    def test_healthy_device(self):
        _, device = make_device()
        assert device.is_accessible() is True

    def test_maintenance_flag(self):
        _, device = make_device(maintenance=True)
        assert device.is_accessible() is False
        with pytest.raises(ResourceUnavailable):
            device.acquire()

    def test_fault_injected_inaccessible(self):
        _, device = make_device(fault=FaultInjection(inaccessible=True))
        assert device.is_accessible() is False


class TestTaskLifecycle:
    def test_start_returns_id_and_runs_immediately_on_idle_lane(self):
        _, device = make_device()
        token = device.acquire("A")
        task_id = device.task_start(token, bell_payload())
        assert task_id
        assert device.task_status(task_id) in (TaskStatus.QUEUED, TaskStatus.RUNNING)

    def test_completion_at_exact_simulated_time(self):
        """Discrete-event oracle: end == start + shots * exec_time_per_shot."""
        clock, device = make_device(per_shot=2.0)
        token = device.acquire("A")
        task_id = device.task_start(token, bell_payload(shots=10))
        assert device.eta(task_id) == 20.0
        clock.advance_to(19.999)
        assert device.task_status(task_id) is TaskStatus.RUNNING
        clock.advance_to(20.0)
        assert device.task_status(task_id) is TaskStatus.COMPLETED
        assert device.task_result(task_id).completed_at == 20.0

    def test_released_token_rejected(self):
        _, device = make_device()
        token = device.acquire("A")
        device.release(token)
        with pytest.raises(InvalidToken):
            device.task_start(token, bell_payload())

    def test_foreign_token_rejected(self):
        _, device = make_device()
        _, other = make_device()
        other.resource_id = "qpu9"
        other_token = other.pool.acquire("A")
        device.acquire("A")
        with pytest.raises(InvalidToken):
            device.task_start(other_token, bell_payload())

    def test_bad_grammar_rejected(self):
        _, device = make_device()
        token = device.acquire("A")
        payload = bell_payload()
        payload.body = b"qubits 2\ncx 1 1\nmeasure_all\n"
        with pytest.raises(MalformedPayload):
            device.task_start(token, payload)

    def test_stop_running_task(self):
        clock, device = make_device()
        token = device.acquire("A")
        task_id = device.task_start(token, bell_payload(shots=10))
        clock.advance_to(5.0)
        device.task_stop(task_id)
        assert device.task_status(task_id) is TaskStatus.CANCELLED
        with pytest.raises(TaskCancelled):
            device.task_result(task_id)

    def test_stop_completed_task_is_noop(self):
        clock, device = make_device()
        token = device.acquire("A")
        task_id = device.task_start(token, bell_payload(shots=1))
        clock.advance_to(10.0)
        assert device.task_status(task_id) is TaskStatus.COMPLETED
        device.task_stop(task_id)  # no-op, no raise
        assert device.task_status(task_id) is TaskStatus.COMPLETED

    def test_unknown_task(self):
        _, device = make_device()
        for call in (device.task_stop, device.task_status, device.task_result, device.eta):
            with pytest.raises(UnknownTask):
                call("no-such-task")

    def test_bell_result_counts(self):
        clock, device = make_device()
        token = device.acquire("A")
        task_id = device.task_start(token, bell_payload(shots=1000))
        clock.advance_to(1000.0)
        result = device.task_result(task_id)
        assert set(result.counts) <= {"00", "11"}
        assert sum(result.counts.values()) == 1000

    def test_injected_fault_fails_task(self):
        clock, device = make_device(fault=FaultInjection(fail_task_prob=1.0))
        token = device.acquire("A")
        task_id = device.task_start(token, bell_payload(shots=5))
        clock.advance_to(5.0)
        assert device.task_status(task_id) is TaskStatus.FAILED
        with pytest.raises(TaskFailed) as err:
            device.task_result(task_id)
        assert err.value.reason == "injected"

    def test_opaque_payload_echoes_body(self):
        clock, device = make_device()
        token = device.acquire("A")
        task_id = device.task_start(token, opaque_payload(b"blob", shots=2))
        clock.advance_to(2.0)
        result = device.task_result(task_id)
        assert result.raw == b"blob"
        assert result.counts is None

    def test_exact_status_history_paths(self):
        clock, device = make_device()
        token = device.acquire("A")
        done = device.task_start(token, bell_payload(shots=1))
        cancelled_early = device.task_start(token, bell_payload(shots=1))
        device.task_stop(cancelled_early)
        clock.advance_to(50.0)
        oracles.assert_exact_path([s.value for s in device.status_history(done)])
        oracles.assert_exact_path([s.value for s in device.status_history(cancelled_early)])
        assert device.status_history(done)[-1] is TaskStatus.COMPLETED
        assert device.status_history(cancelled_early)[-1] is TaskStatus.CANCELLED


class TestLanes:
    def test_serial_lane_second_waits_for_first(self):
        clock, device = make_device()
        token = device.acquire("A")
        first = device.task_start(token, bell_payload(shots=10))
        second = device.task_start(token, bell_payload(shots=10))
        assert device.task_status(first) is TaskStatus.RUNNING
        assert device.task_status(second) is TaskStatus.QUEUED
        clock.advance_to(10.0)
        assert device.task_status(first) is TaskStatus.COMPLETED
        assert device.task_status(second) is TaskStatus.RUNNING
        assert device.eta(second) == 20.0

    def test_two_lanes_run_concurrently(self):
        clock, device = make_device(lanes=2)
        a = device.acquire("A")
        b = device.acquire("B")
        first = device.task_start(a, bell_payload(shots=10))
        second = device.task_start(b, bell_payload(shots=10))
        clock.advance_to(5.0)
        assert device.task_status(first) is TaskStatus.RUNNING
        assert device.task_status(second) is TaskStatus.RUNNING
        assert len(device.running_tasks()) == 2

    def test_running_never_exceeds_lane_count(self):
        clock, device = make_device(lanes=2)
        tokens = [device.acquire(f"t{i}") for i in range(2)]
        for i in range(6):
            device.task_start(tokens[i % 2], bell_payload(shots=3))
        seen = 0
        for t in range(0, 20):
            clock.advance_to(float(t))
            seen = max(seen, len(device.running_tasks()))
        assert seen == 2

    def test_cancel_pulls_queued_task_forward(self):
        clock, device = make_device()
        token = device.acquire("A")
        first = device.task_start(token, bell_payload(shots=10))
        second = device.task_start(token, bell_payload(shots=10))
        clock.advance_to(4.0)
        device.task_stop(first)
        assert device.task_status(second) is TaskStatus.RUNNING
        assert device.eta(second) == 14.0

    def test_token_slot_is_the_lane(self):
        clock, device = make_device(lanes=2)
        a = device.acquire("A")
        b = device.acquire("B")
        only_b = device.task_start(b, bell_payload(shots=4))
        # Lane 0 (token a) stays idle; lane 1 runs the task.
        assert device.least_loaded_lane() == 0
        clock.advance_to(4.0)
        assert device.task_status(only_b) is TaskStatus.COMPLETED


class TestReleaseInteraction:
    def test_release_cancels_in_flight_tasks(self):
        clock, device = make_device()
        token = device.acquire("A")
        running = device.task_start(token, bell_payload(shots=10))
        queued = device.task_start(token, bell_payload(shots=10))
        device.release(token)
        assert device.task_status(running) is TaskStatus.CANCELLED
        assert device.task_status(queued) is TaskStatus.CANCELLED
        assert device.pool.free_count() == 1

    def test_release_leaves_terminal_tasks_alone(self):
        clock, device = make_device()
        token = device.acquire("A")
        task_id = device.task_start(token, bell_payload(shots=1))
        clock.advance_to(1.0)
        device.release(token)
        assert device.task_status(task_id) is TaskStatus.COMPLETED

    def test_lease_expiry_cancels_tasks(self):
        clock = VirtualClock()
        spec = DeviceSpec(num_qubits=3, num_lanes=1, exec_time_per_shot=1.0)
        device = PseudoQPU("qpu0", spec, clock, lease_duration=5.0)
        token = device.acquire("A")
        task_id = device.task_start(token, bell_payload(shots=100))
        clock.advance_to(6.0)
        expired = device.expire_leases()
        assert [t.token for t in expired] == [token.token]
        assert device.task_status(task_id) is TaskStatus.CANCELLED

    def test_expired_lease_token_rejected_for_new_tasks(self):
        clock = VirtualClock()
        spec = DeviceSpec(num_qubits=3, num_lanes=1, exec_time_per_shot=1.0)
        device = PseudoQPU("qpu0", spec, clock, lease_duration=5.0)
        token = device.acquire("A")
        clock.advance_to(10.0)
        with pytest.raises(InvalidToken):
            device.task_start(token, bell_payload())


class TestTokenGatedExecution:
    def test_every_start_is_under_an_unreleased_grant(self):
        """Join device submissions against the lock log."""
        clock, device = make_device(lanes=2)
        submissions: list[tuple[str, float]] = []  # (token, ts)
        for round_ in range(3):
            token = device.acquire(f"r{round_}")
            device.task_start(token, bell_payload(shots=1))
            submissions.append((token.token, clock.now()))
            clock.advance(2.0)
            device.release(token)
        events = device.pool.log.events()
        for token_string, ts in submissions:
            granted = [e for e in events if e.token == token_string and e.kind.value == "Granted"]
            released = [e for e in events if e.token == token_string and e.kind.value == "Released"]
            assert granted and granted[0].ts <= ts
            assert all(r.ts >= ts for r in released)


class TestBlockingResult:
    def test_task_result_blocks_until_terminal_wall_clock(self):
        device = PseudoQPU("qpu0", DeviceSpec(num_qubits=2, num_lanes=1, exec_time_per_shot=0.005), WallClock())
        token = device.acquire("A")
        task_id = device.task_start(token, bell_payload(shots=1000))  # ~5 ms
        result = device.task_result(task_id)
        assert sum(result.counts.values()) == 1000

    def test_task_result_unblocked_by_cancellation(self):
        device = PseudoQPU("qpu0", DeviceSpec(num_qubits=2, num_lanes=1, exec_time_per_shot=1000.0), WallClock())
        token = device.acquire("A")
        task_id = device.task_start(token, bell_payload(shots=1000))
        outcome: list[object] = []

        def waiter():
            try:
                device.task_result(task_id)
            except TaskCancelled as exc:
                outcome.append(exc)

        thread = threading.Thread(target=waiter)
        thread.start()
        time.sleep(0.02)
        device.task_stop(task_id)
        thread.join(timeout=2.0)
        assert len(outcome) == 1


class TestDescriptors:
    def test_target_content_and_determinism(self):
        import json

        _, device = make_device()
        target = device.target()
        assert target.resource == "qpu0"
        assert target.version == 1
        doc = json.loads(target.body)
        assert doc == {"basis_gates": ["h", "x", "rz", "cx"], "coupling": "all-to-all", "num_qubits": 5}
        assert device.target().body == target.body  # byte-identical

    def test_metadata_required_keys(self):
        _, device = make_device(lanes=2)
        meta = device.metadata()
        assert meta["backend_type"] == "simulated"
        assert meta["num_lanes"] == "2"
        assert meta["num_qubits"] == "5"
