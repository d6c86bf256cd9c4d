from __future__ import annotations

import json
import random
import threading
import time

import pytest
from hypothesis import given, settings, strategies as st

from qrmi.clock import VirtualClock, WallClock
from qrmi.errors import AcquireTimeout, AlreadyReleased, InvalidToken, PoolClosed
from qrmi.locking import EventLog, LockEventKind, SlotPool
from qrmi.types import AcquisitionToken

import oracles
from replay import random_requesters, replay_schedule


def virtual_pool(num_slots: int = 1, lease: float | None = None):
    clock = VirtualClock()
    return clock, SlotPool("qpu0", num_slots, clock, lease_duration=lease)


class TestImmediateGrant:
    def test_free_pool_grants_slot0_immediately(self):
        _, pool = virtual_pool()
        token = pool.acquire("A")
        assert token.slot == 0
        assert len(token.token) >= 16
        assert pool.free_count() == 0

    def test_three_acquirers_two_slots(self):
        clock, pool = virtual_pool(num_slots=2)
        a = pool.acquire("A")
        b = pool.acquire("B")
        c = pool.request("C")
        assert (a.slot, b.slot) == (0, 1)
        assert not c.granted
        assert pool.queue_length() == 1
        pool.release(a)
        assert c.granted and c.token.slot == 0
        oracles.analyze_pool_log(pool.log.events(), 2)

    def test_lowest_free_slot_assigned(self):
        _, pool = virtual_pool(num_slots=3)
        a = pool.acquire("A")
        b = pool.acquire("B")
        pool.acquire("C")
        pool.release(a)
        pool.release(b)
        assert pool.acquire("D").slot == 0
        assert pool.acquire("E").slot == 1


class TestBlockedGrant:
    def test_grant_at_release_time_50ms(self):
        """Holder releases after 50 simulated ms; waiter is granted at t=50."""
        clock, pool = virtual_pool()
        a = pool.acquire("A")
        b = pool.request("B")
        assert not b.granted
        clock.advance_to(50.0)
        pool.release(a)
        assert b.granted
        assert b.token.acquired_at == 50.0
        granted = [e for e in pool.log.events() if e.kind is LockEventKind.GRANTED]
        assert [(e.requester, e.ts) for e in granted] == [("A", 0.0), ("B", 50.0)]

    def test_waiter_gets_same_slot(self):
        _, pool = virtual_pool()
        a = pool.acquire("A")
        b = pool.request("B")
        pool.release(a)
        assert b.token.slot == a.slot == 0

    def test_release_with_two_waiters_grants_earliest(self):
        clock, pool = virtual_pool()
        a = pool.acquire("A")
        clock.advance_to(1.0)
        b = pool.request("B")
        clock.advance_to(2.0)
        c = pool.request("C")
        pool.release(a)
        assert b.granted and not c.granted
        requests, grants = oracles.fifo_grant_order(pool.log.events())
        assert grants == requests[: len(grants)]

    def test_blocking_wait_across_threads(self):
        pool = SlotPool("qpu0", 1, WallClock())
        first = pool.acquire("A")
        granted_at: list[float] = []

        def blocked():
            token = pool.acquire("B")
            granted_at.append(token.acquired_at)
            pool.release(token)

        thread = threading.Thread(target=blocked)
        thread.start()
        time.sleep(0.02)
        pool.release(first)
        thread.join(timeout=2.0)
        assert not thread.is_alive()
        assert granted_at and granted_at[0] >= first.acquired_at
        oracles.analyze_pool_log(pool.log.events(), 1)


class TestTimeouts:
    def test_timeout_zero_on_busy_pool(self):
        _, pool = virtual_pool()
        pool.acquire("A")
        with pytest.raises(AcquireTimeout):
            pool.acquire("B", timeout=0)
        assert pool.queue_length() == 0

    def test_timeout_elapses_while_queued(self):
        clock, pool = virtual_pool()
        pool.acquire("A")
        c = pool.request("C", timeout=5.0)
        clock.advance_to(5.0)
        assert not c.granted
        assert pool.queue_length() == 0
        timed_out = [e for e in pool.log.events() if e.kind is LockEventKind.TIMED_OUT]
        assert [(e.requester, e.ts) for e in timed_out] == [("C", 5.0)]

    def test_timeout_in_blocking_wait_wall_clock(self):
        pool = SlotPool("qpu0", 1, WallClock())
        pool.acquire("A")
        started = time.monotonic()
        with pytest.raises(AcquireTimeout):
            pool.acquire("B", timeout=10.0)
        assert time.monotonic() - started < 1.0

    def test_timed_out_waiter_skipped_on_release(self):
        clock, pool = virtual_pool()
        a = pool.acquire("A")
        b = pool.request("B", timeout=5.0)
        c = pool.request("C")
        clock.advance_to(10.0)  # B's deadline passes
        pool.release(a)
        assert not b.granted
        assert c.granted
        oracles.analyze_pool_log(pool.log.events(), 1)

    def test_never_both_granted_and_timed_out(self):
        clock, pool = virtual_pool()
        a = pool.acquire("A")
        b = pool.request("B", timeout=5.0)
        clock.advance_to(5.0)  # deadline fires exactly when the release happens
        pool.release(a)
        events = pool.log.events()
        b_outcomes = [
            e.kind
            for e in events
            if e.requester == "B" and e.kind in (LockEventKind.GRANTED, LockEventKind.TIMED_OUT)
        ]
        assert len(b_outcomes) == 1


class TestRelease:
    def test_release_empty_queue_frees_slot(self):
        _, pool = virtual_pool(num_slots=2)
        a = pool.acquire("A")
        assert pool.free_count() == 1
        pool.release(a)
        assert pool.free_count() == 2
        assert pool.holders() == {}

    def test_double_release(self):
        _, pool = virtual_pool()
        a = pool.acquire("A")
        pool.release(a)
        with pytest.raises(AlreadyReleased):
            pool.release(a)

    def test_forged_token(self):
        clock, pool = virtual_pool()
        pool.acquire("A")
        forged = AcquisitionToken(token="f" * 32, resource="qpu0", slot=0, acquired_at=0.0)
        with pytest.raises(InvalidToken):
            pool.release(forged)

    def test_token_from_another_pool(self):
        _, pool_a = virtual_pool()
        clock_b = VirtualClock()
        pool_b = SlotPool("qpu1", 1, clock_b)
        token_b = pool_b.acquire("A")
        with pytest.raises(InvalidToken):
            pool_a.release(token_b)


class TestLeases:
    def test_no_leases_configured(self):
        _, pool = virtual_pool()
        pool.acquire("A")
        assert pool.expire_leases(now=1e9) == []

    def test_expiry_frees_slot_and_grants_waiter(self):
        clock, pool = virtual_pool(lease=100.0)
        a = pool.acquire("A")
        assert a.lease_expiry == 100.0
        b = pool.request("B")
        clock.advance_to(101.0)
        expired = pool.expire_leases()
        assert [t.token for t in expired] == [a.token]
        assert b.granted
        expired_events = [e for e in pool.log.events() if e.kind is LockEventKind.EXPIRED]
        assert [(e.ts, e.token) for e in expired_events] == [(100.0, a.token)]

    def test_release_after_expiry_reports_already_released(self):
        clock, pool = virtual_pool(lease=10.0)
        a = pool.acquire("A")
        clock.advance_to(11.0)
        pool.expire_leases()
        with pytest.raises(AlreadyReleased):
            pool.release(a)

    def test_two_simultaneous_expiries_preserve_queue_order(self):
        clock, pool = virtual_pool()
        pool.num_slots = 2  # construct wide pool directly
        clock2 = VirtualClock()
        pool = SlotPool("qpu0", 2, clock2, lease_duration=50.0)
        a = pool.acquire("A")
        b = pool.acquire("B")
        c = pool.request("C")
        d = pool.request("D")
        clock2.advance_to(60.0)
        expired = pool.expire_leases()
        assert {t.token for t in expired} == {a.token, b.token}
        assert c.granted and d.granted
        requests, grants = oracles.fifo_grant_order(pool.log.events())
        assert grants == requests
        oracles.analyze_pool_log(pool.log.events(), 2)

    def test_is_active_false_after_lease_passes(self):
        clock, pool = virtual_pool(lease=10.0)
        a = pool.acquire("A")
        assert pool.is_active(a)
        clock.advance_to(20.0)
        assert not pool.is_active(a)


class TestClose:
    def test_waiters_raise_pool_closed(self):
        pool = SlotPool("qpu0", 1, WallClock())
        pool.acquire("A")
        errors: list[Exception] = []

        def blocked():
            try:
                pool.acquire("B")
            except PoolClosed as exc:
                errors.append(exc)

        thread = threading.Thread(target=blocked)
        thread.start()
        time.sleep(0.02)
        pool.close()
        thread.join(timeout=2.0)
        assert len(errors) == 1

    def test_request_after_close(self):
        _, pool = virtual_pool()
        pool.close()
        with pytest.raises(PoolClosed):
            pool.request("A")


class TestEventLog:
    def test_jsonl_field_names(self):
        _, pool = virtual_pool()
        token = pool.acquire("A")
        pool.release(token)
        lines = pool.log.to_jsonl().splitlines()
        assert len(lines) == 3
        for line in lines:
            doc = json.loads(line)
            assert set(doc) == {"seq", "kind", "resource", "slot", "requester", "token", "ts"}
        kinds = [json.loads(line)["kind"] for line in lines]
        assert kinds == ["AcquireRequest", "Granted", "Released"]

    def test_seq_gapless_and_shared_log(self):
        log = EventLog()
        clock = VirtualClock()
        pool = SlotPool("qpu0", 1, clock, log=log)
        for i in range(5):
            pool.release(pool.acquire(f"r{i}"))
        seqs = [e.seq for e in log.events()]
        assert seqs == list(range(1, len(seqs) + 1))


class TestRandomizedSchedules:
    @given(
        seed=st.integers(min_value=0, max_value=2**32 - 1),
        num_slots=st.integers(min_value=1, max_value=4),
        count=st.integers(min_value=1, max_value=40),
    )
    @settings(max_examples=40)
    def test_invariants_hold_for_any_schedule(self, seed, num_slots, count):
        rng = random.Random(seed)
        clock = VirtualClock()
        pool = SlotPool("qpu0", num_slots, clock)
        requesters = random_requesters(rng, count)
        outcome = replay_schedule(pool, clock, requesters)
        stats = oracles.analyze_pool_log(pool.log.events(), num_slots)
        assert outcome["served"] == count == stats["grants"]
        assert stats["holders"] == {}
        assert stats["outstanding"] == 0

    @given(seed=st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25)
    def test_liveness_with_timeouts(self, seed):
        rng = random.Random(seed)
        clock = VirtualClock()
        pool = SlotPool("qpu0", 1, clock)
        requesters = random_requesters(rng, 20)
        for req in requesters[::3]:
            req.timeout = rng.uniform(0.0, 10.0)
        outcome = replay_schedule(pool, clock, requesters)
        stats = oracles.analyze_pool_log(pool.log.events(), 1)
        assert outcome["served"] + outcome["timed_out"] == 20
        assert stats["holders"] == {}
        assert stats["outstanding"] == 0

    def test_threaded_stress_fifo_and_exclusion(self):
        pool = SlotPool("qpu0", 1, WallClock())
        rng = random.Random(7)
        holds = [rng.uniform(0.0, 0.002) for _ in range(50)]
        barrier = threading.Barrier(50)

        def worker(i: int) -> None:
            barrier.wait()
            token = pool.acquire(f"w{i:02d}")
            time.sleep(holds[i])
            pool.release(token)

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(50)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout=10.0)
        assert not any(t.is_alive() for t in threads)
        stats = oracles.analyze_pool_log(pool.log.events(), 1)
        assert stats["max_concurrent"] == 1
        assert stats["grants"] == 50
        assert stats["holders"] == {}
