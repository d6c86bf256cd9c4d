"""Blocking slot acquisition with FIFO wait queues and a tamper-evident event log.

A SlotPool guards one resource's lanes: at most num_slots tokens are live at
any instant, waiting acquirers are served strictly in arrival order, and the
lowest free slot index is always assigned. Every request, grant, release,
lease expiry and timeout is appended to an event log whose gapless sequence
numbers give tests a linearization to check invariants against.

Grant, timeout and expiry decisions all happen under one mutex, so a waiter
can never be both granted and timed out. Timestamps on TimedOut/Expired
events are the logical deadline instants; `seq` is the authoritative order.
"""

from __future__ import annotations

import enum
import json
import secrets
import threading
from dataclasses import dataclass

from .clock import Clock, VirtualClock, WallClock, is_virtual
from .errors import AcquireTimeout, AlreadyReleased, InvalidToken, PoolClosed
from .types import AcquisitionToken


class LockEventKind(enum.Enum):
    ACQUIRE_REQUEST = "AcquireRequest"
    GRANTED = "Granted"
    RELEASED = "Released"
    EXPIRED = "Expired"
    TIMED_OUT = "TimedOut"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class LockEvent:
    seq: int
    kind: LockEventKind
    resource: str
    slot: int | None
    requester: str | None
    token: str | None
    ts: float

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind.value,
            "resource": self.resource,
            "slot": self.slot,
            "requester": self.requester,
            "token": self.token,
            "ts": self.ts,
        }


class EventLog:
    """Append-only, thread-safe event record with gapless per-log sequence numbers."""

    def __init__(self) -> None:
        self._events: list[LockEvent] = []
        self._lock = threading.Lock()

    def append(
        self,
        kind: LockEventKind,
        resource: str,
        *,
        slot: int | None = None,
        requester: str | None = None,
        token: str | None = None,
        ts: float,
    ) -> LockEvent:
        with self._lock:
            event = LockEvent(len(self._events) + 1, kind, resource, slot, requester, token, ts)
            self._events.append(event)
            return event

    def events(self) -> list[LockEvent]:
        with self._lock:
            return list(self._events)

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(e.to_json()) for e in self.events())


class _WaiterState(enum.Enum):
    PENDING = "pending"
    GRANTED = "granted"
    TIMED_OUT = "timed_out"
    CLOSED = "closed"


class AcquireWaiter:
    """Handle for one acquisition request; granted immediately or queued."""

    def __init__(self, requester: str, enqueued_at: float, deadline: float | None) -> None:
        self.requester = requester
        self.enqueued_at = enqueued_at
        self.deadline = deadline
        self.state = _WaiterState.PENDING
        self.token: AcquisitionToken | None = None

    @property
    def granted(self) -> bool:
        return self.state is _WaiterState.GRANTED


class SlotPool:
    """FIFO slot pool for one resource; see module docstring for guarantees."""

    def __init__(
        self,
        resource: str,
        num_slots: int,
        clock: Clock | None = None,
        lease_duration: float | None = None,
        log: EventLog | None = None,
    ) -> None:
        if num_slots < 1:
            raise ValueError("num_slots must be >= 1")
        self.resource = resource
        self.num_slots = num_slots
        self.lease_duration = lease_duration
        self.clock: Clock = clock if clock is not None else WallClock()
        self.log = log if log is not None else EventLog()
        self._cond = threading.Condition()
        self._holders: dict[int, AcquisitionToken] = {}
        self._holder_requesters: dict[int, str] = {}
        self._queue: list[AcquireWaiter] = []
        self._retired: set[str] = set()
        self._closed = False
        if is_virtual(self.clock):
            assert isinstance(self.clock, VirtualClock)
            self.clock.subscribe(self._on_clock_advance)

    # -- non-blocking core -------------------------------------------------

    def request(self, requester: str | None = None, timeout: float | None = None) -> AcquireWaiter:
        """Record an acquisition request; grants immediately if a slot is free.

        With timeout=0 and no free slot the request times out on the spot.
        Returns the waiter; callers either poll it or hand it to wait().
        """
        who = requester if requester is not None else threading.current_thread().name
        with self._cond:
            if self._closed:
                raise PoolClosed(f"pool {self.resource} is closed")
            now = self.clock.now()
            self._process_deadlines(now)
            self.log.append(LockEventKind.ACQUIRE_REQUEST, self.resource, requester=who, ts=now)
            deadline = None if timeout is None else now + timeout
            waiter = AcquireWaiter(who, now, deadline)
            free = self._free_slot()
            if free is not None:
                # A free slot implies an empty queue, so no one is bypassed.
                assert not self._queue
                self._grant(waiter, free, now)
            elif timeout is not None and timeout <= 0:
                self._time_out(waiter, now)
            else:
                self._queue.append(waiter)
            return waiter

    def wait(self, waiter: AcquireWaiter) -> AcquisitionToken:
        """Block the caller until the waiter resolves; returns its token."""
        with self._cond:
            try:
                while True:
                    if waiter.state is _WaiterState.GRANTED:
                        assert waiter.token is not None
                        return waiter.token
                    if waiter.state is _WaiterState.TIMED_OUT:
                        raise AcquireTimeout(
                            f"acquire on {self.resource} timed out for {waiter.requester}"
                        )
                    if waiter.state is _WaiterState.CLOSED or self._closed:
                        raise PoolClosed(f"pool {self.resource} closed while waiting")
                    now = self.clock.now()
                    if waiter.deadline is not None and now >= waiter.deadline:
                        self._time_out(waiter, waiter.deadline)
                        raise AcquireTimeout(
                            f"acquire on {self.resource} timed out for {waiter.requester}"
                        )
                    if is_virtual(self.clock):
                        # Woken by grants or by clock advances via the subscription.
                        self._cond.wait()
                    elif waiter.deadline is None:
                        self._cond.wait()
                    else:
                        self._cond.wait(max(0.0, waiter.deadline - now) / 1000.0)
            except BaseException:
                self._abandon(waiter)
                raise

    def acquire(self, requester: str | None = None, timeout: float | None = None) -> AcquisitionToken:
        """request() + wait(): the Table-style blocking acquisition."""
        waiter = self.request(requester, timeout)
        if waiter.granted:
            assert waiter.token is not None
            return waiter.token
        if waiter.state is _WaiterState.TIMED_OUT:
            raise AcquireTimeout(f"acquire on {self.resource} timed out for {waiter.requester}")
        return self.wait(waiter)

    def release(self, token: AcquisitionToken) -> None:
        """Free the token's slot and grant the queue head synchronously."""
        with self._cond:
            now = self.clock.now()
            self._process_deadlines(now)
            if not isinstance(token, AcquisitionToken) or token.resource != self.resource:
                raise InvalidToken(f"token does not belong to pool {self.resource}")
            if token.token in self._retired:
                raise AlreadyReleased(f"token for {self.resource} slot {token.slot} already released")
            slot = self._held_slot(token)
            if slot is None:
                raise InvalidToken(f"unknown token for pool {self.resource}")
            requester = self._holder_requesters.pop(slot, None)
            del self._holders[slot]
            self._retired.add(token.token)
            self.log.append(
                LockEventKind.RELEASED,
                self.resource,
                slot=slot,
                requester=requester,
                token=token.token,
                ts=now,
            )
            self._grant_from_queue(now)

    def expire_leases(self, now: float | None = None) -> list[AcquisitionToken]:
        """Force-release every holder whose lease_expiry < now; returns them.

        Freed slots are handed to waiting acquirers in queue order. Expired
        tokens are retired, so a later release reports AlreadyReleased.
        """
        with self._cond:
            t = self.clock.now() if now is None else now
            expired: list[tuple[float, int, AcquisitionToken]] = []
            for slot, token in self._holders.items():
                if token.lease_expiry is not None and token.lease_expiry < t:
                    expired.append((token.lease_expiry, slot, token))
            expired.sort()
            for expiry, slot, token in expired:
                requester = self._holder_requesters.pop(slot, None)
                del self._holders[slot]
                self._retired.add(token.token)
                self.log.append(
                    LockEventKind.EXPIRED,
                    self.resource,
                    slot=slot,
                    requester=requester,
                    token=token.token,
                    ts=expiry,
                )
            self._grant_from_queue(t)
            return [token for _, _, token in expired]

    def close(self) -> None:
        """Shut the pool: pending waiters raise PoolClosed, new requests are refused."""
        with self._cond:
            self._closed = True
            for waiter in self._queue:
                waiter.state = _WaiterState.CLOSED
            self._queue.clear()
            self._cond.notify_all()

    # -- introspection -----------------------------------------------------

    def holders(self) -> dict[int, AcquisitionToken]:
        with self._cond:
            return dict(self._holders)

    def free_count(self) -> int:
        with self._cond:
            return self.num_slots - len(self._holders)

    def queue_length(self) -> int:
        with self._cond:
            return len(self._queue)

    def is_active(self, token: AcquisitionToken) -> bool:
        """True while the token is held and its lease (if any) has not expired."""
        with self._cond:
            slot = self._held_slot(token)
            if slot is None:
                return False
            if token.lease_expiry is not None and token.lease_expiry < self.clock.now():
                return False
            return True

    # -- internals (callers hold self._cond) --------------------------------

    def _free_slot(self) -> int | None:
        for slot in range(self.num_slots):
            if slot not in self._holders:
                return slot
        return None

    def _held_slot(self, token: AcquisitionToken) -> int | None:
        held = self._holders.get(token.slot)
        if held is not None and held.token == token.token:
            return token.slot
        return None

    def _grant(self, waiter: AcquireWaiter, slot: int, now: float) -> None:
        lease = None if self.lease_duration is None else now + self.lease_duration
        token = AcquisitionToken(
            token=secrets.token_hex(16),
            resource=self.resource,
            slot=slot,
            acquired_at=now,
            lease_expiry=lease,
        )
        self._holders[slot] = token
        self._holder_requesters[slot] = waiter.requester
        waiter.state = _WaiterState.GRANTED
        waiter.token = token
        self.log.append(
            LockEventKind.GRANTED,
            self.resource,
            slot=slot,
            requester=waiter.requester,
            token=token.token,
            ts=now,
        )
        self._cond.notify_all()

    def _grant_from_queue(self, now: float) -> None:
        while self._queue:
            free = self._free_slot()
            if free is None:
                return
            self._grant(self._queue.pop(0), free, now)

    def _time_out(self, waiter: AcquireWaiter, ts: float) -> None:
        waiter.state = _WaiterState.TIMED_OUT
        if waiter in self._queue:
            self._queue.remove(waiter)
        self.log.append(
            LockEventKind.TIMED_OUT, self.resource, requester=waiter.requester, ts=ts
        )
        self._cond.notify_all()

    def _process_deadlines(self, now: float) -> None:
        due = [w for w in self._queue if w.deadline is not None and w.deadline <= now]
        for waiter in sorted(due, key=lambda w: w.deadline):  # type: ignore[arg-type, return-value]
            self._time_out(waiter, waiter.deadline)  # type: ignore[arg-type]

    def _abandon(self, waiter: AcquireWaiter) -> None:
        # Caller gave up (interrupt). Withdraw, or release a grant that raced in.
        with self._cond:
            if waiter.state is _WaiterState.PENDING:
                self._time_out(waiter, self.clock.now())
            elif waiter.state is _WaiterState.GRANTED and waiter.token is not None:
                if self._held_slot(waiter.token) is not None:
                    try:
                        self.release(waiter.token)
                    except (InvalidToken, AlreadyReleased):
                        pass

    def _on_clock_advance(self, now: float) -> None:
        with self._cond:
            self._process_deadlines(now)
            self._cond.notify_all()
