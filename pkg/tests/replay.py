"""Deterministic schedule replay driver for slot pools.

Drives a SlotPool through an arbitrary arrival/hold schedule on a virtual
clock, one event at a time, so lock behavior is exactly reproducible. The
resulting event log is checked by oracles.analyze_pool_log.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass

from qrmi.clock import VirtualClock
from qrmi.errors import AcquireTimeout
from qrmi.locking import SlotPool


@dataclass
class Requester:
    name: str
    arrival: float
    hold: float
    timeout: float | None = None


def random_requesters(
    rng: random.Random, count: int, max_arrival: float = 100.0, max_hold: float = 20.0
) -> list[Requester]:
    return [
        Requester(
            name=f"r{i:03d}",
            arrival=rng.uniform(0.0, max_arrival),
            hold=rng.uniform(0.0, max_hold),
        )
        for i in range(count)
    ]


def replay_schedule(pool: SlotPool, clock: VirtualClock, requesters: list[Requester]) -> dict:
    """Run the schedule to completion; returns {'served': n, 'timed_out': n}."""
    heap: list[tuple[float, int, str, int]] = []
    for i, req in enumerate(sorted(requesters, key=lambda r: (r.arrival, r.name))):
        heapq.heappush(heap, (req.arrival, i, "arrive", i))
    ordered = sorted(requesters, key=lambda r: (r.arrival, r.name))
    waiters: dict[int, object] = {}
    release_scheduled: set[int] = set()
    served = 0
    timed_out = 0
    seq = len(ordered)

    def schedule_new_grants(now: float) -> None:
        nonlocal seq
        for i, waiter in waiters.items():
            if i in release_scheduled or not waiter.granted:  # type: ignore[attr-defined]
                continue
            token = waiter.token  # type: ignore[attr-defined]
            release_scheduled.add(i)
            seq += 1
            heapq.heappush(heap, (token.acquired_at + ordered[i].hold, seq, "release", i))

    while heap:
        t, _, kind, i = heapq.heappop(heap)
        if t > clock.now():
            clock.advance_to(t)
        if kind == "arrive":
            req = ordered[i]
            try:
                waiter = pool.request(req.name, timeout=req.timeout)
            except AcquireTimeout:
                timed_out += 1
                continue
            waiters[i] = waiter
        else:
            pool.release(waiters[i].token)  # type: ignore[attr-defined]
            served += 1
        schedule_new_grants(clock.now())

    # Requesters with timeouts may still be pending; flush their deadlines.
    deadlines = [
        ordered[i].arrival + ordered[i].timeout
        for i, w in waiters.items()
        if not w.granted and ordered[i].timeout is not None  # type: ignore[attr-defined]
    ]
    if deadlines:
        clock.advance_to(max(clock.now(), max(deadlines) + 1.0))
    timed_out += sum(
        1 for i, w in waiters.items() if i not in release_scheduled and not w.granted  # type: ignore[attr-defined]
    )
    return {"served": served, "timed_out": timed_out}
