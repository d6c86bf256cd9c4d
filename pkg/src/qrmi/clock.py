"""Time sources for backends, pools and the simulator.

All timestamps and durations in this package are milliseconds. Two clocks
exist: a wall clock for threaded/interactive use, and a virtual clock that
only moves when told to, which makes lock and device schedules exactly
reproducible in tests and drives the discrete-event simulator.

Components that block (slot pools, devices) subscribe to the virtual clock
so a manual `advance_to` wakes their waiters and lets them process deadlines.
"""

from __future__ import annotations

import threading
import time
from typing import Callable, Protocol


class Clock(Protocol):
    def now(self) -> float:
        """Current time in milliseconds."""
        ...


class WallClock:
    """Monotonic wall time, in milliseconds since this clock was created."""

    def __init__(self) -> None:
        self._origin = time.monotonic()

    def now(self) -> float:
        return (time.monotonic() - self._origin) * 1000.0


class VirtualClock:
    """Manually advanced clock. Never moves backwards.

    Observers are invoked after every advance, outside any clock-internal
    lock, so they may take their own locks and wake blocked threads.
    """

    def __init__(self, start: float = 0.0) -> None:
        self._now = float(start)
        self._lock = threading.Lock()
        self._observers: list[Callable[[float], None]] = []

    def now(self) -> float:
        with self._lock:
            return self._now

    def subscribe(self, observer: Callable[[float], None]) -> None:
        with self._lock:
            self._observers.append(observer)

    def advance_to(self, t: float) -> None:
        with self._lock:
            if t < self._now:
                raise ValueError(f"clock cannot move backwards: {t} < {self._now}")
            self._now = float(t)
            observers = list(self._observers)
        for observer in observers:
            observer(t)

    def advance(self, dt: float) -> None:
        self.advance_to(self.now() + dt)


def is_virtual(clock: Clock) -> bool:
    return isinstance(clock, VirtualClock)
