#!/usr/bin/env python3
"""Lock acquisition stress: replay randomized schedules and report fairness.

Usage: python3 scripts/lock_stress.py [--seeds 50] [--requesters 100] [--slots 1]
"""

from __future__ import annotations

import argparse
import random
import statistics
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from qrmi.clock import VirtualClock
from qrmi.locking import LockEventKind, SlotPool

from replay import random_requesters, replay_schedule  # noqa: E402  (tests/ helper)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=50)
    parser.add_argument("--requesters", type=int, default=100)
    parser.add_argument("--slots", type=int, default=1)
    args = parser.parse_args()

    waits: list[float] = []
    max_holders = 0
    started = time.monotonic()
    for seed in range(args.seeds):
        rng = random.Random(seed)
        clock = VirtualClock()
        pool = SlotPool("dev", args.slots, clock)
        replay_schedule(pool, clock, random_requesters(rng, args.requesters, 500.0, 10.0))
        events = pool.log.events()
        requested_at: dict[str, float] = {}
        concurrent = 0
        for event in events:
            if event.kind is LockEventKind.ACQUIRE_REQUEST:
                requested_at[event.requester] = event.ts
            elif event.kind is LockEventKind.GRANTED:
                waits.append(event.ts - requested_at[event.requester])
                concurrent += 1
                max_holders = max(max_holders, concurrent)
            elif event.kind is LockEventKind.RELEASED:
                concurrent -= 1
    elapsed = time.monotonic() - started

    print(f"seeds={args.seeds} requesters={args.requesters} slots={args.slots}")
    print(f"grants          {len(waits)}")
    print(f"max holders     {max_holders} (bound {args.slots})")
    print(f"mean wait       {statistics.mean(waits):8.2f} ms (simulated)")
    print(f"p95 wait        {statistics.quantiles(waits, n=20)[-1]:8.2f} ms")
    print(f"max wait        {max(waits):8.2f} ms")
    print(f"wall time       {elapsed:8.2f} s")
    return 0 if max_holders <= args.slots else 1


if __name__ == "__main__":
    sys.exit(main())
