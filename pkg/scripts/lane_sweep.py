#!/usr/bin/env python3
"""Makespan sweep: identical quantum jobs over varying device/lane counts.

Usage: python3 scripts/lane_sweep.py [--jobs 20] [--shots 100]
"""

from __future__ import annotations

import argparse
import sys

from qrmi.pseudo_qpu import DeviceSpec
from qrmi.registry import RegistryConfig, ResourceEntry
from qrmi.sim import ClusterSpec, NodeSpec, QpuRequest, SimJob, simulate, utilization


def build_cluster(devices: int, lanes: int, per_shot: float) -> ClusterSpec:
    entries = [
        ResourceEntry(
            id=f"qpu{i}",
            backend="simulated",
            lanes=lanes,
            device=DeviceSpec(num_qubits=2, num_lanes=lanes, exec_time_per_shot=per_shot),
        )
        for i in range(devices)
    ]
    return ClusterSpec(nodes=[NodeSpec("n0", 8)], registry=RegistryConfig(1, entries))


def build_jobs(count: int, shots: int) -> list[SimJob]:
    return [
        SimJob(
            job_id=i,
            arrival=0.0,
            cores=0,
            qpu=QpuRequest(count=1),
            script=[
                {"op": "submit", "circuit": f"qubits 1\nh 0\nmeasure_all\nshots {shots}\nseed {i}\n"},
                {"op": "await_result"},
            ],
        )
        for i in range(1, count + 1)
    ]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--jobs", type=int, default=20)
    parser.add_argument("--shots", type=int, default=100)
    parser.add_argument("--per-shot", type=float, default=1.0, help="simulated ms per shot")
    args = parser.parse_args()

    print(f"{'devices':>8} {'lanes':>6} {'slots':>6} {'makespan ms':>12} {'mean lane util':>15}")
    for devices, lanes in [(1, 1), (1, 2), (2, 1), (2, 2), (4, 2), (4, 4)]:
        cluster = build_cluster(devices, lanes, args.per_shot)
        trace = simulate(cluster, build_jobs(args.jobs, args.shots))
        util = utilization(trace, cluster)
        lane_utils = [v for k, v in util.items() if "/lane" in k]
        mean_util = sum(lane_utils) / len(lane_utils)
        print(
            f"{devices:>8} {lanes:>6} {devices * lanes:>6} "
            f"{trace.makespan:>12.1f} {mean_util:>15.2%}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
