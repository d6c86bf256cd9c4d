from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from qrmi.circuits import CircuitV1, GateOp
from qrmi.clock import VirtualClock
from qrmi.pseudo_qpu import DeviceSpec, PseudoQPU
from qrmi.registry import RegistryConfig, Registry, ResourceEntry

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

BELL_TEXT = "qubits 2\nh 0\ncx 0 1\nmeasure_all\nshots 1000\nseed 42\n"


@pytest.fixture
def bell_text() -> str:
    return BELL_TEXT


@pytest.fixture
def x_circuit() -> CircuitV1:
    return CircuitV1(1, (GateOp("x", (0,)), GateOp("measure_all", ())), shots=100, seed=7)


@pytest.fixture
def virtual_device():
    """(clock, device): 2 lanes, 1 ms per shot, on a virtual clock."""
    clock = VirtualClock()
    device = PseudoQPU("qpu0", DeviceSpec(num_qubits=3, num_lanes=2, exec_time_per_shot=1.0), clock)
    return clock, device


def simulated_entry(
    resource_id: str = "qpu0",
    lanes: int = 1,
    num_qubits: int = 3,
    exec_time_per_shot: float = 0.001,
    maintenance: bool = False,
    fault=None,
    lease_ms: float | None = None,
) -> ResourceEntry:
    return ResourceEntry(
        id=resource_id,
        backend="simulated",
        lanes=lanes,
        maintenance=maintenance,
        lease_ms=lease_ms,
        device=DeviceSpec(
            num_qubits=num_qubits,
            num_lanes=lanes,
            exec_time_per_shot=exec_time_per_shot,
            fault_injection=fault,
        ),
    )


def make_registry(*entries: ResourceEntry, clock=None, env=None) -> Registry:
    return Registry(RegistryConfig(version=1, resources=list(entries)), clock=clock, env=env)


@pytest.fixture
def wall_registry():
    registry = make_registry(simulated_entry("qpu0", lanes=1))
    yield registry
    registry.close()
