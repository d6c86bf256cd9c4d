"""Quantum resource management for cluster schedulers.

Treats each quantum device as a first-class scheduler resource: acquire a
lane slot, execute tasks under the token, release. Backends (simulated
device, direct-access gateway, cloud-queue gateway) all implement one
QuantumResource contract and are selected purely by registry configuration.
"""

from .circuits import CircuitV1, GateOp, bell_circuit, circuit_payload, opaque_payload, parse_circuit, serialize_circuit
from .clock import Clock, VirtualClock, WallClock
from .errors import (
    AcquireTimeout,
    AlreadyReleased,
    AuthFailed,
    BackendInitFailed,
    BindFailed,
    GatewayUnreachable,
    InvalidOption,
    InvalidToken,
    MalformedPayload,
    ParseError,
    PoolClosed,
    QrmiError,
    ResourceUnavailable,
    SecretMissing,
    SpecError,
    TaskCancelled,
    TaskFailed,
    TaskScriptError,
    UnknownResource,
    UnknownTask,
    ValidationError,
)
from .gateway import GatewayClient, GatewayConfig
from .harness import ContextKind, JobContext, JobHarness, JobPhase, ResourceRequest
from .locking import EventLog, LockEvent, LockEventKind, SlotPool
from .mock_gateway import MockGateway, mock_server_run
from .pseudo_qpu import DeviceSpec, FaultInjection, PseudoQPU
from .registry import (
    Registry,
    RegistryConfig,
    ResourceEntry,
    config_from_dict,
    load_config,
    registry_open,
)
from .resource import QuantumResource
from .sim import ClusterSpec, NodeSpec, QpuRequest, SimJob, SimTrace, load_scenario, simulate, utilization
from .statevector import Xoshiro256StarStar, execute_circuit
from .types import (
    AcquisitionToken,
    Target,
    TaskPayload,
    TaskResult,
    TaskStatus,
    canonical_counts_json,
)

__version__ = "0.1.0"
