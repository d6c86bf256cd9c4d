"""Admin configuration: map scheduler resource units onto backend instances.

A registry ingests the cluster's quantum resource definitions (JSON file,
schema shipped in schema/qrmi_config.schema.json), instantiates one backend
and one slot pool per entry, and routes id-keyed calls. Backend selection
is purely a config detail: user code only ever names a resource id.

Config path resolution for the CLI: explicit flag, else the QRMI_CONFIG
environment variable, else ./qrmi_config.json.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from typing import Mapping

from .clock import Clock, WallClock
from .errors import (
    BackendInitFailed,
    ParseError,
    UnknownResource,
    UnknownTask,
    ValidationError,
)
from .gateway import GatewayClient, GatewayConfig
from .locking import EventLog, SlotPool
from .pseudo_qpu import DeviceSpec, FaultInjection, PseudoQPU
from .resource import QuantumResource
from .types import (
    AcquisitionToken,
    Target,
    TaskPayload,
    TaskResult,
    TaskStatus,
    validate_metadata,
    validate_resource_id,
)
from .wire import GATEWAY_MODES

BACKEND_SIMULATED = "simulated"
KNOWN_BACKENDS = (BACKEND_SIMULATED,) + GATEWAY_MODES

DEFAULT_CONFIG_FILENAME = "qrmi_config.json"
CONFIG_ENV_VAR = "QRMI_CONFIG"
GRES_NAME = "qpu"


@dataclass
class ResourceEntry:
    id: str
    backend: str
    lanes: int
    maintenance: bool = False
    gres_name: str = GRES_NAME
    lease_ms: float | None = None
    device: DeviceSpec | None = None
    gateway: GatewayConfig | None = None


@dataclass
class RegistryConfig:
    version: int
    resources: list[ResourceEntry] = field(default_factory=list)


def load_config(path: str | os.PathLike) -> RegistryConfig:
    """Read and validate a config file; ParseError carries line/column."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from exc
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> RegistryConfig:
    if not isinstance(doc, dict):
        raise ValidationError("config root must be a JSON object")
    version = doc.get("version")
    if not isinstance(version, int) or version < 1:
        raise ValidationError("version must be an integer >= 1")
    raw_resources = doc.get("resources")
    if not isinstance(raw_resources, list):
        raise ValidationError("resources must be a list")
    entries = [_entry_from_dict(raw) for raw in raw_resources]
    config = RegistryConfig(version=version, resources=entries)
    validate_config(config)
    return config


def _entry_from_dict(raw: dict) -> ResourceEntry:
    if not isinstance(raw, dict):
        raise ValidationError("each resource must be a JSON object")
    if "id" not in raw:
        raise ValidationError("resource entry missing id")
    entry_id = validate_resource_id(raw["id"])
    backend = raw.get("backend")
    if backend not in KNOWN_BACKENDS:
        raise ValidationError(f"unknown backend {backend!r} for resource {entry_id!r}")
    lanes = raw.get("lanes", 1)
    if not isinstance(lanes, int) or lanes < 1:
        raise ValidationError(f"lanes must be an integer >= 1 for resource {entry_id!r}")
    gres_name = str(raw.get("gres_name", GRES_NAME)).lower()
    lease_ms = raw.get("lease_ms")
    if lease_ms is not None and (not isinstance(lease_ms, (int, float)) or lease_ms <= 0):
        raise ValidationError(f"lease_ms must be a positive number for resource {entry_id!r}")
    device = None
    gateway = None
    if backend == BACKEND_SIMULATED:
        device_doc = raw.get("device")
        if not isinstance(device_doc, dict):
            raise ValidationError(f"simulated resource {entry_id!r} requires a device object")
        device = device_spec_from_dict(device_doc, default_lanes=lanes)
    else:
        gateway_doc = raw.get("gateway")
        if not isinstance(gateway_doc, dict):
            raise ValidationError(f"gateway resource {entry_id!r} requires a gateway object")
        gateway = GatewayConfig(
            endpoint=str(gateway_doc.get("endpoint", "")),
            mode=backend,
            auth_env=str(gateway_doc.get("auth_env", "")),
            poll_interval=float(gateway_doc.get("poll_interval", 100.0)),
            probe_timeout=float(gateway_doc.get("probe_timeout", 1000.0)),
        )
    return ResourceEntry(
        id=entry_id,
        backend=backend,
        lanes=lanes,
        maintenance=bool(raw.get("maintenance", False)),
        gres_name=gres_name,
        lease_ms=None if lease_ms is None else float(lease_ms),
        device=device,
        gateway=gateway,
    )


def device_spec_from_dict(doc: dict, default_lanes: int = 1) -> DeviceSpec:
    fault = None
    fault_doc = doc.get("fault_injection")
    if fault_doc is not None:
        fault = FaultInjection(
            fail_task_prob=float(fault_doc.get("fail_task_prob", 0.0)),
            inaccessible=bool(fault_doc.get("inaccessible", False)),
            seed=int(fault_doc.get("seed", 0)),
        )
    return DeviceSpec(
        num_qubits=int(doc.get("num_qubits", 5)),
        num_lanes=int(doc.get("num_lanes", default_lanes)),
        exec_time_per_shot=float(doc.get("exec_time_per_shot", 0.001)),
        fault_injection=fault,
    )


def validate_config(config: RegistryConfig) -> RegistryConfig:
    """Apply registry rules; raises ValidationError naming the first failure."""
    if config.version < 1:
        raise ValidationError("version must be >= 1")
    seen: set[str] = set()
    for entry in config.resources:
        validate_resource_id(entry.id)
        if entry.id in seen:
            raise ValidationError(f"duplicate resource id {entry.id!r}")
        seen.add(entry.id)
        if entry.backend not in KNOWN_BACKENDS:
            raise ValidationError(f"unknown backend {entry.backend!r} for resource {entry.id!r}")
        if entry.lanes < 1:
            raise ValidationError(f"lanes must be >= 1 for resource {entry.id!r}")
        if entry.gres_name.lower() != GRES_NAME:
            raise ValidationError(f'gres_name must be "qpu" for resource {entry.id!r}')
        if entry.backend == BACKEND_SIMULATED:
            if entry.device is None:
                raise ValidationError(f"simulated resource {entry.id!r} requires a device spec")
            try:
                entry.device.validate()
            except ValueError as exc:
                raise ValidationError(f"resource {entry.id!r}: {exc}") from exc
            if entry.device.num_lanes != entry.lanes:
                raise ValidationError(
                    f"resource {entry.id!r}: lanes {entry.lanes} disagree with "
                    f"device num_lanes {entry.device.num_lanes}"
                )
        else:
            if entry.gateway is None:
                raise ValidationError(f"gateway resource {entry.id!r} requires a gateway config")
            entry.gateway.validate()
    return config


def resolve_config_path(explicit: str | None = None, env: Mapping[str, str] | None = None) -> str:
    environ = env if env is not None else os.environ
    if explicit:
        return explicit
    return environ.get(CONFIG_ENV_VAR, DEFAULT_CONFIG_FILENAME)


class Registry:
    """Open backends for a validated config; id-keyed facade over the contract."""

    def __init__(
        self,
        config: RegistryConfig,
        clock: Clock | None = None,
        env: Mapping[str, str] | None = None,
    ) -> None:
        validate_config(config)
        self.clock: Clock = clock if clock is not None else WallClock()
        self._env = env
        self._lock = threading.RLock()
        self._entries: dict[str, ResourceEntry] = {}
        self._backends: dict[str, QuantumResource] = {}
        self._task_index: dict[str, str] = {}
        for entry in config.resources:
            self._backends[entry.id] = self._build(entry)
            self._entries[entry.id] = entry

    def _build(self, entry: ResourceEntry) -> QuantumResource:
        try:
            if entry.backend == BACKEND_SIMULATED:
                assert entry.device is not None
                return PseudoQPU(
                    entry.id,
                    entry.device,
                    clock=self.clock,
                    maintenance=entry.maintenance,
                    lease_duration=entry.lease_ms,
                )
            assert entry.gateway is not None
            return GatewayClient(
                entry.id,
                entry.gateway,
                lanes=entry.lanes,
                clock=self.clock,
                maintenance=entry.maintenance,
                lease_duration=entry.lease_ms,
                env=self._env,
            )
        except Exception as exc:
            raise BackendInitFailed(f"backend init failed for entry {entry.id!r}: {exc}") from exc

    # -- lookup ----------------------------------------------------------------

    def get(self, resource_id: str) -> QuantumResource:
        with self._lock:
            backend = self._backends.get(resource_id)
        if backend is None:
            raise UnknownResource(f"resource {resource_id!r} is not registered")
        return backend

    def ids(self) -> list[str]:
        with self._lock:
            return sorted(self._backends)

    def list(self) -> list[tuple[str, dict[str, str]]]:
        """(id, metadata) pairs, sorted by id."""
        return [
            (resource_id, validate_metadata(self.get(resource_id).metadata()))
            for resource_id in self.ids()
        ]

    def entry(self, resource_id: str) -> ResourceEntry:
        with self._lock:
            entry = self._entries.get(resource_id)
        if entry is None:
            raise UnknownResource(f"resource {resource_id!r} is not registered")
        return entry

    def pool(self, resource_id: str) -> SlotPool:
        backend = self.get(resource_id)
        return backend.pool  # type: ignore[attr-defined]

    def event_log(self, resource_id: str) -> EventLog:
        return self.pool(resource_id).log

    # -- id-keyed contract facade ------------------------------------------------

    def is_accessible(self, resource_id: str) -> bool:
        return self.get(resource_id).is_accessible()

    def acquire(
        self, resource_id: str, timeout: float | None = None, requester: str | None = None
    ) -> AcquisitionToken:
        return self.get(resource_id).acquire(timeout=timeout, requester=requester)

    def release(self, token: AcquisitionToken) -> None:
        self.get(token.resource).release(token)

    def task_start(self, token: AcquisitionToken, payload: TaskPayload) -> str:
        task_id = self.get(token.resource).task_start(token, payload)
        with self._lock:
            self._task_index[task_id] = token.resource
        return task_id

    def task_stop(self, task_id: str) -> None:
        self._task_backend(task_id).task_stop(task_id)

    def task_status(self, task_id: str) -> TaskStatus:
        return self._task_backend(task_id).task_status(task_id)

    def task_result(self, task_id: str) -> TaskResult:
        return self._task_backend(task_id).task_result(task_id)

    def target(self, resource_id: str) -> Target:
        return self.get(resource_id).target()

    def metadata(self, resource_id: str) -> dict[str, str]:
        return self.get(resource_id).metadata()

    def eta(self, task_id: str) -> float | None:
        backend = self._task_backend(task_id)
        if not isinstance(backend, PseudoQPU):
            raise UnknownTask(f"task {task_id!r} is not on a simulated backend")
        return backend.eta(task_id)

    def expire_leases(self, resource_id: str | None = None) -> list[AcquisitionToken]:
        targets = [resource_id] if resource_id is not None else self.ids()
        expired: list[AcquisitionToken] = []
        for rid in targets:
            backend = self.get(rid)
            if hasattr(backend, "expire_leases"):
                expired.extend(backend.expire_leases())
            else:
                expired.extend(backend.pool.expire_leases())  # type: ignore[attr-defined]
        return expired

    def set_maintenance(self, resource_id: str, flag: bool) -> None:
        backend = self.get(resource_id)
        backend.maintenance = flag  # type: ignore[attr-defined]
        with self._lock:
            self._entries[resource_id].maintenance = flag

    def _task_backend(self, task_id: str) -> QuantumResource:
        with self._lock:
            resource_id = self._task_index.get(task_id)
        if resource_id is None:
            raise UnknownTask(f"no task {task_id!r} in this registry")
        return self.get(resource_id)

    # -- lifecycle ----------------------------------------------------------------

    def reload(self, config: RegistryConfig) -> None:
        """Swap in a new config atomically; unchanged entries keep their backends."""
        validate_config(config)
        with self._lock:
            new_backends: dict[str, QuantumResource] = {}
            new_entries: dict[str, ResourceEntry] = {}
            for entry in config.resources:
                if self._entries.get(entry.id) == entry:
                    new_backends[entry.id] = self._backends[entry.id]
                else:
                    new_backends[entry.id] = self._build(entry)
                new_entries[entry.id] = entry
            for resource_id, backend in self._backends.items():
                if new_backends.get(resource_id) is not backend:
                    _close_backend(backend)
            self._backends = new_backends
            self._entries = new_entries

    def close(self) -> None:
        with self._lock:
            for backend in self._backends.values():
                _close_backend(backend)


def _close_backend(backend: QuantumResource) -> None:
    close = getattr(backend, "close", None)
    if close is not None:
        close()


def registry_open(
    config: RegistryConfig, clock: Clock | None = None, env: Mapping[str, str] | None = None
) -> Registry:
    return Registry(config, clock=clock, env=env)
