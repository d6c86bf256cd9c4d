"""Domain types shared by every backend implementation.

A resource is the scheduler-side name of one physical quantum device plus a
lane (parallelism slot) count. Callers hold an AcquisitionToken as proof of
slot ownership; tasks flow through a five-state lifecycle; Target and
metadata describe the device to compilers and admins.
"""

from __future__ import annotations

import base64
import enum
import json
import re
from dataclasses import dataclass, field

from .errors import ValidationError

RESOURCE_ID_PATTERN = re.compile(r"^[A-Za-z0-9_.-]{1,128}$")

#: Metadata maps must contain at least these keys.
REQUIRED_METADATA_KEYS = ("backend_type", "num_lanes")


def validate_resource_id(value: str) -> str:
    if not isinstance(value, str) or not RESOURCE_ID_PATTERN.match(value):
        raise ValidationError(f"invalid resource id {value!r}: must match [A-Za-z0-9_.-]{{1,128}}")
    return value


class TaskStatus(enum.Enum):
    """Lifecycle states of one quantum task."""

    QUEUED = "Queued"
    RUNNING = "Running"
    COMPLETED = "Completed"
    FAILED = "Failed"
    CANCELLED = "Cancelled"

    @property
    def is_terminal(self) -> bool:
        return self in _TERMINAL

    def __str__(self) -> str:
        return self.value


_TERMINAL = frozenset({TaskStatus.COMPLETED, TaskStatus.FAILED, TaskStatus.CANCELLED})

#: Single-step legal transitions of the task state machine.
LEGAL_TRANSITIONS: dict[TaskStatus, frozenset[TaskStatus]] = {
    TaskStatus.QUEUED: frozenset({TaskStatus.RUNNING, TaskStatus.CANCELLED}),
    TaskStatus.RUNNING: frozenset({TaskStatus.COMPLETED, TaskStatus.FAILED, TaskStatus.CANCELLED}),
    TaskStatus.COMPLETED: frozenset(),
    TaskStatus.FAILED: frozenset(),
    TaskStatus.CANCELLED: frozenset(),
}


def is_legal_transition(a: TaskStatus, b: TaskStatus) -> bool:
    return b in LEGAL_TRANSITIONS[a]


def can_reach(a: TaskStatus, b: TaskStatus) -> bool:
    """True if b is reachable from a along legal transitions (reflexive)."""
    if a == b:
        return True
    seen: set[TaskStatus] = set()
    frontier = [a]
    while frontier:
        state = frontier.pop()
        for nxt in LEGAL_TRANSITIONS[state]:
            if nxt == b:
                return True
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return False


@dataclass(frozen=True)
class AcquisitionToken:
    """Proof of exclusive ownership of one lane slot on one resource.

    The token string is opaque and unique for the process lifetime; slot is
    the lane index the holder owns. lease_expiry is None for an infinite
    lease (the default).
    """

    token: str
    resource: str
    slot: int
    acquired_at: float
    lease_expiry: float | None = None


@dataclass
class TaskPayload:
    """One quantum execution request.

    format "circuit-v1" bodies parse under the circuit grammar (see
    qrmi.circuits); "opaque" bodies are passed through untouched. For
    circuit payloads, shots must agree with the circuit body.
    """

    format: str
    body: bytes
    shots: int = 1
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass
class TaskResult:
    """Outcome of a completed task.

    counts is set for "circuit-v1" payloads (bitstring -> occurrences, keys
    are num_qubits long, values sum to shots); raw is set for "opaque"
    payloads.
    """

    task: str
    counts: dict[str, int] | None = None
    raw: bytes | None = None
    completed_at: float = 0.0


@dataclass(frozen=True)
class Target:
    """Vendor-specific serialized device constraint data for compilers."""

    resource: str
    format: str
    body: bytes
    version: int = 1

    def to_json(self) -> str:
        return json.dumps(
            {
                "resource": self.resource,
                "format": self.format,
                "body": base64.b64encode(self.body).decode("ascii"),
                "version": self.version,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Target":
        raw = json.loads(text)
        return cls(
            resource=raw["resource"],
            format=raw["format"],
            body=base64.b64decode(raw["body"]),
            version=int(raw["version"]),
        )


def validate_metadata(entries: dict[str, str]) -> dict[str, str]:
    missing = [k for k in REQUIRED_METADATA_KEYS if k not in entries]
    if missing:
        raise ValidationError(f"metadata missing required keys: {missing}")
    return entries


def canonical_counts_json(counts: dict[str, int]) -> str:
    """Stable byte representation of a counts map, for goldens and the wire."""
    return json.dumps(counts, sort_keys=True, separators=(",", ":"))
