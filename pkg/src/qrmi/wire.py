"""Wire-level vocabulary shared by the gateway client and the mock service.

Wire job states map one-to-one onto task lifecycle states, so a status that
round-trips through the protocol can never produce an illegal transition.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass

from .types import TaskStatus

STATUS_TO_WIRE: dict[TaskStatus, str] = {
    TaskStatus.QUEUED: "QUEUED",
    TaskStatus.RUNNING: "RUNNING",
    TaskStatus.COMPLETED: "COMPLETED",
    TaskStatus.FAILED: "FAILED",
    TaskStatus.CANCELLED: "CANCELLED",
}

WIRE_TO_STATUS: dict[str, TaskStatus] = {v: k for k, v in STATUS_TO_WIRE.items()}

MODE_DIRECT_ACCESS = "direct-access"
MODE_CLOUD_QUEUE = "cloud-queue"
GATEWAY_MODES = (MODE_DIRECT_ACCESS, MODE_CLOUD_QUEUE)


@dataclass
class WireJob:
    """Provider-side view of one submitted job."""

    id: str
    state: str
    lane: int | None = None
    reason: str | None = None

    def to_json(self) -> dict:
        doc: dict = {"id": self.id, "state": self.state}
        if self.lane is not None:
            doc["lane"] = self.lane
        if self.reason is not None:
            doc["reason"] = self.reason
        return doc


def encode_body(body: bytes) -> str:
    return base64.b64encode(body).decode("ascii")


def decode_body(text: str) -> bytes:
    return base64.b64decode(text)
