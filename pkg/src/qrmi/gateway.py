"""HTTP client backend for vendor gateways (direct-access and cloud-queue).

Slot acquisition stays scheduler-side: the client owns a local SlotPool and
the wire only carries job execution. Submissions in direct-access mode bind
the job to the token's lane; cloud-queue submissions enter the provider's
own queue and the lane is the provider's business.

Transient faults (connection errors, 5xx) are retried up to three attempts
with exponential backoff; 4xx responses are never retried. Every submit
carries a client-generated idempotency key, so a retried submit cannot run
twice. Bearer secrets are read from the environment variable named in the
config at call time and are never persisted.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
import uuid
from dataclasses import dataclass
from typing import Mapping
from urllib.parse import urlparse

import requests

from .clock import Clock, WallClock
from .errors import (
    AuthFailed,
    GatewayUnreachable,
    InvalidToken,
    MalformedPayload,
    ResourceUnavailable,
    TaskCancelled,
    TaskFailed,
    UnknownTask,
    ValidationError,
)
from .locking import EventLog, SlotPool
from .pseudo_qpu import TARGET_FORMAT
from .resource import QuantumResource
from .types import AcquisitionToken, Target, TaskPayload, TaskResult, TaskStatus
from .wire import GATEWAY_MODES, MODE_CLOUD_QUEUE, MODE_DIRECT_ACCESS, WIRE_TO_STATUS, encode_body

logger = logging.getLogger(__name__)

_RETRY_ATTEMPTS = 3
_RETRY_BACKOFF_MS = 100.0


@dataclass
class GatewayConfig:
    endpoint: str
    mode: str
    auth_env: str
    poll_interval: float = 100.0  # ms between status polls (cloud-queue)
    probe_timeout: float = 1000.0  # ms budget for the health probe

    def validate(self) -> None:
        parsed = urlparse(self.endpoint)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ValidationError(f"endpoint must be an http(s) URL, got {self.endpoint!r}")
        if not self.auth_env:
            raise ValidationError("auth_env must name an environment variable")
        if self.mode not in GATEWAY_MODES:
            raise ValidationError(f"unknown gateway mode {self.mode!r}")
        if self.poll_interval <= 0:
            raise ValidationError("poll_interval must be > 0")


class GatewayClient(QuantumResource):
    """QuantumResource backed by a remote gateway plus a local slot pool."""

    def __init__(
        self,
        resource_id: str,
        config: GatewayConfig,
        lanes: int = 1,
        clock: Clock | None = None,
        maintenance: bool = False,
        lease_duration: float | None = None,
        log: EventLog | None = None,
        env: Mapping[str, str] | None = None,
    ) -> None:
        config.validate()
        self.resource_id = resource_id
        self.config = config
        self.lanes = lanes
        self.maintenance = maintenance
        self.clock: Clock = clock if clock is not None else WallClock()
        self.pool = SlotPool(resource_id, lanes, self.clock, lease_duration=lease_duration, log=log)
        self._env = env if env is not None else os.environ
        self._session = requests.Session()
        self._lock = threading.Lock()
        self._token_tasks: dict[str, list[str]] = {}
        self._retry_backoff_ms = _RETRY_BACKOFF_MS  # tests shrink this

    @property
    def backend_type(self) -> str:
        return self.config.mode

    # -- QuantumResource contract -------------------------------------------

    def is_accessible(self) -> bool:
        if self.maintenance:
            return False
        try:
            # Fresh connection on purpose: probing a pooled keep-alive socket
            # can report a dead server as live.
            resp = requests.get(
                f"{self.config.endpoint}/health", timeout=self.config.probe_timeout / 1000.0
            )
            return resp.status_code == 200
        except requests.RequestException:
            return False

    def acquire(self, requester: str | None = None, timeout: float | None = None) -> AcquisitionToken:
        if not self.is_accessible():
            raise ResourceUnavailable(f"resource {self.resource_id} is not accessible")
        return self.pool.acquire(requester, timeout)

    def release(self, token: AcquisitionToken) -> None:
        self.pool.release(token)
        with self._lock:
            task_ids = self._token_tasks.pop(token.token, [])
        for task_id in task_ids:
            try:
                self.task_stop(task_id)
            except Exception as exc:  # cleanup is best effort once the slot is free
                logger.warning("cancel of %s after release failed: %s", task_id, exc)

    def task_start(self, token: AcquisitionToken, payload: TaskPayload) -> str:
        if not isinstance(token, AcquisitionToken) or token.resource != self.resource_id:
            raise InvalidToken(f"token does not belong to {self.resource_id}")
        if not self.pool.is_active(token):
            raise InvalidToken(f"token for {self.resource_id} is released or expired")
        self._secret()  # fail fast before any network traffic
        doc: dict = {
            "format": payload.format,
            "body": encode_body(payload.body),
            "shots": payload.shots,
            "idempotency_key": str(uuid.uuid4()),
        }
        if self.config.mode == MODE_DIRECT_ACCESS:
            doc["lane"] = token.slot
        resp = self._request("POST", "/v1/jobs", body=doc)
        task_id = str(resp["id"])
        with self._lock:
            self._token_tasks.setdefault(token.token, []).append(task_id)
        return task_id

    def task_stop(self, task_id: str) -> None:
        self._request("DELETE", f"/v1/jobs/{task_id}")

    def task_status(self, task_id: str) -> TaskStatus:
        resp = self._request("GET", f"/v1/jobs/{task_id}")
        return WIRE_TO_STATUS[str(resp["state"])]

    def task_result(self, task_id: str) -> TaskResult:
        if self.config.mode == MODE_CLOUD_QUEUE:
            interval = self.config.poll_interval
        else:
            interval = min(self.config.poll_interval, 10.0)
        while True:
            job = self._request("GET", f"/v1/jobs/{task_id}")
            status = WIRE_TO_STATUS[str(job["state"])]
            if status is TaskStatus.COMPLETED:
                result = self._request("GET", f"/v1/jobs/{task_id}/result")
                counts = {str(k): int(v) for k, v in result["counts"].items()}
                return TaskResult(task=task_id, counts=counts, completed_at=self.clock.now())
            if status is TaskStatus.FAILED:
                raise TaskFailed(str(job.get("reason") or "remote task failed"))
            if status is TaskStatus.CANCELLED:
                raise TaskCancelled(f"task {task_id} was cancelled remotely")
            time.sleep(interval / 1000.0)

    def target(self) -> Target:
        doc = self._request("GET", "/v1/target")
        body = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return Target(resource=self.resource_id, format=TARGET_FORMAT, body=body, version=1)

    def metadata(self) -> dict[str, str]:
        return {
            "backend_type": self.config.mode,
            "num_lanes": str(self.lanes),
            "endpoint": self.config.endpoint,
        }

    def close(self) -> None:
        self.pool.close()
        self._session.close()

    # -- wire plumbing ---------------------------------------------------------

    def _secret(self) -> str:
        secret = self._env.get(self.config.auth_env)
        if not secret:
            raise AuthFailed(
                f"environment variable {self.config.auth_env!r} holding the bearer secret is not set"
            )
        return secret

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        url = f"{self.config.endpoint}{path}"
        headers = {"Authorization": f"Bearer {self._secret()}"}
        last_error: Exception | None = None
        for attempt in range(_RETRY_ATTEMPTS):
            if attempt:
                time.sleep(self._retry_backoff_ms * 2 ** (attempt - 1) / 1000.0)
            try:
                resp = self._session.request(method, url, json=body, headers=headers, timeout=10)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code >= 500:  # retriable server fault
                last_error = GatewayUnreachable(f"{method} {path} -> {resp.status_code}")
                continue
            return self._check(resp, method, path)
        raise GatewayUnreachable(f"{method} {url} failed after {_RETRY_ATTEMPTS} attempts: {last_error}")

    def _check(self, resp: requests.Response, method: str, path: str) -> dict:
        if resp.status_code == 401:
            raise AuthFailed(f"gateway rejected the bearer secret for {method} {path}")
        if resp.status_code == 400:
            raise MalformedPayload(self._error_text(resp))
        if resp.status_code == 404:
            raise UnknownTask(self._error_text(resp))
        if resp.status_code == 409:
            raise TaskFailed(f"result not available: {self._error_text(resp)}")
        if resp.status_code >= 400:
            raise GatewayUnreachable(f"{method} {path} -> {resp.status_code}")
        return resp.json()

    @staticmethod
    def _error_text(resp: requests.Response) -> str:
        try:
            return str(resp.json().get("error") or resp.json())
        except ValueError:
            return resp.text
