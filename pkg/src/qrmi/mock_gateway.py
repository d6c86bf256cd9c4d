"""Embedded mock vendor service speaking the gateway wire protocol over HTTP.

Stands in for production provider endpoints so the gateway client can be
exercised end to end. Two modes: "direct-access" executes each job on the
lane the caller names; "cloud-queue" ignores caller lanes and dispatches in
submission order to the earliest-available lane, so with one lane the
provider runs strictly FIFO. Both front a PseudoQPU on the wall clock.

Fault injection is scripted through the in-process handle: drop the next N
connections without an HTTP response, or force 401 on authenticated routes.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import BindFailed, MalformedPayload, QrmiError, UnknownTask
from .pseudo_qpu import DeviceSpec, PseudoQPU
from .types import TaskPayload, TaskStatus
from .wire import (
    GATEWAY_MODES,
    MODE_DIRECT_ACCESS,
    STATUS_TO_WIRE,
    WireJob,
    decode_body,
)

logger = logging.getLogger(__name__)

_JOB_PATH = re.compile(r"^/v1/jobs/([0-9a-fA-F-]+)$")
_RESULT_PATH = re.compile(r"^/v1/jobs/([0-9a-fA-F-]+)/result$")


class MockGateway:
    """Running mock service handle; start() binds, stop() tears down."""

    def __init__(
        self,
        spec: DeviceSpec,
        mode: str = MODE_DIRECT_ACCESS,
        port: int = 0,
        host: str = "127.0.0.1",
        secret: str | None = None,
    ) -> None:
        if mode not in GATEWAY_MODES:
            raise ValueError(f"unknown gateway mode {mode!r}")
        self.mode = mode
        self.secret = secret
        self.device = PseudoQPU(f"mock-{mode}", spec)
        self._jobs: dict[str, WireJob] = {}
        self._idempotency: dict[str, str] = {}
        self._lock = threading.Lock()
        self._drop_next = 0
        self._force_401 = False
        self.requests_seen = 0
        self._host = host
        self._requested_port = port
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> "MockGateway":
        handler = _build_handler(self)
        try:
            self._server = ThreadingHTTPServer((self._host, self._requested_port), handler)
        except OSError as exc:
            raise BindFailed(f"cannot bind {self._host}:{self._requested_port}: {exc}") from exc
        self._thread = threading.Thread(
            target=self._server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None
        self.device.close()

    @property
    def port(self) -> int:
        assert self._server is not None, "gateway not started"
        return self._server.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self._host}:{self.port}"

    # -- fault scripting -------------------------------------------------------

    def script_faults(self, drop_next: int = 0, force_401: bool | None = None) -> None:
        with self._lock:
            if drop_next:
                self._drop_next += drop_next
            if force_401 is not None:
                self._force_401 = force_401

    def _take_drop(self) -> bool:
        with self._lock:
            if self._drop_next > 0:
                self._drop_next -= 1
                return True
            return False

    def _forced_401(self) -> bool:
        with self._lock:
            return self._force_401

    # -- protocol actions ------------------------------------------------------

    def submit(self, doc: dict) -> tuple[int, dict]:
        key = doc.get("idempotency_key")
        with self._lock:
            if key is not None and key in self._idempotency:
                job = self._jobs[self._idempotency[key]]
                return 201, self._job_doc(job)
        try:
            payload = TaskPayload(
                format=str(doc["format"]),
                body=decode_body(str(doc["body"])),
                shots=int(doc.get("shots", 1)),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise MalformedPayload(f"bad submit document: {exc}") from exc
        if self.mode == MODE_DIRECT_ACCESS:
            if "lane" not in doc:
                raise MalformedPayload("direct-access submissions must carry a lane")
            lane = int(doc["lane"])
        else:
            lane = self.device.least_loaded_lane()
        task_id = self.device.run_lane_task(lane, payload)
        job = WireJob(id=task_id, state="QUEUED", lane=lane)
        with self._lock:
            self._jobs[task_id] = job
            if key is not None:
                self._idempotency[key] = task_id
        return 201, self._job_doc(job)

    def job_status(self, job_id: str) -> dict:
        job = self._find(job_id)
        return self._job_doc(job)

    def job_result(self, job_id: str) -> tuple[int, dict]:
        job = self._find(job_id)
        status = self.device.task_status(job.id)
        if status is not TaskStatus.COMPLETED:
            return 409, {"state": STATUS_TO_WIRE[status]}
        result = self.device.task_result(job.id)
        return 200, {"counts": result.counts}

    def cancel(self, job_id: str) -> dict:
        job = self._find(job_id)
        self.device.task_stop(job.id)
        return self._job_doc(job)

    def target_doc(self) -> dict:
        return {
            "basis_gates": list(self.device.spec.basis_gates),
            "coupling": "all-to-all",
            "num_qubits": self.device.spec.num_qubits,
        }

    def _find(self, job_id: str) -> WireJob:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise UnknownTask(f"no job {job_id!r}")
        return job

    def _job_doc(self, job: WireJob) -> dict:
        status = self.device.task_status(job.id)
        job.state = STATUS_TO_WIRE[status]
        if status is TaskStatus.FAILED:
            job.reason = self.device.failure_reason(job.id)
        doc = job.to_json()
        if self.mode != MODE_DIRECT_ACCESS:
            doc.pop("lane", None)
        return doc


def _build_handler(gateway: MockGateway):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt: str, *args) -> None:
            logger.debug("mock-gateway %s", fmt % args)

        def _drop(self) -> bool:
            if gateway._take_drop():
                # Abort the TCP conversation mid-flight: the client sees a
                # connection error, which is the retriable failure class.
                self.close_connection = True
                self.connection.close()
                return True
            return False

        def _send(self, code: int, doc: dict) -> None:
            body = json.dumps(doc).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _authorized(self) -> bool:
            if gateway._forced_401():
                return False
            if gateway.secret is None:
                return True
            header = self.headers.get("Authorization", "")
            return header == f"Bearer {gateway.secret}"

        def _gate(self) -> bool:
            """Common entry: fault script, then auth for /v1 routes."""
            with gateway._lock:
                gateway.requests_seen += 1
            if self._drop():
                return False
            if self.path.startswith("/v1") and not self._authorized():
                self._send(401, {"error": "unauthorized"})
                return False
            return True

        def _read_json(self) -> dict:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length) if length else b"{}"
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MalformedPayload(f"request body is not JSON: {exc}") from exc
            if not isinstance(doc, dict):
                raise MalformedPayload("request body must be a JSON object")
            return doc

        def do_GET(self) -> None:
            if not self._gate():
                return
            try:
                if self.path == "/health":
                    self._send(200, {"status": "ok"})
                elif self.path == "/v1/target":
                    self._send(200, gateway.target_doc())
                elif match := _RESULT_PATH.match(self.path):
                    code, doc = gateway.job_result(match.group(1))
                    self._send(code, doc)
                elif match := _JOB_PATH.match(self.path):
                    self._send(200, gateway.job_status(match.group(1)))
                else:
                    self._send(404, {"error": "no such route"})
            except QrmiError as exc:
                self._send_error(exc)

        def do_POST(self) -> None:
            if not self._gate():
                return
            try:
                if self.path == "/v1/jobs":
                    code, doc = gateway.submit(self._read_json())
                    self._send(code, doc)
                else:
                    self._send(404, {"error": "no such route"})
            except QrmiError as exc:
                self._send_error(exc)

        def do_DELETE(self) -> None:
            if not self._gate():
                return
            try:
                if match := _JOB_PATH.match(self.path):
                    self._send(200, gateway.cancel(match.group(1)))
                else:
                    self._send(404, {"error": "no such route"})
            except QrmiError as exc:
                self._send_error(exc)

        def _send_error(self, exc: QrmiError) -> None:
            if isinstance(exc, UnknownTask):
                self._send(404, {"error": str(exc)})
            elif isinstance(exc, MalformedPayload):
                self._send(400, {"error": str(exc)})
            else:
                self._send(500, {"error": str(exc)})

    return Handler


def mock_server_run(
    spec: DeviceSpec,
    mode: str = MODE_DIRECT_ACCESS,
    port: int = 0,
    secret: str | None = None,
) -> MockGateway:
    """Start a mock vendor service; raises BindFailed if the port is taken."""
    return MockGateway(spec, mode=mode, port=port, secret=secret).start()
