"""In-process host for the C binding layer.

Every public function here takes primitives (ints, strings, bytes), returns
a (status_code, payload_string) pair, and never lets an exception escape:
the C shim stays a dumb marshalling layer with no knowledge of Python error
types. Sessions hold one open registry plus the token objects issued
through it, keyed by their opaque token strings (token strings are what
crosses the language boundary).

Status codes mirror the enum in the generated C header; keep in sync.
"""

from __future__ import annotations

import itertools
import json
import threading
from base64 import b64encode
from typing import Callable

from . import errors
from .registry import Registry, load_config
from .types import AcquisitionToken, TaskPayload

OK = 0
E_RUNTIME = -1
E_UNKNOWN_RESOURCE = -2
E_RESOURCE_UNAVAILABLE = -3
E_ACQUIRE_TIMEOUT = -4
E_INVALID_TOKEN = -5
E_ALREADY_RELEASED = -6
E_MALFORMED_PAYLOAD = -7
E_UNKNOWN_TASK = -8
E_TASK_FAILED = -9
E_TASK_CANCELLED = -10
E_POOL_CLOSED = -11
E_AUTH_FAILED = -12
E_GATEWAY_UNREACHABLE = -13
# -14 (buffer too small) and -15 (bad argument) originate on the C side.

_CODE_BY_ERROR: list[tuple[type, int]] = [
    (errors.UnknownResource, E_UNKNOWN_RESOURCE),
    (errors.ResourceUnavailable, E_RESOURCE_UNAVAILABLE),
    (errors.AcquireTimeout, E_ACQUIRE_TIMEOUT),
    (errors.InvalidToken, E_INVALID_TOKEN),
    (errors.AlreadyReleased, E_ALREADY_RELEASED),
    (errors.MalformedPayload, E_MALFORMED_PAYLOAD),
    (errors.UnknownTask, E_UNKNOWN_TASK),
    (errors.TaskFailed, E_TASK_FAILED),
    (errors.TaskCancelled, E_TASK_CANCELLED),
    (errors.PoolClosed, E_POOL_CLOSED),
    (errors.AuthFailed, E_AUTH_FAILED),
    (errors.GatewayUnreachable, E_GATEWAY_UNREACHABLE),
]


class _Session:
    def __init__(self, registry: Registry) -> None:
        self.registry = registry
        self.tokens: dict[str, AcquisitionToken] = {}
        self.lock = threading.Lock()

    def token(self, token_string: str) -> AcquisitionToken:
        with self.lock:
            token = self.tokens.get(token_string)
        if token is None:
            raise errors.InvalidToken("token string was not issued by this session")
        return token


_sessions: dict[int, _Session] = {}
_session_ids = itertools.count(1)
_sessions_lock = threading.Lock()


def _session(session_id: int) -> _Session:
    with _sessions_lock:
        session = _sessions.get(session_id)
    if session is None:
        raise errors.QrmiError(f"no open session {session_id}")
    return session


def _guarded(fn: Callable[..., str]) -> Callable[..., tuple[int, str]]:
    def wrapper(*args) -> tuple[int, str]:
        try:
            return OK, fn(*args)
        except Exception as exc:  # the boundary: everything becomes a code
            for error_type, code in _CODE_BY_ERROR:
                if isinstance(exc, error_type):
                    return code, str(exc)
            return E_RUNTIME, f"{type(exc).__name__}: {exc}"

    return wrapper


@_guarded
def open_session(config_path: str) -> str:
    registry = Registry(load_config(config_path))
    session_id = next(_session_ids)
    with _sessions_lock:
        _sessions[session_id] = _Session(registry)
    return str(session_id)


@_guarded
def close_session(session_id: int) -> str:
    with _sessions_lock:
        session = _sessions.pop(session_id, None)
    if session is not None:
        session.registry.close()
    return ""


@_guarded
def is_accessible(session_id: int, resource_id: str) -> str:
    return "1" if _session(session_id).registry.is_accessible(resource_id) else "0"


@_guarded
def acquire(session_id: int, resource_id: str, timeout_ms: float) -> str:
    session = _session(session_id)
    timeout = None if timeout_ms < 0 else timeout_ms
    token = session.registry.acquire(resource_id, timeout=timeout, requester="capi")
    with session.lock:
        session.tokens[token.token] = token
    return token.token


@_guarded
def release(session_id: int, token_string: str) -> str:
    session = _session(session_id)
    session.registry.release(session.token(token_string))
    return ""


@_guarded
def task_start(session_id: int, token_string: str, format: str, body: bytes, shots: int) -> str:
    session = _session(session_id)
    token = session.token(token_string)
    payload = TaskPayload(format=format, body=bytes(body), shots=shots)
    return session.registry.task_start(token, payload)


@_guarded
def task_stop(session_id: int, task_id: str) -> str:
    _session(session_id).registry.task_stop(task_id)
    return ""


@_guarded
def task_status(session_id: int, task_id: str) -> str:
    return _session(session_id).registry.task_status(task_id).value


@_guarded
def task_result(session_id: int, task_id: str) -> str:
    result = _session(session_id).registry.task_result(task_id)
    doc: dict = {"task": result.task, "completed_at": result.completed_at}
    if result.counts is not None:
        doc["counts"] = result.counts
    if result.raw is not None:
        doc["raw_b64"] = b64encode(result.raw).decode("ascii")
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


@_guarded
def target(session_id: int, resource_id: str) -> str:
    return _session(session_id).registry.target(resource_id).to_json()


@_guarded
def metadata(session_id: int, resource_id: str) -> str:
    doc = _session(session_id).registry.metadata(resource_id)
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))
