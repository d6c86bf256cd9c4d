"""Job lifecycle hooks: prologue, task init, user task, epilogue.

Mirrors a scheduler plugin's event-driven callbacks. The prologue checks
secrets and acquires quantum resources (blocking, FIFO); task init injects
the acquired identities into the job environment; the user task program may
only use those injected identifiers; the epilogue releases everything and
never fails the job. Which hooks run depends on the plugin context kind:
allocator runs none, local and remote run all, job_script runs only
prologue and epilogue.

Injected environment contract:
    QRMI_RESOURCE_ID    comma-joined acquired resource ids (deduplicated)
    QRMI_TOKEN_<i>      one variable per acquired token
    QRMI_BACKEND_TYPE   backend types, aligned with QRMI_RESOURCE_ID
    QRMI_OPT_<NAME>     one per plugin option (allowed: qpu-tag, qpu-verbose,
                        qpu-priority)
    QRMI_MIDDLEWARE     present between prologue and epilogue

Task scripts are small JSON step lists; see script_program for the vocabulary.
Secrets are only ever checked for presence and never copied into the env map.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Generator, Mapping

from .circuits import circuit_payload, parse_circuit
from .errors import (
    AlreadyReleased,
    InvalidOption,
    InvalidToken,
    QrmiError,
    ResourceUnavailable,
    SecretMissing,
    TaskScriptError,
    ValidationError,
)
from .registry import GRES_NAME, Registry
from .types import AcquisitionToken, TaskResult

logger = logging.getLogger(__name__)

ANY_RESOURCE = "any"
MIDDLEWARE_ENV = "QRMI_MIDDLEWARE"
ALLOWED_OPTIONS = ("qpu-tag", "qpu-verbose", "qpu-priority")


class JobPhase(enum.Enum):
    CREATED = "Created"
    PROLOGUED = "Prologued"
    TASK_INIT = "TaskInit"
    RUNNING_TASK = "RunningTask"
    EPILOGUED = "Epilogued"
    DONE = "Done"
    FAILED = "Failed"


class ContextKind(enum.Enum):
    ALLOCATOR = "allocator"
    LOCAL = "local"
    REMOTE = "remote"
    JOB_SCRIPT = "job_script"


#: Hooks executed per plugin context kind.
HOOKS_BY_KIND: dict[ContextKind, tuple[str, ...]] = {
    ContextKind.ALLOCATOR: (),
    ContextKind.LOCAL: ("prologue", "task_init", "user_task", "epilogue"),
    ContextKind.REMOTE: ("prologue", "task_init", "user_task", "epilogue"),
    ContextKind.JOB_SCRIPT: ("prologue", "epilogue"),
}


@dataclass
class ResourceRequest:
    resource: str = ANY_RESOURCE
    count: int = 1


@dataclass
class HookResult:
    hook: str
    ok: bool
    detail: str
    duration: float

    def to_json(self) -> dict:
        return {"hook": self.hook, "ok": self.ok, "detail": self.detail, "duration": self.duration}


@dataclass
class JobContext:
    """One scheduler job's view of its quantum resources and lifecycle."""

    job_id: int
    requested: list[ResourceRequest] = field(default_factory=list)
    context_kind: ContextKind = ContextKind.LOCAL
    secrets: dict[str, str] = field(default_factory=dict)  # name -> env var holding it
    options: dict[str, str] = field(default_factory=dict)
    acquire_timeout: float | None = None
    script: list[dict] = field(default_factory=list)
    env: dict[str, str] = field(default_factory=dict)
    tokens: list[AcquisitionToken] = field(default_factory=list)
    phase: JobPhase = JobPhase.CREATED
    phase_history: list[JobPhase] = field(default_factory=list)
    hook_results: list[HookResult] = field(default_factory=list)
    results: list[TaskResult] = field(default_factory=list)
    failure: str | None = None

    @classmethod
    def from_spec(cls, doc: dict) -> "JobContext":
        """Build from the job spec JSON shape:

        {"job_id": 1, "gres": "qpu:2", "resource": "qpu0", "options": {...},
         "secrets": {...}, "script": [...], "context": "local",
         "acquire_timeout": 100}
        """
        count = parse_gres(str(doc.get("gres", f"{GRES_NAME}:1")))
        resource = str(doc.get("resource", ANY_RESOURCE))
        timeout = doc.get("acquire_timeout")
        return cls(
            job_id=int(doc["job_id"]),
            requested=[ResourceRequest(resource=resource, count=count)],
            context_kind=ContextKind(str(doc.get("context", "local"))),
            secrets={str(k): str(v) for k, v in doc.get("secrets", {}).items()},
            options={str(k): str(v) for k, v in doc.get("options", {}).items()},
            acquire_timeout=None if timeout is None else float(timeout),
            script=list(doc.get("script", [])),
        )


def parse_gres(text: str) -> int:
    """Parse "qpu:<count>" (count defaults to 1); the gres name must be qpu."""
    name, _, count_text = text.partition(":")
    if name.lower() != GRES_NAME:
        raise ValidationError(f'gres name must be "{GRES_NAME}", got {name!r}')
    if not count_text:
        return 1
    count = int(count_text)
    if count < 1:
        raise ValidationError(f"gres count must be >= 1, got {count}")
    return count


class JobHarness:
    """Drives JobContexts through the hook sequence against one registry."""

    def __init__(self, registry: Registry, env: Mapping[str, str] | None = None) -> None:
        self.registry = registry
        self._env = env if env is not None else os.environ

    # -- hooks -----------------------------------------------------------------

    def run_prologue(self, ctx: JobContext) -> HookResult:
        """Check secrets, acquire one token per requested unit, mark middleware.

        Any failure releases partial acquisitions, leaves the job Failed with
        zero tokens, and re-raises.
        """
        self._require(ctx, JobPhase.CREATED)
        started = self.registry.clock.now()
        acquired: list[AcquisitionToken] = []
        try:
            for name, env_var in sorted(ctx.secrets.items()):
                if env_var not in self._env:
                    raise SecretMissing(f"secret {name!r}: environment variable {env_var!r} not set")
            for request in ctx.requested:
                for _ in range(request.count):
                    resource_id = self._pick_resource(request.resource)
                    acquired.append(
                        self.registry.acquire(
                            resource_id,
                            timeout=ctx.acquire_timeout,
                            requester=f"job-{ctx.job_id}",
                        )
                    )
        except BaseException as exc:
            for token in acquired:
                self._safe_release(token)
            self._set_phase(ctx, JobPhase.FAILED)
            ctx.failure = str(exc)
            self._record(ctx, "prologue", False, str(exc), started)
            raise
        ctx.tokens = acquired
        ctx.env[MIDDLEWARE_ENV] = "active"
        self._set_phase(ctx, JobPhase.PROLOGUED)
        return self._record(ctx, "prologue", True, f"acquired {len(acquired)} token(s)", started)

    def run_task_init(self, ctx: JobContext) -> HookResult:
        """Inject resource identities and plugin options into the job env."""
        self._require(ctx, JobPhase.PROLOGUED)
        started = self.registry.clock.now()
        try:
            for key in ctx.options:
                if key not in ALLOWED_OPTIONS:
                    raise InvalidOption(f"unknown plugin option {key!r}")
        except InvalidOption as exc:
            ctx.failure = str(exc)
            self._record(ctx, "task_init", False, str(exc), started)
            raise
        resource_order: list[str] = []
        for token in ctx.tokens:
            if token.resource not in resource_order:
                resource_order.append(token.resource)
        ctx.env["QRMI_RESOURCE_ID"] = ",".join(resource_order)
        for i, token in enumerate(ctx.tokens):
            ctx.env[f"QRMI_TOKEN_{i}"] = token.token
        ctx.env["QRMI_BACKEND_TYPE"] = ",".join(
            self.registry.metadata(rid)["backend_type"] for rid in resource_order
        )
        for key, value in ctx.options.items():
            suffix = key.removeprefix("qpu-").replace("-", "_").upper()
            ctx.env[f"QRMI_OPT_{suffix}"] = value
        self._set_phase(ctx, JobPhase.TASK_INIT)
        return self._record(ctx, "task_init", True, "environment configured", started)

    def begin_user_task(self, ctx: JobContext) -> None:
        """Enter the RunningTask phase; drivers call this before stepping scripts."""
        self._require(ctx, JobPhase.TASK_INIT)
        self._set_phase(ctx, JobPhase.RUNNING_TASK)

    def finish_user_task(self, ctx: JobContext, exit_status: int) -> int:
        if exit_status != 0 and ctx.failure is None:
            ctx.failure = f"task script exited {exit_status}"
        return exit_status

    def run_user_task(self, ctx: JobContext, script: list[dict] | None = None) -> int:
        """Run the task program; returns its exit status. Never skips cleanup."""
        self.begin_user_task(ctx)
        steps = ctx.script if script is None else script
        exit_status = run_script_blocking(ctx, self.registry, steps)
        return self.finish_user_task(ctx, exit_status)

    def run_epilogue(self, ctx: JobContext) -> HookResult:
        """Release every held token and clear middleware; never raises."""
        started = self.registry.clock.now()
        if JobPhase.EPILOGUED in ctx.phase_history:
            return self._record(ctx, "epilogue", True, "already epilogued (no-op)", started)
        if ctx.phase is JobPhase.CREATED:
            return self._record(ctx, "epilogue", True, "job never prologued (no-op)", started)
        released = 0
        for token in ctx.tokens:
            if self._safe_release(token):
                released += 1
        ctx.tokens = []
        ctx.env.pop(MIDDLEWARE_ENV, None)
        self._set_phase(ctx, JobPhase.EPILOGUED)
        self._set_phase(ctx, JobPhase.FAILED if ctx.failure else JobPhase.DONE)
        return self._record(ctx, "epilogue", True, f"released {released} token(s)", started)

    def run_job(self, ctx: JobContext, script: list[dict] | None = None) -> JobContext:
        """Full lifecycle for the context's kind; epilogue is guaranteed after
        a successful prologue."""
        hooks = HOOKS_BY_KIND[ctx.context_kind]
        if not hooks:
            self._set_phase(ctx, JobPhase.DONE)
            return ctx
        try:
            self.run_prologue(ctx)
        except QrmiError:
            return ctx  # zero tokens held; nothing to tear down
        try:
            if "task_init" in hooks:
                try:
                    self.run_task_init(ctx)
                except QrmiError:
                    pass  # failure recorded; fall through to epilogue
                else:
                    if "user_task" in hooks:
                        self.run_user_task(ctx, script)
        finally:
            self.run_epilogue(ctx)
        return ctx

    # -- helpers -----------------------------------------------------------------

    def _pick_resource(self, requested: str) -> str:
        if requested != ANY_RESOURCE:
            return requested
        candidates = [rid for rid in self.registry.ids() if self.registry.is_accessible(rid)]
        if not candidates:
            raise ResourceUnavailable("no accessible quantum resource in the registry")
        for rid in candidates:
            if self.registry.pool(rid).free_count() > 0:
                return rid
        return candidates[0]

    def _safe_release(self, token: AcquisitionToken) -> bool:
        try:
            self.registry.release(token)
            return True
        except (AlreadyReleased, InvalidToken, QrmiError) as exc:
            logger.warning("release of %s on %s swallowed: %s", token.slot, token.resource, exc)
            return False

    def _require(self, ctx: JobContext, phase: JobPhase) -> None:
        if ctx.phase is not phase:
            raise ValueError(f"job {ctx.job_id}: hook requires phase {phase.value}, in {ctx.phase.value}")

    def _set_phase(self, ctx: JobContext, phase: JobPhase) -> None:
        ctx.phase = phase
        ctx.phase_history.append(phase)

    def _record(self, ctx: JobContext, hook: str, ok: bool, detail: str, started: float) -> HookResult:
        result = HookResult(hook, ok, detail, self.registry.clock.now() - started)
        ctx.hook_results.append(result)
        return result


def hook_trace_jsonl(ctx: JobContext) -> str:
    return "\n".join(json.dumps(r.to_json()) for r in ctx.hook_results)


# -- task script programs ---------------------------------------------------------

ScriptRequest = tuple[str, object]


def script_program(
    ctx: JobContext, registry: Registry, steps: list[dict]
) -> Generator[ScriptRequest, object, int]:
    """Interpret a task script, yielding wait requests to the driver.

    The program only consumes identities injected into ctx.env, never
    registry-level names. Yields ("await_task", task_id) expecting the
    TaskResult sent back, or ("sleep", ms) expecting None. Returns the exit
    status.

    Step vocabulary:
        {"op": "submit", "circuit": "<text>", "token": 0}
        {"op": "await_result", "task": -1}
        {"op": "sleep", "ms": 10}
        {"op": "stop_task", "task": -1}
        {"op": "exit", "code": 1}
    """
    tokens = _tokens_from_env(ctx)
    task_ids: list[str] = []
    for step in steps:
        op = str(step.get("op", ""))
        if op == "submit":
            if not tokens:
                raise TaskScriptError(1, "script submitted without an acquired token")
            token = tokens[int(step.get("token", 0))]
            circ = parse_circuit(str(step["circuit"]))
            task_ids.append(registry.task_start(token, circuit_payload(circ)))
        elif op == "await_result":
            task_id = task_ids[int(step.get("task", -1))]
            result = yield ("await_task", task_id)
            assert isinstance(result, TaskResult)
            ctx.results.append(result)
        elif op == "sleep":
            yield ("sleep", float(step.get("ms", 0)))
        elif op == "stop_task":
            registry.task_stop(task_ids[int(step.get("task", -1))])
        elif op == "exit":
            return int(step.get("code", 1))
        else:
            raise TaskScriptError(1, f"unknown script op {op!r}")
    return 0


def _tokens_from_env(ctx: JobContext) -> list[AcquisitionToken]:
    """Resolve env-injected token strings back to token objects.

    Scripts address tokens through QRMI_TOKEN_<i>; resolving through the env
    (not ctx.tokens directly) keeps the user task bound to exactly what task
    init published.
    """
    by_string = {token.token: token for token in ctx.tokens}
    out: list[AcquisitionToken] = []
    i = 0
    while (value := ctx.env.get(f"QRMI_TOKEN_{i}")) is not None:
        out.append(by_string[value])
        i += 1
    return out


def run_script_blocking(ctx: JobContext, registry: Registry, steps: list[dict]) -> int:
    """Wall-clock script driver: waits block the calling thread."""
    program = script_program(ctx, registry, steps)
    try:
        request = next(program)
        while True:
            kind, arg = request
            if kind == "await_task":
                value: object = registry.task_result(str(arg))
                request = program.send(value)
            elif kind == "sleep":
                time.sleep(float(arg) / 1000.0)  # type: ignore[arg-type]
                request = program.send(None)
            else:
                raise TaskScriptError(1, f"unknown script request {kind!r}")
    except StopIteration as stop:
        return int(stop.value or 0)
    except QrmiError as exc:
        ctx.failure = str(exc)
        return 1
