"""Discrete-event simulator for hybrid quantum-classical clusters.

Jobs arrive into a queue and start only when their classical cores and
quantum units are simultaneously free (gang allocation); each started job
runs the full hook lifecycle against a registry opened on the simulator's
virtual clock, so lock FIFO order, lane schedules and hook ordering are the
production code paths, just driven by simulated time.

Policies: "fifo" is strict arrival order with head-of-line blocking;
"backfill" additionally starts later jobs that fit now and whose estimated
completion cannot delay the queue head (estimates derive from script
contents and are exact for the built-in step vocabulary, treating parallel
submissions as serial, which over-estimates and stays conservative).

Traces are deterministic for identical (cluster, jobs, seed): event
ordering never depends on sampled counts, only on scripted durations. The
seed is carried for bookkeeping and for scenario authors who want to label
runs. Scenario registries must use simulated backends; mixing an HTTP
gateway into virtual time is a SpecError.
"""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass, field
from typing import Callable

from .circuits import parse_circuit
from .clock import VirtualClock
from .errors import QrmiError, SpecError, ValidationError
from .harness import (
    ANY_RESOURCE,
    ContextKind,
    JobContext,
    JobHarness,
    ResourceRequest,
    parse_gres,
    script_program,
)
from .locking import LockEventKind
from .registry import BACKEND_SIMULATED, Registry, RegistryConfig, config_from_dict
from .types import TaskResult

TRACE_KINDS = (
    "Submitted",
    "Started",
    "PrologueDone",
    "TaskDone",
    "EpilogueDone",
    "Finished",
    "Blocked",
)

POLICIES = ("fifo", "backfill")


@dataclass
class NodeSpec:
    name: str
    cores: int


@dataclass
class ClusterSpec:
    nodes: list[NodeSpec]
    registry: RegistryConfig
    scheduling_policy: str = "fifo"


@dataclass
class QpuRequest:
    count: int = 0
    resource: str | None = None


@dataclass
class SimJob:
    job_id: int
    arrival: float
    cores: int = 0
    qpu: QpuRequest = field(default_factory=QpuRequest)
    script: list[dict] = field(default_factory=list)
    duration_classical: float = 0.0


@dataclass(frozen=True)
class TraceEvent:
    time: float
    job_id: int
    kind: str

    def to_json(self) -> dict:
        return {"time": self.time, "job_id": self.job_id, "kind": self.kind}


@dataclass
class SimTrace:
    events: list[TraceEvent]
    makespan: float
    seed: int
    all_finished: bool
    lane_busy: dict[str, float] = field(default_factory=dict)
    node_busy: dict[str, float] = field(default_factory=dict)
    results: dict[int, list[TaskResult]] = field(default_factory=dict)

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(e.to_json()) for e in self.events)

    def of_kind(self, kind: str) -> list[TraceEvent]:
        return [e for e in self.events if e.kind == kind]


def validate_cluster(cluster: ClusterSpec) -> None:
    names = [n.name for n in cluster.nodes]
    if len(names) != len(set(names)):
        raise SpecError("node names must be unique")
    for node in cluster.nodes:
        if node.cores < 1:
            raise SpecError(f"node {node.name!r} must have cores >= 1")
    if cluster.scheduling_policy not in POLICIES:
        raise SpecError(f"unknown scheduling policy {cluster.scheduling_policy!r}")
    for entry in cluster.registry.resources:
        if entry.backend != BACKEND_SIMULATED:
            raise SpecError(
                f"scenario registries must use simulated backends; {entry.id!r} is {entry.backend!r}"
            )


def validate_jobs(cluster: ClusterSpec, jobs: list[SimJob]) -> None:
    total_cores = sum(n.cores for n in cluster.nodes)
    ids = {e.id: e for e in cluster.registry.resources}
    total_lanes = sum(e.lanes for e in cluster.registry.resources)
    seen: set[int] = set()
    for job in jobs:
        if job.job_id in seen:
            raise SpecError(f"duplicate job_id {job.job_id}")
        seen.add(job.job_id)
        if job.cores == 0 and job.qpu.count == 0:
            raise SpecError(f"job {job.job_id}: cores and qpu request cannot both be zero")
        if job.cores > total_cores:
            raise SpecError(f"job {job.job_id}: requests {job.cores} cores, cluster has {total_cores}")
        if job.qpu.resource is not None:
            entry = ids.get(job.qpu.resource)
            if entry is None:
                raise SpecError(f"job {job.job_id}: unknown resource id {job.qpu.resource!r}")
            if job.qpu.count > entry.lanes:
                raise SpecError(
                    f"job {job.job_id}: requests {job.qpu.count} units of {job.qpu.resource!r} "
                    f"which has {entry.lanes} lanes"
                )
        elif job.qpu.count > total_lanes:
            raise SpecError(f"job {job.job_id}: requests {job.qpu.count} qpu units, cluster has {total_lanes}")


class _JobRun:
    def __init__(self, job: SimJob) -> None:
        self.job = job
        self.ctx: JobContext | None = None
        self.program = None
        self.core_plan: dict[str, int] = {}
        self.started_at: float | None = None
        self.est_end: float = 0.0


class _Simulator:
    def __init__(self, cluster: ClusterSpec, jobs: list[SimJob], seed: int) -> None:
        validate_cluster(cluster)
        validate_jobs(cluster, jobs)
        self.cluster = cluster
        self.seed = seed
        self.clock = VirtualClock(0.0)
        self.registry = Registry(cluster.registry, clock=self.clock)
        self.harness = JobHarness(self.registry, env={})
        self.heap: list[tuple[float, int, Callable[[], None]]] = []
        self.seq = itertools.count()
        self.events: list[TraceEvent] = []
        self.free_cores: dict[str, int] = {n.name: n.cores for n in cluster.nodes}
        self.node_busy: dict[str, float] = {n.name: 0.0 for n in cluster.nodes}
        self.queue: list[_JobRun] = []
        self.running: list[_JobRun] = []
        self.finished: list[_JobRun] = []
        self.results: dict[int, list[TaskResult]] = {}
        self.exec_times = {
            e.id: e.device.exec_time_per_shot for e in cluster.registry.resources if e.device
        }

    # -- event plumbing ------------------------------------------------------

    def at(self, t: float, fn: Callable[[], None]) -> None:
        heapq.heappush(self.heap, (t, next(self.seq), fn))

    def emit(self, job_id: int, kind: str) -> None:
        self.events.append(TraceEvent(self.clock.now(), job_id, kind))

    def run(self, jobs: list[SimJob]) -> SimTrace:
        for job in sorted(jobs, key=lambda j: (j.arrival, j.job_id)):
            self.at(job.arrival, lambda j=job: self._arrive(j))
        while self.heap:
            t, _, fn = heapq.heappop(self.heap)
            self.clock.advance_to(t)
            fn()
        makespan = max((e.time for e in self.events if e.kind == "Finished"), default=0.0)
        trace = SimTrace(
            events=self.events,
            makespan=makespan,
            seed=self.seed,
            all_finished=len(self.finished) == len(jobs),
            lane_busy=self._lane_busy(makespan),
            node_busy=dict(self.node_busy),
            results=self.results,
        )
        self.registry.close()
        return trace

    # -- scheduling ------------------------------------------------------------

    def _arrive(self, job: SimJob) -> None:
        run = _JobRun(job)
        self.emit(job.job_id, "Submitted")
        self.queue.append(run)
        self._schedule_pass()
        if run in self.queue:
            self.emit(job.job_id, "Blocked")

    def _schedule_pass(self) -> None:
        while self.queue and self._fits(self.queue[0].job):
            self._start(self.queue.pop(0))
        if self.cluster.scheduling_policy == "backfill" and self.queue:
            shadow = self._shadow_time(self.queue[0].job)
            for run in list(self.queue[1:]):
                if self._fits(run.job) and self.clock.now() + self._estimate(run.job) <= shadow:
                    self.queue.remove(run)
                    self._start(run)

    def _fits(self, job: SimJob) -> bool:
        if sum(self.free_cores.values()) < job.cores:
            return False
        return self._free_units(job) >= job.qpu.count

    def _free_units(self, job: SimJob) -> int:
        if job.qpu.count == 0:
            return 0
        if job.qpu.resource is not None:
            return self.registry.pool(job.qpu.resource).free_count()
        return sum(
            self.registry.pool(rid).free_count()
            for rid in self.registry.ids()
            if self.registry.is_accessible(rid)
        )

    def _start(self, run: _JobRun) -> None:
        job = run.job
        run.started_at = self.clock.now()
        run.est_end = run.started_at + self._estimate(job)
        remaining = job.cores
        for node in sorted(self.free_cores):
            if remaining == 0:
                break
            take = min(self.free_cores[node], remaining)
            if take:
                self.free_cores[node] -= take
                run.core_plan[node] = take
                remaining -= take
        assert remaining == 0
        self.running.append(run)
        self.emit(job.job_id, "Started")
        requested = []
        if job.qpu.count:
            requested.append(ResourceRequest(job.qpu.resource or ANY_RESOURCE, job.qpu.count))
        run.ctx = JobContext(
            job_id=job.job_id,
            requested=requested,
            context_kind=ContextKind.LOCAL,
            acquire_timeout=0.0,  # gang allocation guarantees a free slot
            script=job.script,
        )
        try:
            self.harness.run_prologue(run.ctx)
        except QrmiError as exc:
            raise SpecError(f"job {job.job_id}: prologue failed under gang allocation: {exc}") from exc
        self.emit(job.job_id, "PrologueDone")
        self.harness.run_task_init(run.ctx)
        self.harness.begin_user_task(run.ctx)
        run.program = script_program(run.ctx, self.registry, job.script)
        self._step(run, None, first=True)

    # -- script stepping -----------------------------------------------------------

    def _step(self, run: _JobRun, value: object, first: bool = False) -> None:
        assert run.program is not None and run.ctx is not None
        try:
            request = next(run.program) if first else run.program.send(value)
        except StopIteration as stop:
            self._task_done(run, int(stop.value or 0))
            return
        except QrmiError as exc:
            run.ctx.failure = str(exc)
            self._task_done(run, 1)
            return
        kind, arg = request
        if kind == "sleep":
            self.at(self.clock.now() + float(arg), lambda: self._step(run, None))  # type: ignore[arg-type]
        elif kind == "await_task":
            task_id = str(arg)
            eta = self.registry.eta(task_id)
            when = self.clock.now() if eta is None else eta
            self.at(when, lambda: self._collect(run, task_id))
        else:
            raise SpecError(f"unknown script request {kind!r}")

    def _collect(self, run: _JobRun, task_id: str) -> None:
        assert run.ctx is not None
        try:
            result = self.registry.task_result(task_id)
        except QrmiError as exc:
            run.ctx.failure = str(exc)
            self._task_done(run, 1)
            return
        self._step(run, result)

    def _task_done(self, run: _JobRun, exit_status: int) -> None:
        assert run.ctx is not None
        self.harness.finish_user_task(run.ctx, exit_status)
        self.emit(run.job.job_id, "TaskDone")
        tail = run.job.duration_classical
        if tail > 0:
            self.at(self.clock.now() + tail, lambda: self._finish(run))
        else:
            self._finish(run)

    def _finish(self, run: _JobRun) -> None:
        assert run.ctx is not None
        self.harness.run_epilogue(run.ctx)
        self.emit(run.job.job_id, "EpilogueDone")
        now = self.clock.now()
        assert run.started_at is not None
        for node, taken in run.core_plan.items():
            self.free_cores[node] += taken
            self.node_busy[node] += taken * (now - run.started_at)
        self.running.remove(run)
        self.finished.append(run)
        self.results[run.job.job_id] = list(run.ctx.results)
        self.emit(run.job.job_id, "Finished")
        self._schedule_pass()

    # -- backfill estimates -----------------------------------------------------

    def _estimate(self, job: SimJob) -> float:
        total = job.duration_classical
        exec_time = self._exec_time_for(job)
        for step in job.script:
            op = step.get("op")
            if op == "sleep":
                total += float(step.get("ms", 0))
            elif op == "submit":
                try:
                    circ = parse_circuit(str(step.get("circuit", "")))
                except QrmiError:
                    continue
                total += circ.shots * exec_time
        return total

    def _exec_time_for(self, job: SimJob) -> float:
        if job.qpu.resource is not None:
            return self.exec_times.get(job.qpu.resource, 0.0)
        return max(self.exec_times.values(), default=0.0)

    def _shadow_time(self, head: SimJob) -> float:
        """Earliest time the queue head could start, assuming running jobs
        finish at their estimates."""
        now = self.clock.now()
        frees = sorted(run.est_end for run in self.running)
        cores = sum(self.free_cores.values())
        units = self._free_units(head) if head.qpu.count else 0
        if cores >= head.cores and units >= head.qpu.count:
            return now
        for t in frees:
            # Coarse: assume each finishing job returns everything it took.
            finishing = [r for r in self.running if r.est_end <= t]
            cores = sum(self.free_cores.values()) + sum(r.job.cores for r in finishing)
            units = self._free_units(head) + sum(
                r.job.qpu.count for r in finishing if self._shares_pool(r.job, head)
            )
            if cores >= head.cores and (head.qpu.count == 0 or units >= head.qpu.count):
                return max(t, now)
        return max(frees, default=now)

    @staticmethod
    def _shares_pool(a: SimJob, b: SimJob) -> bool:
        if a.qpu.resource is None or b.qpu.resource is None:
            return True
        return a.qpu.resource == b.qpu.resource

    def _lane_busy(self, makespan: float) -> dict[str, float]:
        busy: dict[str, float] = {}
        for rid in self.registry.ids():
            entry = self.registry.entry(rid)
            for slot in range(entry.lanes):
                busy[f"{rid}/lane{slot}"] = 0.0
            grants: dict[int, float] = {}
            for event in self.registry.event_log(rid).events():
                if event.kind is LockEventKind.GRANTED and event.slot is not None:
                    grants[event.slot] = event.ts
                elif event.kind in (LockEventKind.RELEASED, LockEventKind.EXPIRED) and event.slot is not None:
                    start = grants.pop(event.slot, None)
                    if start is not None:
                        busy[f"{rid}/lane{event.slot}"] += event.ts - start
            for slot, start in grants.items():  # still held at end of run
                busy[f"{rid}/lane{slot}"] += makespan - start
        return busy


def simulate(cluster: ClusterSpec, jobs: list[SimJob], seed: int = 0) -> SimTrace:
    """Run the scenario to completion and return its trace."""
    return _Simulator(cluster, jobs, seed).run(jobs)


def utilization(trace: SimTrace, cluster: ClusterSpec) -> dict[str, float]:
    """Busy fraction per QPU lane and per node over the trace's makespan."""
    if trace.makespan <= 0:
        return {key: 0.0 for key in list(trace.lane_busy) + [n.name for n in cluster.nodes]}
    out: dict[str, float] = {}
    for key, busy in trace.lane_busy.items():
        out[key] = busy / trace.makespan
    for node in cluster.nodes:
        out[node.name] = trace.node_busy.get(node.name, 0.0) / (node.cores * trace.makespan)
    return out


# -- scenario files ------------------------------------------------------------------


@dataclass
class Scenario:
    cluster: ClusterSpec
    jobs: list[SimJob]
    seed: int


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        cluster_doc = doc["cluster"]
        nodes = [NodeSpec(str(n["name"]), int(n["cores"])) for n in cluster_doc.get("nodes", [])]
        registry_doc = cluster_doc["registry"]
        registry = config_from_dict(registry_doc)
        cluster = ClusterSpec(
            nodes=nodes,
            registry=registry,
            scheduling_policy=str(doc.get("policy", "fifo")),
        )
        jobs = []
        for raw in doc.get("jobs", []):
            qpu = QpuRequest(
                count=parse_gres(str(raw["gres"])) if "gres" in raw else 0,
                resource=raw.get("resource"),
            )
            jobs.append(
                SimJob(
                    job_id=int(raw["job_id"]),
                    arrival=float(raw.get("arrival", 0.0)),
                    cores=int(raw.get("cores", 0)),
                    qpu=qpu,
                    script=list(raw.get("script", [])),
                    duration_classical=float(raw.get("duration_classical", 0.0)),
                )
            )
        scenario = Scenario(cluster=cluster, jobs=jobs, seed=int(doc.get("seed", 0)))
    except (KeyError, TypeError, ValueError, AttributeError, ValidationError) as exc:
        raise SpecError(f"malformed scenario: {exc}") from exc
    validate_cluster(scenario.cluster)
    validate_jobs(scenario.cluster, scenario.jobs)
    return scenario


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(doc)
