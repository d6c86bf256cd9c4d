"""Operator and user command line.

Subcommands:
    validate      check a registry config file
    run           acquire -> run one payload -> await result -> release
    simulate      run a cluster scenario and print makespan/utilization
    mock-gateway  serve the vendor wire protocol against an embedded device

Every command is non-interactive and exits with a documented code; pass
--json for machine-parseable stdout.

Exit codes:
    0  success
    1  jobs left unfinished (simulate)
    2  config/scenario parse error
    3  config validation error
    4  acquisition failed (timeout or resource unavailable)
    5  task failed or was cancelled
    6  scenario spec error
    7  mock gateway could not bind its port
    130  interrupted
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys

from .circuits import CircuitV1, circuit_payload, parse_circuit
from .errors import (
    AcquireTimeout,
    MalformedPayload,
    ParseError,
    QrmiError,
    ResourceUnavailable,
    SpecError,
    TaskCancelled,
    TaskFailed,
    ValidationError,
)
from .mock_gateway import MockGateway
from .registry import Registry, device_spec_from_dict, load_config, resolve_config_path
from .sim import load_scenario, simulate, utilization
from .types import canonical_counts_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNFINISHED = 1
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_ACQUIRE = 4
EXIT_TASK_FAILED = 5
EXIT_SPEC = 6
EXIT_BIND = 7
EXIT_INTERRUPT = 130


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qrmi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="validate a registry config file")
    p_validate.add_argument("config", help="path to qrmi_config.json")
    p_validate.add_argument("--json", action="store_true", help="machine-parseable output")
    p_validate.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="run one payload against a resource")
    p_run.add_argument("--config", help="registry config (default: $QRMI_CONFIG or ./qrmi_config.json)")
    p_run.add_argument("--resource", help="resource id (default: first accessible)")
    p_run.add_argument("--payload", required=True, help="circuit text file")
    p_run.add_argument("--shots", type=int, help="override the payload's shot count")
    p_run.add_argument("--timeout", type=float, help="acquire timeout in ms")
    p_run.add_argument("--json", action="store_true", help="machine-parseable output")
    p_run.set_defaults(func=cmd_run)

    p_sim = sub.add_parser("simulate", help="run a cluster scenario")
    p_sim.add_argument("scenario", help="scenario JSON file")
    p_sim.add_argument("--trace", help="write the event trace to this JSON-lines file")
    p_sim.add_argument("--json", action="store_true", help="machine-parseable output")
    p_sim.set_defaults(func=cmd_simulate)

    p_gw = sub.add_parser("mock-gateway", help="serve the mock vendor gateway")
    p_gw.add_argument("--port", type=int, default=0, help="listen port (default: ephemeral)")
    p_gw.add_argument("--mode", choices=("direct-access", "cloud-queue"), default="direct-access")
    p_gw.add_argument("--device", help="DeviceSpec JSON file (default: 5 qubits, 2 lanes)")
    p_gw.add_argument(
        "--auth-env",
        default="QRMI_GATEWAY_SECRET",
        help="env var holding the expected bearer secret; auth is off when unset",
    )
    p_gw.add_argument("--json", action="store_true", help="machine-parseable output")
    p_gw.set_defaults(func=cmd_mock_gateway)
    return parser


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.json:
        print(json.dumps({"ok": True, "resources": len(config.resources)}))
    else:
        print(f"OK: {len(config.resources)} resources")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_config(resolve_config_path(args.config))
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        with open(args.payload, "r", encoding="utf-8") as fh:
            circuit = parse_circuit(fh.read())
    except OSError as exc:
        print(f"cannot read payload: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except MalformedPayload as exc:
        print(f"payload error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if args.shots is not None:
        circuit = CircuitV1(circuit.num_qubits, circuit.ops, shots=args.shots, seed=circuit.seed)

    registry = Registry(config)
    try:
        code, payload_doc = run_once(registry, args.resource, circuit, timeout=args.timeout)
        if code == EXIT_OK and payload_doc is not None:
            if args.json:
                print(json.dumps(payload_doc))
            else:
                print(canonical_counts_json(payload_doc["counts"]))
        return code
    finally:
        registry.close()


def run_once(
    registry: Registry,
    resource_id: str | None,
    circuit: CircuitV1,
    timeout: float | None = None,
) -> tuple[int, dict | None]:
    """Acquire -> start -> await -> release, with release guaranteed.

    Returns (exit code, result document). On interrupt the in-flight task is
    stopped and the token released before returning EXIT_INTERRUPT.
    """
    resource_id = resource_id or _first_accessible(registry)
    if resource_id is None:
        print("no accessible resource", file=sys.stderr)
        return EXIT_ACQUIRE, None
    try:
        token = registry.acquire(resource_id, timeout=timeout, requester="cli")
    except (AcquireTimeout, ResourceUnavailable) as exc:
        print(f"acquire failed: {exc}", file=sys.stderr)
        return EXIT_ACQUIRE, None
    task_id = None
    try:
        task_id = registry.task_start(token, circuit_payload(circuit))
        result = registry.task_result(task_id)
    except (TaskFailed, TaskCancelled) as exc:
        print(f"task failed: {exc}", file=sys.stderr)
        return EXIT_TASK_FAILED, None
    except KeyboardInterrupt:
        if task_id is not None:
            registry.task_stop(task_id)
        return EXIT_INTERRUPT, None
    finally:
        _safe_release(registry, token)
    counts = result.counts or {}
    return EXIT_OK, {"resource": resource_id, "task_id": task_id, "counts": counts}


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.scenario)
        trace = simulate(scenario.cluster, scenario.jobs, scenario.seed)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(trace.to_jsonl() + "\n")
    util = utilization(trace, scenario.cluster)
    if args.json:
        print(
            json.dumps(
                {
                    "makespan": trace.makespan,
                    "all_finished": trace.all_finished,
                    "utilization": util,
                }
            )
        )
    else:
        print(f"makespan: {trace.makespan:.3f} ms")
        print(f"jobs finished: {len(trace.of_kind('Finished'))}/{len(scenario.jobs)}")
        for key in sorted(util):
            print(f"  {key:<24} busy {util[key]:6.1%}")
    return EXIT_OK if trace.all_finished else EXIT_UNFINISHED


def cmd_mock_gateway(args: argparse.Namespace) -> int:
    if args.device:
        try:
            with open(args.device, "r", encoding="utf-8") as fh:
                spec = device_spec_from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError, ValueError) as exc:
            print(f"bad device spec: {exc}", file=sys.stderr)
            return EXIT_PARSE
    else:
        spec = device_spec_from_dict({"num_qubits": 5, "num_lanes": 2})
    secret = os.environ.get(args.auth_env)
    gateway = MockGateway(spec, mode=args.mode, port=args.port, secret=secret)
    try:
        gateway.start()
    except QrmiError as exc:
        print(f"bind failed: {exc}", file=sys.stderr)
        return EXIT_BIND
    if args.json:
        print(json.dumps({"port": gateway.port, "mode": args.mode, "url": gateway.url}), flush=True)
    else:
        print(f"mock gateway ({args.mode}) listening on {gateway.url}", flush=True)
    stop = {"flag": False}

    def _handle(signum, frame):
        stop["flag"] = True

    signal.signal(signal.SIGTERM, _handle)
    try:
        while not stop["flag"]:
            signal.pause()
    except KeyboardInterrupt:
        pass
    finally:
        gateway.stop()
    return EXIT_OK


def _first_accessible(registry: Registry) -> str | None:
    for resource_id in registry.ids():
        if registry.is_accessible(resource_id):
            return resource_id
    return None


def _safe_release(registry: Registry, token) -> None:
    try:
        registry.release(token)
    except QrmiError as exc:
        logger.warning("release swallowed: %s", exc)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("QRMI_LOG_LEVEL", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return EXIT_INTERRUPT


if __name__ == "__main__":
    sys.exit(main())
