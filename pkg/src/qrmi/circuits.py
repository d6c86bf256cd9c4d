"""The "circuit-v1" payload grammar.

A deliberately small circuit format so task results stay analytically
checkable: up to 12 qubits, gates h/x/rz/cx, one trailing measure_all.
The text form is one op per line with `#` comments:

    qubits 2
    h 0
    cx 0 1
    measure_all
    shots 1000
    seed 42

This format is the artifact's own stand-in for vendor payloads and is not
normative for any real device API.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import MalformedPayload
from .types import TaskPayload

MAX_QUBITS = 12
BASIS_GATES = ("h", "x", "rz", "cx")

FORMAT_CIRCUIT_V1 = "circuit-v1"
FORMAT_OPAQUE = "opaque"


@dataclass(frozen=True)
class GateOp:
    name: str
    qubits: tuple[int, ...]
    angle: float | None = None


@dataclass(frozen=True)
class CircuitV1:
    num_qubits: int
    ops: tuple[GateOp, ...]
    shots: int = 1024
    seed: int | None = None

    def __post_init__(self) -> None:
        _validate(self)


def _validate(circ: CircuitV1) -> None:
    if not 1 <= circ.num_qubits <= MAX_QUBITS:
        raise MalformedPayload(f"num_qubits must be 1..{MAX_QUBITS}, got {circ.num_qubits}")
    if circ.shots < 1:
        raise MalformedPayload(f"shots must be >= 1, got {circ.shots}")
    if not circ.ops or circ.ops[-1].name != "measure_all":
        raise MalformedPayload("circuit must end with exactly one measure_all")
    for op in circ.ops[:-1]:
        if op.name == "measure_all":
            raise MalformedPayload("measure_all may only appear as the final op")
        if op.name not in ("h", "x", "rz", "cx"):
            raise MalformedPayload(f"unknown gate {op.name!r}")
        for q in op.qubits:
            if not 0 <= q < circ.num_qubits:
                raise MalformedPayload(f"qubit index {q} out of range for {circ.num_qubits} qubits")
        if op.name == "cx" and op.qubits[0] == op.qubits[1]:
            raise MalformedPayload("cx control and target must differ")
        if op.name == "rz" and op.angle is None:
            raise MalformedPayload("rz requires an angle")


def parse_circuit(text: str) -> CircuitV1:
    """Parse the one-op-per-line text form; raises MalformedPayload on any violation."""
    num_qubits: int | None = None
    shots = 1024
    seed: int | None = None
    ops: list[GateOp] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        head = fields[0]
        try:
            if head == "qubits":
                if num_qubits is not None:
                    raise MalformedPayload("duplicate qubits line")
                num_qubits = int(fields[1])
            elif head == "shots":
                shots = int(fields[1])
            elif head == "seed":
                seed = int(fields[1])
            elif head == "measure_all":
                ops.append(GateOp("measure_all", ()))
            elif head in ("h", "x"):
                ops.append(GateOp(head, (int(fields[1]),)))
            elif head == "cx":
                ops.append(GateOp("cx", (int(fields[1]), int(fields[2]))))
            elif head.startswith("rz(") and head.endswith(")"):
                ops.append(GateOp("rz", (int(fields[1]),), float(head[3:-1])))
            else:
                raise MalformedPayload(f"line {lineno}: unknown directive {head!r}")
        except MalformedPayload:
            raise
        except (IndexError, ValueError) as exc:
            raise MalformedPayload(f"line {lineno}: cannot parse {line!r}: {exc}") from exc
        if num_qubits is None:
            raise MalformedPayload(f"line {lineno}: qubits must be declared before ops")
    if num_qubits is None:
        raise MalformedPayload("missing qubits declaration")
    return CircuitV1(num_qubits=num_qubits, ops=tuple(ops), shots=shots, seed=seed)


def serialize_circuit(circ: CircuitV1) -> str:
    """Canonical text form; parse(serialize(c)) == c."""
    lines = [f"qubits {circ.num_qubits}"]
    for op in circ.ops:
        if op.name == "measure_all":
            lines.append("measure_all")
        elif op.name == "rz":
            lines.append(f"rz({op.angle!r}) {op.qubits[0]}")
        else:
            lines.append(f"{op.name} {' '.join(str(q) for q in op.qubits)}")
    lines.append(f"shots {circ.shots}")
    if circ.seed is not None:
        lines.append(f"seed {circ.seed}")
    return "\n".join(lines) + "\n"


def circuit_payload(circ: CircuitV1, metadata: dict[str, str] | None = None) -> TaskPayload:
    return TaskPayload(
        format=FORMAT_CIRCUIT_V1,
        body=serialize_circuit(circ).encode("utf-8"),
        shots=circ.shots,
        metadata=dict(metadata or {}),
    )


def opaque_payload(body: bytes, shots: int = 1) -> TaskPayload:
    return TaskPayload(format=FORMAT_OPAQUE, body=body, shots=shots)


def parse_payload(payload: TaskPayload) -> CircuitV1 | None:
    """Validate a payload; returns the circuit for circuit-v1, None for opaque."""
    if payload.format == FORMAT_OPAQUE:
        if not payload.body:
            raise MalformedPayload("opaque payload body must be non-empty")
        return None
    if payload.format != FORMAT_CIRCUIT_V1:
        raise MalformedPayload(f"unsupported payload format {payload.format!r}")
    try:
        text = payload.body.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedPayload(f"circuit-v1 body is not UTF-8: {exc}") from exc
    circ = parse_circuit(text)
    if payload.shots != circ.shots:
        raise MalformedPayload(
            f"payload shots {payload.shots} disagree with circuit shots {circ.shots}"
        )
    return circ


def bell_circuit(shots: int = 1000, seed: int | None = None) -> CircuitV1:
    """Two-qubit Bell pair; results are supported on {"00", "11"} only."""
    return CircuitV1(
        num_qubits=2,
        ops=(GateOp("h", (0,)), GateOp("cx", (0, 1)), GateOp("measure_all", ())),
        shots=shots,
        seed=seed,
    )
