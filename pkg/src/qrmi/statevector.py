"""Statevector execution of circuit-v1 payloads with reproducible sampling.

States live in a dense 2**n complex vector (n <= 12, so at most 4096
amplitudes). Measurement sampling draws shots outcomes by inverse-CDF over
the exact probability vector using xoshiro256** seeded through splitmix64;
both generators are implemented here so identical (circuit, seed) pairs
yield byte-identical counts on any platform and library version.

Bitstring convention: character i of an outcome key is qubit i, so qubit 0
is the leftmost character.
"""

from __future__ import annotations

import math
import secrets

import numpy as np

from .circuits import CircuitV1, GateOp
from .errors import MalformedPayload

_MASK64 = (1 << 64) - 1

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_X = np.array([[0, 1], [1, 0]], dtype=complex)


def _rz(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex)


class SplitMix64:
    """Seed expander; reference stepping of the splitmix64 sequence."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** with the standard splitmix64 state initialization."""

    def __init__(self, seed: int) -> None:
        mix = SplitMix64(seed)
        self._s = [mix.next_u64() for _ in range(4)]

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1): top 53 bits of the next output."""
        return (self.next_u64() >> 11) * 2.0**-53


def apply_gate(state: np.ndarray, op: GateOp, num_qubits: int) -> np.ndarray:
    """Apply one gate to a dense statevector; returns the new vector."""
    if op.name == "h":
        return _apply_single(state, _H, op.qubits[0], num_qubits)
    if op.name == "x":
        return _apply_single(state, _X, op.qubits[0], num_qubits)
    if op.name == "rz":
        assert op.angle is not None
        return _apply_single(state, _rz(op.angle), op.qubits[0], num_qubits)
    if op.name == "cx":
        return _apply_cx(state, op.qubits[0], op.qubits[1], num_qubits)
    raise MalformedPayload(f"unknown gate {op.name!r}")


def _apply_single(state: np.ndarray, matrix: np.ndarray, qubit: int, n: int) -> np.ndarray:
    tensor = state.reshape([2] * n)
    moved = np.moveaxis(tensor, qubit, -1)
    moved = np.tensordot(moved, matrix, axes=([-1], [1]))
    return np.moveaxis(moved, -1, qubit).reshape(-1)


def _apply_cx(state: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    tensor = state.reshape([2] * n).copy()

    def block(c: int, t: int):
        index: list = [slice(None)] * n
        index[control], index[target] = c, t
        return tuple(index)

    swapped = tensor[block(1, 0)].copy()
    tensor[block(1, 0)] = tensor[block(1, 1)]
    tensor[block(1, 1)] = swapped
    return tensor.reshape(-1)


def run_statevector(circ: CircuitV1) -> np.ndarray:
    """Final pre-measurement amplitudes of the circuit, starting from |0...0>."""
    state = np.zeros(2**circ.num_qubits, dtype=complex)
    state[0] = 1.0
    for op in circ.ops:
        if op.name == "measure_all":
            break
        state = apply_gate(state, op, circ.num_qubits)
    return state


def bitstring(index: int, num_qubits: int) -> str:
    return format(index, f"0{num_qubits}b")


def sample_counts(probs: np.ndarray, shots: int, rng: Xoshiro256StarStar, num_qubits: int) -> dict[str, int]:
    """Inverse-CDF sampling: shot i consumes the i-th double from rng."""
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0  # guard against float drift at the top end
    draws = np.fromiter((rng.random() for _ in range(shots)), dtype=float, count=shots)
    outcomes = np.searchsorted(cdf, draws, side="right")
    counts: dict[str, int] = {}
    for index, count in zip(*np.unique(outcomes, return_counts=True)):
        counts[bitstring(int(index), num_qubits)] = int(count)
    return counts


def execute_circuit(circ: CircuitV1) -> dict[str, int]:
    """Run the circuit and sample `shots` outcomes; deterministic when seeded.

    An unseeded circuit samples from a fresh random seed, so repeat runs
    differ; pass seed for reproducibility.
    """
    state = run_statevector(circ)
    probs = np.abs(state) ** 2
    total = probs.sum()
    if not math.isclose(total, 1.0, abs_tol=1e-9):
        raise MalformedPayload(f"statevector norm drifted to {total}")
    probs = probs / total
    seed = circ.seed if circ.seed is not None else secrets.randbits(63)
    return sample_counts(probs, circ.shots, Xoshiro256StarStar(seed), circ.num_qubits)
