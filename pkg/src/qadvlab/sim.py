"""Exact state-vector simulation of n-qubit pure states.

Convention: qubit 1 is the most-significant bit of the amplitude index,
so basis state |b1 b2 ... bn> sits at index sum_k b_k * 2**(n-k).
Global phase is never tracked; state equality is checked via fidelity.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

NORM_TOL = 1e-10


class GateKind(str, Enum):
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    RPHI = "RPHI"
    H = "H"
    CNOT = "CNOT"
    CZ = "CZ"


_SINGLE_QUBIT = {GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.RPHI, GateKind.H}
_ROTATIONS = {GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.RPHI}

_H_MATRIX = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_PAULIS = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class Gate:
    """A single gate instance. `qubits` are one-based indices."""

    kind: GateKind
    qubits: tuple[int, ...]
    angle: float = 0.0
    axis_phase: float = 0.0

    def inverse(self) -> "Gate":
        if self.kind in _ROTATIONS:
            return Gate(self.kind, self.qubits, -self.angle, self.axis_phase)
        return self  # H, CNOT, CZ are self-inverse


class ObservableKind(str, Enum):
    PAULI_Z = "PAULI_Z"
    PROJECTOR_PLUS = "PROJECTOR_PLUS"
    PROJECTOR_MINUS = "PROJECTOR_MINUS"


@dataclass(frozen=True)
class Observable:
    kind: ObservableKind
    qubit: int


@dataclass(frozen=True)
class NoiseSpec:
    """Per-qubit stochastic Pauli channel; p=0 is exactly noiseless."""

    per_qubit_pauli_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.per_qubit_pauli_prob <= 1.0:
            raise ValueError("pauli probability must be in [0, 1]")


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ValueError("amplitude array must have length 2**n_qubits")
        if abs(float(np.vdot(self.amplitudes, self.amplitudes).real) - 1.0) > NORM_TOL:
            raise ValueError("state vector is not normalized")

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


def rotation_matrix(kind: GateKind, angle, axis_phase=0.0) -> np.ndarray:
    """2x2 unitary for a rotation gate.

    `angle` may be a scalar or an array of shape (B,); the result is then
    (2, 2) or (B, 2, 2) respectively.
    """
    angle = np.asarray(angle, dtype=float)
    half = angle / 2.0
    c = np.cos(half).astype(complex)
    s = np.sin(half)
    out = np.zeros(angle.shape + (2, 2), dtype=complex)
    if kind == GateKind.RX:
        out[..., 0, 0] = c
        out[..., 0, 1] = -1j * s
        out[..., 1, 0] = -1j * s
        out[..., 1, 1] = c
    elif kind == GateKind.RY:
        out[..., 0, 0] = c
        out[..., 0, 1] = -s
        out[..., 1, 0] = s
        out[..., 1, 1] = c
    elif kind == GateKind.RZ:
        out[..., 0, 0] = np.exp(-1j * half)
        out[..., 1, 1] = np.exp(1j * half)
    elif kind == GateKind.RPHI:
        # phased x rotation: RPHI(angle, phi) == RZ(-phi) RX(angle) RZ(phi),
        # i.e. exp(-i angle/2 (cos(phi) sx - sin(phi) sy))
        phase = np.exp(1j * np.asarray(axis_phase, dtype=float))
        out[..., 0, 0] = c
        out[..., 0, 1] = -1j * s * phase
        out[..., 1, 0] = -1j * s / phase
        out[..., 1, 1] = c
    else:
        raise ValueError(f"{kind} is not a rotation gate")
    return out


def apply_matrix_1q(amps: np.ndarray, m: np.ndarray, qubit: int, n: int) -> None:
    """Apply a 2x2 matrix to `qubit` of `amps` in place.

    amps: (..., 2**n); m: (2, 2) shared, or (B, 2, 2) matching a leading
    batch axis of amps.
    """
    lead = amps.shape[:-1]
    stride = 1 << (n - qubit)
    view = amps.reshape(lead + (-1, 2, stride))
    a0 = view[..., 0, :]
    a1 = view[..., 1, :]
    if m.ndim == 2:
        m00, m01, m10, m11 = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    else:
        m00 = m[:, 0, 0][:, None, None]
        m01 = m[:, 0, 1][:, None, None]
        m10 = m[:, 1, 0][:, None, None]
        m11 = m[:, 1, 1][:, None, None]
    new0 = m00 * a0 + m01 * a1
    new1 = m10 * a0 + m11 * a1
    view[..., 0, :] = new0
    view[..., 1, :] = new1


def apply_cnot(amps: np.ndarray, control: int, target: int, n: int) -> None:
    lead = amps.ndim - 1
    view = amps.reshape(amps.shape[:-1] + (2,) * n)
    i10 = [slice(None)] * (lead + n)
    i10[lead + control - 1] = 1
    i10[lead + target - 1] = 0
    i11 = list(i10)
    i11[lead + target - 1] = 1
    i10, i11 = tuple(i10), tuple(i11)
    tmp = view[i10].copy()
    view[i10] = view[i11]
    view[i11] = tmp


def apply_cz(amps: np.ndarray, q1: int, q2: int, n: int) -> None:
    lead = amps.ndim - 1
    view = amps.reshape(amps.shape[:-1] + (2,) * n)
    idx = [slice(None)] * (lead + n)
    idx[lead + q1 - 1] = 1
    idx[lead + q2 - 1] = 1
    view[tuple(idx)] *= -1


def _check_qubits(gate: Gate, n: int) -> None:
    qs = gate.qubits
    expected = 1 if gate.kind in _SINGLE_QUBIT else 2
    if len(qs) != expected:
        raise ValueError(f"{gate.kind} takes {expected} qubit(s), got {qs}")
    for q in qs:
        if not 1 <= q <= n:
            raise ValueError(f"qubit index {q} out of range for n={n}")
    if len(qs) == 2 and qs[0] == qs[1]:
        raise ValueError("two-qubit gate needs distinct qubits")


def apply_gate_amps(amps: np.ndarray, gate: Gate, n: int) -> None:
    """Apply `gate` in place to (..., 2**n) amplitudes."""
    _check_qubits(gate, n)
    if gate.kind == GateKind.CNOT:
        apply_cnot(amps, gate.qubits[0], gate.qubits[1], n)
    elif gate.kind == GateKind.CZ:
        apply_cz(amps, gate.qubits[0], gate.qubits[1], n)
    elif gate.kind == GateKind.H:
        apply_matrix_1q(amps, _H_MATRIX, gate.qubits[0], n)
    else:
        m = rotation_matrix(gate.kind, gate.angle, gate.axis_phase)
        apply_matrix_1q(amps, m, gate.qubits[0], n)


def init_basis_state(n_qubits: int, bits: str) -> StateVector:
    """Computational basis state |bits>, with bits[0] on qubit 1 (MSB)."""
    if len(bits) != n_qubits:
        raise ValueError(f"bit string length {len(bits)} != n_qubits {n_qubits}")
    if set(bits) - {"0", "1"}:
        raise ValueError("bits must contain only 0 and 1")
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[int(bits, 2)] = 1.0
    return StateVector(n_qubits, amps)


def neel_state(n_qubits: int) -> StateVector:
    """The alternating basis state |1010...>."""
    return init_basis_state(n_qubits, ("10" * n_qubits)[:n_qubits])


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    amps = state.amplitudes.copy()
    apply_gate_amps(amps, gate, state.n_qubits)
    return StateVector(state.n_qubits, amps)


def apply_circuit(state: StateVector, gates) -> StateVector:
    amps = state.amplitudes.copy()
    for g in gates:
        apply_gate_amps(amps, g, state.n_qubits)
    return StateVector(state.n_qubits, amps)


def _z_signs(n: int, qubit: int) -> np.ndarray:
    if not 1 <= qubit <= n:
        raise ValueError(f"qubit index {qubit} out of range for n={n}")
    idx = np.arange(2**n)
    bit = (idx >> (n - qubit)) & 1
    return 1.0 - 2.0 * bit


def expectation_z_amps(amps: np.ndarray, qubit: int, n: int) -> np.ndarray:
    """<sigma_z on qubit> for (..., 2**n) amplitudes; returns (...)."""
    probs = np.abs(amps) ** 2
    return probs @ _z_signs(n, qubit)


def expectation_z(state: StateVector, qubit: int) -> float:
    return float(expectation_z_amps(state.amplitudes, qubit, state.n_qubits))


def expectation(state: StateVector, obs: Observable) -> float:
    e = expectation_z(state, obs.qubit)
    if obs.kind == ObservableKind.PAULI_Z:
        return e
    if obs.kind == ObservableKind.PROJECTOR_PLUS:
        return (1.0 + e) / 2.0
    return (1.0 - e) / 2.0


def class_probabilities(state: StateVector, qubit: int) -> tuple[float, float]:
    """(P(|0>), P(|1>)) on the measured qubit; sums to 1."""
    e = expectation_z(state, qubit)
    return (1.0 + e) / 2.0, (1.0 - e) / 2.0


def overlap_fidelity(a: StateVector, b: StateVector) -> float:
    if a.n_qubits != b.n_qubits:
        raise ValueError("states have different qubit counts")
    return float(np.abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def sample_bitstrings(state: StateVector, shots: int, rng: np.random.Generator) -> np.ndarray:
    probs = np.abs(state.amplitudes) ** 2
    probs = probs / probs.sum()
    return rng.choice(len(probs), size=shots, p=probs)


def apply_stochastic_pauli(
    state: StateVector, spec: NoiseSpec, rng: np.random.Generator
) -> StateVector:
    """With probability p, apply a uniformly random Pauli to each qubit."""
    amps = state.amplitudes.copy()
    apply_stochastic_pauli_amps(amps, spec.per_qubit_pauli_prob, rng, state.n_qubits)
    return StateVector(state.n_qubits, amps)


def apply_stochastic_pauli_amps(
    amps: np.ndarray, p: float, rng: np.random.Generator, n: int
) -> None:
    """In-place noise channel over (2**n,) or batched (B, 2**n) amplitudes.

    Batched rows draw independent noise; the draw order is row-major per
    qubit so results are reproducible for a fixed rng state.
    """
    if p == 0.0:
        return
    batched = amps.ndim == 2
    nrows = amps.shape[0] if batched else 1
    names = ("X", "Y", "Z")
    for q in range(1, n + 1):
        hit = rng.random(nrows) < p
        which = rng.integers(0, 3, size=nrows)
        if not hit.any():
            continue
        if batched:
            for i in range(3):
                rows = np.nonzero(hit & (which == i))[0]
                if rows.size:
                    sub = amps[rows]  # fancy indexing copies
                    apply_matrix_1q(sub, _PAULIS[names[i]], q, n)
                    amps[rows] = sub
        else:
            if hit[0]:
                apply_matrix_1q(amps, _PAULIS[names[which[0]]], q, n)


def norm_error(amps: np.ndarray) -> float:
    return float(abs(np.sum(np.abs(amps) ** 2) - 1.0))
