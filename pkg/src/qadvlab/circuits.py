"""Circuit templates with data/variational angle slots.

A template is an ordered program of fixed gates and angle slots. Binding a
template with a feature vector and a parameter vector yields a concrete
gate sequence; the angle of every slot is affine in its inputs:

    DATA(i, w)                angle = w * x[i]
    PARAM(j)                  angle = theta[j]
    DATA_PLUS_PARAM(i, w, j)  angle = w * x[i] + theta[j]
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .sim import Gate, GateKind, rotation_matrix

TEMPLATE_SCHEMA_VERSION = 1


class SlotRole(str, Enum):
    DATA = "DATA"
    PARAM = "PARAM"
    DATA_PLUS_PARAM = "DATA_PLUS_PARAM"


class Preset(str, Enum):
    INTERLEAVED_MEDICAL_10Q = "INTERLEAVED_MEDICAL_10Q"
    AMPLITUDE_QUANTUM_10Q = "AMPLITUDE_QUANTUM_10Q"
    BENCHMARK_540 = "BENCHMARK_540"
    ENCODING_FIRST_540 = "ENCODING_FIRST_540"


@dataclass(frozen=True)
class AngleSlot:
    kind: GateKind  # rotation gate kind (RX or RZ in the presets)
    qubit: int
    role: SlotRole
    data_index: int = -1
    weight: float = 0.0
    param_index: int = -1


@dataclass(frozen=True)
class ArchitectureSpec:
    preset: Preset
    n_qubits: int = 10
    data_weight: float = 2.0  # per-slot weight on encoded features


@dataclass
class CircuitTemplate:
    n_qubits: int
    program: list  # Gate | AngleSlot, in application order
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def slots(self) -> list[AngleSlot]:
        return [it for it in self.program if isinstance(it, AngleSlot)]

    @property
    def data_slot_count(self) -> int:
        idx = {s.data_index for s in self.slots if s.data_index >= 0}
        return len(idx)

    @property
    def param_slot_count(self) -> int:
        idx = {s.param_index for s in self.slots if s.param_index >= 0}
        return len(idx)

    def slot_arrays(self):
        """(data_idx, weight, param_idx) int/float arrays over slots, cached."""
        if "arrays" not in self._cache:
            slots = self.slots
            d = np.array([s.data_index for s in slots], dtype=np.intp)
            w = np.array([s.weight for s in slots], dtype=float)
            p = np.array([s.param_index for s in slots], dtype=np.intp)
            self._cache["arrays"] = (d, w, p)
        return self._cache["arrays"]

    def resolve_angles(self, x_encoded=None, theta=None) -> np.ndarray:
        """Bound angle per slot for one (x, theta) pair or a batch.

        x_encoded: (D,) or (B, D) or None; theta: (P,) or (B, P) or None.
        Returns (S,) or (B, S).
        """
        d, w, p = self.slot_arrays()
        has_data = (d >= 0).any()
        has_param = (p >= 0).any()
        if has_data:
            x = np.asarray(x_encoded, dtype=float)
            xa = x[..., np.where(d >= 0, d, 0)] * np.where(d >= 0, w, 0.0)
        else:
            xa = 0.0
        if has_param:
            th = np.asarray(theta, dtype=float)
            pa = th[..., np.where(p >= 0, p, 0)] * (p >= 0)
        else:
            pa = 0.0
        angles = xa + pa
        if not has_data and not has_param:
            angles = np.zeros(len(self.slots))
        return angles

    def bind(self, x_encoded=None, theta=None) -> list[Gate]:
        """Concrete gate sequence for one sample."""
        d, _, p = self.slot_arrays()
        nd = int(d.max()) + 1 if (d >= 0).any() else 0
        npar = int(p.max()) + 1 if (p >= 0).any() else 0
        if nd:
            if x_encoded is None or len(x_encoded) != nd:
                raise ValueError(f"x_encoded must have exactly {nd} entries")
        if npar:
            if theta is None or len(theta) != npar:
                raise ValueError(f"theta must have exactly {npar} entries")
        angles = self.resolve_angles(
            x_encoded if nd else None, theta if npar else None
        )
        gates: list[Gate] = []
        si = 0
        for item in self.program:
            if isinstance(item, AngleSlot):
                gates.append(Gate(item.kind, (item.qubit,), float(angles[si])))
                si += 1
            else:
                gates.append(item)
        return gates

    def param_groups_by_qubit(self) -> list[np.ndarray]:
        """Parameter indices grouped by the qubit their slot acts on."""
        groups: dict[int, list[int]] = {q: [] for q in range(1, self.n_qubits + 1)}
        for s in self.slots:
            if s.param_index >= 0:
                groups[s.qubit].append(s.param_index)
        return [np.array(sorted(groups[q]), dtype=np.intp)
                for q in range(1, self.n_qubits + 1) if groups[q]]

    def to_json(self) -> str:
        items = []
        for it in self.program:
            if isinstance(it, AngleSlot):
                items.append({
                    "slot": True, "kind": it.kind.value, "qubit": it.qubit,
                    "role": it.role.value, "data_index": it.data_index,
                    "weight": it.weight, "param_index": it.param_index,
                })
            else:
                items.append({
                    "slot": False, "kind": it.kind.value, "qubits": list(it.qubits),
                    "angle": it.angle, "axis_phase": it.axis_phase,
                })
        doc = {"schema_version": TEMPLATE_SCHEMA_VERSION,
               "n_qubits": self.n_qubits, "program": items}
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "CircuitTemplate":
        doc = json.loads(text)
        if doc.get("schema_version") != TEMPLATE_SCHEMA_VERSION:
            raise ValueError("unsupported template schema version")
        program = []
        for it in doc["program"]:
            if it["slot"]:
                program.append(AngleSlot(
                    GateKind(it["kind"]), it["qubit"], SlotRole(it["role"]),
                    it["data_index"], it["weight"], it["param_index"]))
            else:
                program.append(Gate(GateKind(it["kind"]), tuple(it["qubits"]),
                                    it["angle"], it["axis_phase"]))
        return CircuitTemplate(doc["n_qubits"], program)


def cnot_layer_pairs(n_qubits: int) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Pairs for the two entangling layers on a 1-D chain.

    Group A: (1,2),(3,4),...; group B: (2,3),(4,5),....  Control is the
    lower qubit index in both groups.
    """
    group_a = [(q, q + 1) for q in range(1, n_qubits, 2)]
    group_b = [(q, q + 1) for q in range(2, n_qubits, 2)]
    return group_a, group_b


def _cnot_block(n_qubits: int) -> list[Gate]:
    a, b = cnot_layer_pairs(n_qubits)
    return [Gate(GateKind.CNOT, pair) for pair in a + b]


def _layer_kind(layer_index: int) -> GateKind:
    # odd layers (1-based) rotate about x, even layers about z
    return GateKind.RX if layer_index % 2 == 1 else GateKind.RZ


def build_interleaved_classifier(spec: ArchitectureSpec) -> CircuitTemplate:
    """4 blocks of (8, 6, 6, 6) single-qubit layers, each summing a data
    angle and a trainable angle, each block closed by two CNOT layers."""
    if spec.preset != Preset.INTERLEAVED_MEDICAL_10Q or spec.n_qubits != 10:
        raise ValueError("preset requires INTERLEAVED_MEDICAL_10Q on 10 qubits")
    n = spec.n_qubits
    program: list = []
    idx = 0
    layer = 0
    for block_layers in (8, 6, 6, 6):
        for _ in range(block_layers):
            layer += 1
            kind = _layer_kind(layer)
            for q in range(1, n + 1):
                program.append(AngleSlot(kind, q, SlotRole.DATA_PLUS_PARAM,
                                         data_index=idx, weight=spec.data_weight,
                                         param_index=idx))
                idx += 1
        program.extend(_cnot_block(n))
    return CircuitTemplate(n, program)


def build_quantum_classifier(spec: ArchitectureSpec) -> CircuitTemplate:
    """5 blocks x 3 variational single-qubit layers on 10 qubits; input is
    an already-prepared quantum state (no data slots)."""
    if spec.preset != Preset.AMPLITUDE_QUANTUM_10Q or spec.n_qubits != 10:
        raise ValueError("preset requires AMPLITUDE_QUANTUM_10Q on 10 qubits")
    n = spec.n_qubits
    program: list = []
    idx = 0
    layer = 0
    for _ in range(5):
        for _ in range(3):
            layer += 1
            kind = _layer_kind(layer)
            for q in range(1, n + 1):
                program.append(AngleSlot(kind, q, SlotRole.PARAM, param_index=idx))
                idx += 1
        program.extend(_cnot_block(n))
    return CircuitTemplate(n, program)


def build_benchmark_pair(spec: ArchitectureSpec) -> tuple[CircuitTemplate, CircuitTemplate]:
    """540-slot scaffold: 9 blocks x 6 layers x 10 qubits.

    The interleaved variant assigns the first 3 layers of each block to
    data and the last 3 to parameters (30 + 30 per block); the
    encoding-first variant makes the first 270 slots data and the last 270
    parameters. Gate scaffold and CNOT placement are identical.
    """
    n = spec.n_qubits
    if n != 10:
        raise ValueError("benchmark pair is defined on 10 qubits")

    def build(assign) -> CircuitTemplate:
        program: list = []
        slot = 0
        layer = 0
        for _ in range(9):
            for layer_in_block in range(6):
                layer += 1
                kind = _layer_kind(layer)
                for q in range(1, n + 1):
                    role, di, pi = assign(slot, layer_in_block)
                    program.append(AngleSlot(
                        kind, q, role, data_index=di,
                        weight=spec.data_weight if di >= 0 else 0.0,
                        param_index=pi))
                    slot += 1
            program.extend(_cnot_block(n))
        return CircuitTemplate(n, program)

    def interleaved_assign(slot, layer_in_block):
        block = slot // 60
        within = slot % 60
        if layer_in_block < 3:  # data half of the block
            return SlotRole.DATA, block * 30 + within, -1
        return SlotRole.PARAM, -1, block * 30 + (within - 30)

    def encoding_first_assign(slot, layer_in_block):
        if slot < 270:
            return SlotRole.DATA, slot, -1
        return SlotRole.PARAM, -1, slot - 270

    return build(interleaved_assign), build(encoding_first_assign)


def build_template(spec: ArchitectureSpec) -> CircuitTemplate:
    if spec.preset == Preset.INTERLEAVED_MEDICAL_10Q:
        return build_interleaved_classifier(spec)
    if spec.preset == Preset.AMPLITUDE_QUANTUM_10Q:
        return build_quantum_classifier(spec)
    if spec.preset == Preset.BENCHMARK_540:
        return build_benchmark_pair(spec)[0]
    if spec.preset == Preset.ENCODING_FIRST_540:
        return build_benchmark_pair(spec)[1]
    raise ValueError(f"unknown preset {spec.preset}")


# MNIST-style reduced training: parameters on these single-qubit layers.
MNIST_TRAINED_LAYERS = (3, 6, 11, 17, 23)


def fixed_subset_indices(layers=MNIST_TRAINED_LAYERS, n_qubits: int = 10) -> np.ndarray:
    """Parameter indices of the slots in the given 1-based layers."""
    out = []
    for layer in layers:
        base = (layer - 1) * n_qubits
        out.extend(range(base, base + n_qubits))
    return np.array(sorted(out), dtype=np.intp)


_ANGLE_EPS = 1e-12


def _decompose_z_phi(u: np.ndarray) -> tuple[float, float, float]:
    """Split a 2x2 unitary (up to phase) as RPHI(tp, phi) @ RZ(tz).

    Closed form: for su = u/sqrt(det u), su = [[c e^{-i tz/2}, -i s e^{i(phi+tz/2)}],
    [-i s e^{-i(phi+tz/2)}, c e^{i tz/2}]] with c=cos(tp/2), s=sin(tp/2).
    """
    det = u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0]
    su = u / np.sqrt(det)
    alpha, beta = su[0, 0], su[0, 1]
    c, s = abs(alpha), abs(beta)
    tp = 2.0 * np.arctan2(s, c)
    tz = -2.0 * np.angle(alpha) if c > _ANGLE_EPS else 0.0
    phi = (np.angle(beta) + np.pi / 2.0 - tz / 2.0) if s > _ANGLE_EPS else 0.0
    return tz, tp, phi


def compile_single_qubit_runs(gates: list[Gate]) -> list[Gate]:
    """Merge each maximal run of single-qubit gates on one qubit into at
    most RZ(tz) then RPHI(tp, phi); two-qubit gates keep their order."""
    from .sim import _H_MATRIX, _SINGLE_QUBIT

    pending: dict[int, np.ndarray] = {}
    out: list[Gate] = []

    def flush(q: int) -> None:
        u = pending.pop(q, None)
        if u is None:
            return
        tz, tp, phi = _decompose_z_phi(u)
        if abs(tz) > _ANGLE_EPS:
            out.append(Gate(GateKind.RZ, (q,), tz))
        if abs(tp) > _ANGLE_EPS:
            out.append(Gate(GateKind.RPHI, (q,), tp, phi))

    for g in gates:
        if g.kind in _SINGLE_QUBIT:
            q = g.qubits[0]
            m = _H_MATRIX if g.kind == GateKind.H else rotation_matrix(
                g.kind, g.angle, g.axis_phase)
            pending[q] = m @ pending.get(q, np.eye(2, dtype=complex))
        else:
            for q in g.qubits:
                flush(q)
            out.append(g)
    for q in sorted(pending):
        flush(q)
    return out
