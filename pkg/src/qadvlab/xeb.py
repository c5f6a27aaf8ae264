"""Cross-entropy benchmarking for one- and two-qubit cycles.

Random circuits alternate a layer of pi/2 rotations about eight
equally-spaced equatorial axes (plus a CZ in the two-qubit mode) with an
optional stochastic Pauli channel, ending in a Haar-like random
rotation. Comparing noisy and ideal bitstring distributions yields a
sequence fidelity alpha per cycle count; fitting alpha = A p^m gives the
per-cycle Pauli error e_c = (1 - p)(1 - 1/D^2).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .sim import (Gate, GateKind, NoiseSpec, apply_gate_amps,
                  apply_stochastic_pauli_amps)

AXIS_PHASES = tuple(k * np.pi / 4.0 for k in range(8))


@dataclass(frozen=True)
class XebConfig:
    n_qubits: int
    cycles: tuple[int, ...]
    n_circuits: int = 50
    shots: int | None = None  # None = exact-probability mode
    trajectories: int = 200  # noisy-trajectory average size
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0

    def __post_init__(self):
        if self.n_qubits not in (1, 2):
            raise ValueError("XEB supports 1 or 2 qubits")
        if len(self.cycles) == 0 or any(
                b <= a for a, b in zip(self.cycles, self.cycles[1:])):
            raise ValueError("cycles must be strictly increasing")
        if self.n_circuits < 2:
            raise ValueError("need at least 2 circuits per point")
        if self.trajectories < 1:
            raise ValueError("need at least 1 trajectory")

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits


def random_cycle(n_qubits: int, rng: np.random.Generator) -> list[Gate]:
    """One cycle: a pi/2 rotation about a random equatorial axis per qubit;
    the two-qubit mode appends a CZ."""
    gates = [
        Gate(GateKind.RPHI, (q,), np.pi / 2.0,
             AXIS_PHASES[rng.integers(len(AXIS_PHASES))])
        for q in range(1, n_qubits + 1)
    ]
    if n_qubits == 2:
        gates.append(Gate(GateKind.CZ, (1, 2)))
    return gates


def final_random_gate(qubit: int, rng: np.random.Generator) -> Gate:
    """Rotation with axis uniform on the equator and angle density
    sin(theta)/2 on [0, pi] (inverse CDF: theta = arccos(1 - 2u))."""
    phi = rng.uniform(0.0, 2.0 * np.pi)
    theta = float(np.arccos(1.0 - 2.0 * rng.uniform()))
    return Gate(GateKind.RPHI, (qubit,), theta, phi)


def random_circuit(n_qubits: int, m: int, rng: np.random.Generator):
    """(cycles, final gates) for a depth-m sequence."""
    cycles = [random_cycle(n_qubits, rng) for _ in range(m)]
    finals = [final_random_gate(q, rng) for q in range(1, n_qubits + 1)]
    return cycles, finals


def circuit_probs(
    cycles,
    finals,
    n_qubits: int,
    noise: NoiseSpec,
    rng: np.random.Generator | None = None,
    trajectories: int = 1,
) -> np.ndarray:
    """Bitstring distribution from |0...0>; noise (if any) is injected once
    per cycle after its gates, averaged over stochastic trajectories."""
    p = noise.per_qubit_pauli_prob
    rows = trajectories if p > 0.0 else 1
    amps = np.zeros((rows, 1 << n_qubits), dtype=np.complex128)
    amps[:, 0] = 1.0
    for cyc in cycles:
        for g in cyc:
            apply_gate_amps(amps, g, n_qubits)
        if p > 0.0:
            apply_stochastic_pauli_amps(amps, p, rng, n_qubits)
    for g in finals:
        apply_gate_amps(amps, g, n_qubits)
    return (np.abs(amps) ** 2).mean(axis=0)


def xeb_alpha(p_e: np.ndarray, p_s: np.ndarray) -> float:
    """Sequence fidelity from measured and simulated distributions.

    p_e, p_s: (C, D) per-circuit distributions (a single circuit may be
    passed as (D,)). alpha is the ratio of circuit-averaged cross term
    sum p_e (D p_s - 1) to circuit-averaged D sum p_s^2 - 1.
    """
    p_e = np.atleast_2d(np.asarray(p_e, dtype=float))
    p_s = np.atleast_2d(np.asarray(p_s, dtype=float))
    if p_e.shape != p_s.shape:
        raise ValueError("distribution arrays must have equal shapes")
    if (np.abs(p_e.sum(axis=1) - 1.0) > 1e-6).any() or \
            (np.abs(p_s.sum(axis=1) - 1.0) > 1e-6).any():
        raise ValueError("each distribution must sum to 1 within 1e-6")
    d = p_e.shape[1]
    num = (p_e * (d * p_s - 1.0)).sum(axis=1).mean()
    den = (d * (p_s**2).sum(axis=1) - 1.0).mean()
    if abs(den) < 1e-12:
        raise ValueError("degenerate fit: simulated distribution is uniform")
    return float(num / den)


def fit_decay(ms, alphas, dim: int) -> tuple[float, float, float]:
    """(A, p, e_c) from the log-linear fit of alpha = A p^m."""
    ms = np.asarray(ms, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    if len(ms) < 3:
        raise ValueError("need at least 3 (m, alpha) points")
    if (alphas <= 0.0).any():
        raise ValueError("alpha points must be positive for a log-linear fit")
    slope, intercept = np.polyfit(ms, np.log(alphas), 1)
    p = min(float(np.exp(slope)), 1.0)
    a = float(np.exp(intercept))
    return a, p, pauli_error(p, dim)


def pauli_error(p: float, dim: int) -> float:
    return (1.0 - p) * (1.0 - 1.0 / dim**2)


def depolarizing_prediction(pauli_prob: float, n_qubits: int) -> float:
    """Analytic e_c for the injected per-qubit uniform-Pauli channel.

    Each qubit's channel is depolarizing with Pauli fidelity
    lambda = 1 - 4p/3 on the non-identity Paulis. The XEB decay averages
    that fidelity over the D^2 - 1 non-identity two-sided Paulis:
    one qubit gives p_fit = lambda, two give (6 lambda + 9 lambda^2)/15.
    """
    lam = 1.0 - 4.0 * pauli_prob / 3.0
    if n_qubits == 1:
        p_fit = lam
    elif n_qubits == 2:
        p_fit = (6.0 * lam + 9.0 * lam**2) / 15.0
    else:
        raise ValueError("prediction covers 1 or 2 qubits")
    return pauli_error(p_fit, 1 << n_qubits)


@dataclass
class XebResult:
    config: XebConfig
    alphas: np.ndarray  # per cycle count
    per_circuit: list[tuple[int, int, float]]  # (m, circuit id, alpha)
    amplitude: float  # fitted A
    decay: float  # fitted p
    error_per_cycle: float  # e_c


def run_xeb(config: XebConfig) -> XebResult:
    """Full benchmark: generate circuits, estimate alpha per depth, fit."""
    rng = np.random.default_rng(config.seed)
    noiseless = NoiseSpec(0.0)
    alphas = []
    per_circuit = []
    for m in config.cycles:
        pe_rows, ps_rows = [], []
        for c in range(config.n_circuits):
            cycles, finals = random_circuit(config.n_qubits, m, rng)
            p_s = circuit_probs(cycles, finals, config.n_qubits, noiseless)
            p_e = circuit_probs(cycles, finals, config.n_qubits, config.noise,
                                rng, config.trajectories)
            if config.shots is not None:
                counts = np.bincount(
                    rng.choice(config.dim, size=config.shots, p=p_e / p_e.sum()),
                    minlength=config.dim)
                p_e = counts / config.shots
            pe_rows.append(p_e)
            ps_rows.append(p_s)
            per_circuit.append((m, c, xeb_alpha(p_e, p_s)))
        alphas.append(xeb_alpha(np.stack(pe_rows), np.stack(ps_rows)))
    a, p, ec = fit_decay(config.cycles, alphas, config.dim)
    return XebResult(config, np.array(alphas), per_circuit, a, p, ec)


def write_xeb_csv(result: XebResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "circuit", "alpha"])
        for m, c, alpha in result.per_circuit:
            w.writerow([m, c, repr(alpha)])


def write_xeb_summary(result: XebResult, path) -> None:
    doc = {
        "n_qubits": result.config.n_qubits,
        "cycles": list(result.config.cycles),
        "alphas": [float(a) for a in result.alphas],
        "A": result.amplitude,
        "p": result.decay,
        "e_c": result.error_per_cycle,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
