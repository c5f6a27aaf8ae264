"""Labeled quantum states from Aubry-Andre dynamics.

The Neel state |1010...> is evolved under the XY chain with an
incommensurate cosine field; deep-thermal (V/g in [0,1]) and
deep-localized (V/g in [4,5]) draws form a binary dataset. Couplings are
stored as angular frequencies (rad/s); values quoted as nu/2pi are
converted at the boundary.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .sim import StateVector, expectation_z_amps, neel_state

GOLDEN_ALPHA = (np.sqrt(5.0) - 1.0) / 2.0
DEFAULT_G = 2.0 * np.pi * 5e6  # g/2pi = 5 MHz
DEFAULT_TAU = 400e-9  # seconds
QDATA_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class AAParams:
    n_qubits: int
    disorder: float  # V, angular frequency (rad/s)
    phase: float  # phi in [0, 2pi)
    coupling: float = DEFAULT_G  # g, angular frequency (rad/s)
    tau: float = DEFAULT_TAU  # evolution time (s)
    alpha: float = GOLDEN_ALPHA

    def __post_init__(self):
        if self.coupling <= 0:
            raise ValueError("coupling g must be positive")
        if self.tau <= 0:
            raise ValueError("evolution time must be positive")

    def site_fields(self) -> np.ndarray:
        """V_k = V cos(2 pi alpha k + phi), k = 1..n."""
        k = np.arange(1, self.n_qubits + 1)
        return self.disorder * np.cos(2.0 * np.pi * self.alpha * k + self.phase)


class PhaseLabel(str, Enum):
    THERMAL = "THERMAL"
    LOCALIZED = "LOCALIZED"


# V/g sampling windows per class
PHASE_RANGES = {PhaseLabel.THERMAL: (0.0, 1.0), PhaseLabel.LOCALIZED: (4.0, 5.0)}


@dataclass
class QuantumSample:
    state: StateVector
    label: PhaseLabel
    v_over_g: float
    phase: float
    seed: int = 0

    def one_hot(self) -> np.ndarray:
        return np.array([1.0, 0.0]) if self.label == PhaseLabel.THERMAL else np.array([0.0, 1.0])

    def params(self, n: int | None = None, g: float = DEFAULT_G,
               tau: float = DEFAULT_TAU) -> AAParams:
        return AAParams(n or self.state.n_qubits, self.v_over_g * g, self.phase,
                        g, tau)


def build_hamiltonian(params: AAParams) -> scipy.sparse.csr_matrix:
    """H/hbar for the open XY chain with cosine on-site field.

    Hopping: -(g/2)(sx sx + sy sy) on neighbors couples |...01...> and
    |...10...> with amplitude -g; the field -sum (V_k/2) sz is diagonal.
    """
    n = params.n_qubits
    if n < 2:
        raise ValueError("chain needs at least 2 sites")
    dim = 1 << n
    vk = params.site_fields()
    idx = np.arange(dim)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))) & 1  # bits[:, k-1] = qubit k
    z = 1.0 - 2.0 * bits  # sigma_z eigenvalues
    diag = -(z @ (vk / 2.0))
    rows, cols, vals = [idx], [idx], [diag]
    for k in range(n - 1):  # bond between qubits k+1 and k+2
        differ = bits[:, k] != bits[:, k + 1]
        src = idx[differ]
        dst = src ^ ((1 << (n - 1 - k)) | (1 << (n - 2 - k)))
        rows.append(src)
        cols.append(dst)
        vals.append(np.full(len(src), -params.coupling))
    h = scipy.sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim), dtype=float)
    return h


def evolve(state: StateVector, params: AAParams, tol: float = 1e-8) -> StateVector:
    """exp(-i H tau) |state>, accurate to `tol` in 2-norm."""
    if state.n_qubits != params.n_qubits:
        raise ValueError("state/params qubit count mismatch")
    h = build_hamiltonian(params)
    out = scipy.sparse.linalg.expm_multiply(-1j * params.tau * h.astype(complex),
                                            state.amplitudes)
    out = out / np.linalg.norm(out)
    return StateVector(state.n_qubits, out)


def evolution_unitary(params: AAParams) -> np.ndarray:
    """Dense exp(-i H tau); used where many evolutions share one (V, phi)."""
    h = build_hamiltonian(params).toarray()
    return scipy.linalg.expm(-1j * params.tau * h)


def generate_dataset(
    n_train: int = 500,
    n_test: int = 100,
    seed: int = 0,
    n_qubits: int = 10,
    g: float = DEFAULT_G,
    tau: float = DEFAULT_TAU,
) -> tuple[list[QuantumSample], list[QuantumSample]]:
    """Class-balanced labeled states; deterministic per seed."""
    rng = np.random.default_rng(seed)
    neel = neel_state(n_qubits)

    def draw(count: int) -> list[QuantumSample]:
        out = []
        for i in range(count):
            label = PhaseLabel.THERMAL if i % 2 == 0 else PhaseLabel.LOCALIZED
            lo, hi = PHASE_RANGES[label]
            ratio = rng.uniform(lo, hi)
            phi = rng.uniform(0.0, 2.0 * np.pi)
            params = AAParams(n_qubits, ratio * g, phi, g, tau)
            out.append(QuantumSample(evolve(neel, params), label, ratio, phi, seed))
        return out

    return draw(n_train), draw(n_test)


def excitation_profile(state: StateVector) -> np.ndarray:
    """P1(k) = 1/2 - <sigma_z on k>/2 per qubit."""
    n = state.n_qubits
    e = np.array([expectation_z_amps(state.amplitudes, q, n) for q in range(1, n + 1)])
    return (1.0 - e) / 2.0


def staggered_imbalance(state: StateVector) -> float:
    """(1/n) sum_k (-1)^(k+1) (2 P1(k) - 1); 1 for the Neel state, 0 for a
    fully thermalized profile."""
    p1 = excitation_profile(state)
    n = len(p1)
    signs = (-1.0) ** np.arange(n)
    return float(np.mean(signs * (2.0 * p1 - 1.0)))


def total_excitation(state: StateVector) -> float:
    return float(excitation_profile(state).sum())


def samples_to_arrays(samples: list[QuantumSample]):
    """(states matrix, one-hot labels) in sample order."""
    S = np.stack([s.state.amplitudes for s in samples])
    A = np.stack([s.one_hot() for s in samples])
    return S, A


def save_quantum_dataset(samples: list[QuantumSample], json_path, bin_path) -> None:
    """JSON header + little-endian float64 (re, im) interleaved payload."""
    n = samples[0].state.n_qubits
    header = {
        "schema_version": QDATA_SCHEMA_VERSION,
        "n_qubits": n,
        "count": len(samples),
        "samples": [
            {"label": s.label.value, "v_over_g": s.v_over_g,
             "phase": s.phase, "seed": s.seed}
            for s in samples
        ],
    }
    with open(json_path, "w") as fh:
        json.dump(header, fh, sort_keys=True)
    with open(bin_path, "wb") as fh:
        for s in samples:
            interleaved = np.empty(2 * len(s.state.amplitudes))
            interleaved[0::2] = s.state.amplitudes.real
            interleaved[1::2] = s.state.amplitudes.imag
            fh.write(interleaved.astype("<f8").tobytes())


def load_quantum_dataset(json_path, bin_path) -> list[QuantumSample]:
    with open(json_path) as fh:
        header = json.load(fh)
    if header.get("schema_version") != QDATA_SCHEMA_VERSION:
        raise ValueError("unsupported quantum dataset version")
    n = header["n_qubits"]
    dim = 1 << n
    raw = np.fromfile(bin_path, dtype="<f8")
    if len(raw) != header["count"] * 2 * dim:
        raise ValueError(f"payload size mismatch: {8 * len(raw)} bytes")
    out = []
    for i, meta in enumerate(header["samples"]):
        chunk = raw[i * 2 * dim : (i + 1) * 2 * dim]
        amps = chunk[0::2] + 1j * chunk[1::2]
        out.append(QuantumSample(StateVector(n, amps), PhaseLabel(meta["label"]),
                                 meta["v_over_g"], meta["phase"], meta["seed"]))
    return out


def imbalance_sweep(
    ratios,
    n_phases: int = 20,
    seed: int = 0,
    n_qubits: int = 10,
    g: float = DEFAULT_G,
    tau: float = DEFAULT_TAU,
):
    """Mean and std of post-evolution staggered imbalance over random
    phases, per V/g value. Reproduces the thermal-to-localized contrast."""
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_phases)
    neel = neel_state(n_qubits)
    means, stds, profiles = [], [], []
    for ratio in ratios:
        vals, p1s = [], []
        for phi in phases:
            st = evolve(neel, AAParams(n_qubits, ratio * g, phi, g, tau))
            vals.append(staggered_imbalance(st))
            p1s.append(excitation_profile(st))
        means.append(float(np.mean(vals)))
        stds.append(float(np.std(vals, ddof=1)))
        profiles.append(np.mean(p1s, axis=0))
    return np.array(means), np.array(stds), np.array(profiles)
