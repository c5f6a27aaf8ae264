"""Losses and exact parameter-shift gradients.

Every bound rotation angle is affine in the data features and trainable
parameters, so the derivative of <sigma_z> with respect to any slot's angle
is exactly (E(+pi/2) - E(-pi/2)) / 2, and chain factors (feature weights,
perturbation reparameterizations) multiply on top.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .circuits import CircuitTemplate
from .engine import runner_for

SHIFT = np.pi / 2.0


class LossKind(str, Enum):
    CROSS_ENTROPY = "CROSS_ENTROPY"
    MSE = "MSE"


@dataclass
class Classifier:
    """A template plus the measured qubit and loss; `theta` lives outside."""

    template: CircuitTemplate
    measure_qubit: int = 5
    loss_kind: LossKind = LossKind.CROSS_ENTROPY
    prob_floor: float = 1e-10

    def expectations(self, angles, init=None) -> np.ndarray:
        return runner_for(self.template).expectations_z(
            angles, self.measure_qubit, init)

    def angles(self, x_encoded=None, theta=None) -> np.ndarray:
        return self.template.resolve_angles(x_encoded, theta)


def loss(kind: LossKind, g, a, prob_floor: float = 1e-10) -> float:
    """Loss for one prediction; g the class-probability pair, a one-hot."""
    g = np.asarray(g, dtype=float)
    a = np.asarray(a, dtype=float)
    if abs(g.sum() - 1.0) > 1e-9 or (g < -1e-9).any():
        raise ValueError("g must be a probability pair summing to 1")
    if kind == LossKind.CROSS_ENTROPY:
        return float(-(a * np.log(np.maximum(g, prob_floor))).sum())
    return float(((a - g) ** 2).sum())


def _loss_rows(kind: LossKind, e: np.ndarray, a: np.ndarray, floor: float) -> np.ndarray:
    """Vectorized loss from <sigma_z> values e (B,) and one-hot labels a (B, 2)."""
    g = np.stack([(1.0 + e) / 2.0, (1.0 - e) / 2.0], axis=-1)
    if kind == LossKind.CROSS_ENTROPY:
        return -(a * np.log(np.maximum(g, floor))).sum(axis=-1)
    return ((a - g) ** 2).sum(axis=-1)


def _dloss_dexpect(kind: LossKind, e: np.ndarray, a: np.ndarray, floor: float) -> np.ndarray:
    """dL/d<sigma_z>: combines dL/dg1 and dL/dg2 with dg1/de = 1/2 = -dg2/de."""
    g1 = np.maximum((1.0 + e) / 2.0, floor)
    g2 = np.maximum((1.0 - e) / 2.0, floor)
    if kind == LossKind.CROSS_ENTROPY:
        return 0.5 * (-a[..., 0] / g1 + a[..., 1] / g2)
    return (g1 - a[..., 0]) - (g2 - a[..., 1])


def expectation_shift_grads(
    model: Classifier,
    base_angles: np.ndarray,
    slot_indices: np.ndarray,
    init=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact d<sigma_z>/d(angle) for the given slots, plus the base value.

    base_angles: (S,) bound angles; returns (dE over slots (K,), E_base).
    One batched run evaluates all 2K shifts and the base point.
    """
    slot_indices = np.asarray(slot_indices, dtype=np.intp)
    k = len(slot_indices)
    batch = np.tile(base_angles, (2 * k + 1, 1))
    rows = np.arange(k)
    batch[2 * rows, slot_indices] += SHIFT
    batch[2 * rows + 1, slot_indices] -= SHIFT
    e = model.expectations(batch, init)
    de = (e[0 : 2 * k : 2] - e[1 : 2 * k + 1 : 2]) / 2.0
    return de, float(e[-1])


def param_shift(
    template: CircuitTemplate,
    x_encoded,
    theta,
    qubit_k: int,
    slot: int,
    init=None,
) -> float:
    """d<sigma_z on qubit_k>/d(bound angle of `slot`)."""
    n_slots = len(template.slots)
    if not 0 <= slot < n_slots:
        raise ValueError(f"slot {slot} out of range (template has {n_slots} slots)")
    model = Classifier(template, measure_qubit=qubit_k)
    base = template.resolve_angles(x_encoded, theta)
    de, _ = expectation_shift_grads(model, base, np.array([slot]), init)
    return float(de[0])


def _slots_for_params(template: CircuitTemplate, indices) -> tuple[np.ndarray, np.ndarray]:
    """(slot positions, their param indices) for the requested parameters."""
    _, _, p = template.slot_arrays()
    indices = np.asarray(indices, dtype=np.intp)
    mask = np.isin(p, indices)
    return np.nonzero(mask)[0], p[mask]


def loss_grad_theta(
    model: Classifier,
    x_encoded,
    theta,
    a,
    indices=None,
    init=None,
) -> np.ndarray:
    """dL/dtheta over the requested parameter indices (default: all)."""
    theta = np.asarray(theta, dtype=float)
    if indices is None:
        indices = np.arange(len(theta))
    indices = np.asarray(indices, dtype=np.intp)
    slots, slot_params = _slots_for_params(model.template, indices)
    base = model.angles(x_encoded, theta)
    de, e0 = expectation_shift_grads(model, base, slots, init)
    chain = _dloss_dexpect(model.loss_kind, np.asarray(e0), np.asarray(a, float),
                           model.prob_floor)
    grad = np.zeros(len(indices))
    pos = {int(pi): j for j, pi in enumerate(indices)}
    for s in range(len(slots)):
        grad[pos[int(slot_params[s])]] += float(chain) * de[s]
    return grad


def loss_grad_input(
    model: Classifier,
    x_encoded,
    theta,
    a,
    data_indices=None,
) -> np.ndarray:
    """dL/dx over encoded-feature entries; chain factor is the slot weight."""
    x_encoded = np.asarray(x_encoded, dtype=float)
    d, w, _ = model.template.slot_arrays()
    if data_indices is None:
        data_indices = np.arange(len(x_encoded))
    data_indices = np.asarray(data_indices, dtype=np.intp)
    mask = np.isin(d, data_indices) & (w != 0.0)
    slots = np.nonzero(mask)[0]
    base = model.angles(x_encoded, theta)
    de, e0 = expectation_shift_grads(model, base, slots)
    chain = _dloss_dexpect(model.loss_kind, np.asarray(e0), np.asarray(a, float),
                           model.prob_floor)
    grad = np.zeros(len(data_indices))
    pos = {int(di): j for j, di in enumerate(data_indices)}
    for s, slot in enumerate(slots):
        grad[pos[int(d[slot])]] += float(chain) * w[slot] * de[s]
    return grad


def batch_loss_grad_theta(
    model: Classifier,
    X_encoded,
    theta,
    A,
    indices,
    init_states=None,
) -> np.ndarray:
    """Mean dL/dtheta over a batch of samples, one fused engine run.

    X_encoded: (B, D) or None (amplitude input); init_states: (B, 2**n) or
    None. Returns the batch-mean gradient over `indices`.
    """
    theta = np.asarray(theta, dtype=float)
    indices = np.asarray(indices, dtype=np.intp)
    slots, slot_params = _slots_for_params(model.template, indices)
    k = len(slots)
    if X_encoded is not None:
        base = model.angles(np.asarray(X_encoded, float), theta)  # (B, S)
    else:
        nb = init_states.shape[0]
        base = np.tile(model.angles(None, theta), (nb, 1))
    nb, n_slots = base.shape
    rows_per = 2 * k + 1
    mega = np.repeat(base, rows_per, axis=0).reshape(nb, rows_per, n_slots)
    r = np.arange(k)
    mega[:, 2 * r, slots] += SHIFT
    mega[:, 2 * r + 1, slots] -= SHIFT
    mega = mega.reshape(nb * rows_per, n_slots)
    init = None
    if init_states is not None:
        init = np.repeat(init_states, rows_per, axis=0)
    e = model.expectations(mega, init).reshape(nb, rows_per)
    de = (e[:, 0 : 2 * k : 2] - e[:, 1 : 2 * k + 1 : 2]) / 2.0  # (B, K)
    chain = _dloss_dexpect(model.loss_kind, e[:, -1], np.asarray(A, float),
                           model.prob_floor)  # (B,)
    dLdangle = chain[:, None] * de
    grad = np.zeros(len(indices))
    pos = {int(pi): j for j, pi in enumerate(indices)}
    for s in range(k):
        grad[pos[int(slot_params[s])]] += dLdangle[:, s].mean()
    return grad


def perturbation_states(n_qubits: int, deltas: np.ndarray, init: np.ndarray) -> np.ndarray:
    """Apply the per-qubit layer Rx(d1) Rz(d2) Rx(d3) to `init`.

    deltas: (B, 3n) or (3n,), laid out qubit-major (qubit 1 first three).
    """
    from .circuits import GateKind as _GK
    from .sim import apply_matrix_1q, rotation_matrix

    deltas = np.atleast_2d(np.asarray(deltas, dtype=float))
    batch = deltas.shape[0]
    state = np.tile(np.asarray(init, np.complex128), (batch, 1))
    for q in range(1, n_qubits + 1):
        base = 3 * (q - 1)
        m = rotation_matrix(_GK.RX, deltas[:, base])
        m = rotation_matrix(_GK.RZ, deltas[:, base + 1]) @ m
        m = rotation_matrix(_GK.RX, deltas[:, base + 2]) @ m
        apply_matrix_1q(state, m, q, n_qubits)
    return state


def loss_grad_psi(
    model: Classifier,
    theta,
    u_aa: np.ndarray,
    psi,
    a,
    kappa: float,
    init: np.ndarray,
) -> np.ndarray:
    """dL/dpsi for the bounded perturbation layer.

    The perturbation angle of entry i is kappa*sin(psi_i); the chain factor
    kappa*cos(psi_i) multiplies the parameter-shift gradient at that angle.
    Forward path: u_aa @ (perturbation layer applied to `init`), then the
    classifier.
    """
    psi = np.asarray(psi, dtype=float)
    n = model.template.n_qubits
    k = len(psi)
    deltas = kappa * np.sin(psi)
    batch = np.tile(deltas, (2 * k + 1, 1))
    r = np.arange(k)
    batch[2 * r, r] += SHIFT
    batch[2 * r + 1, r] -= SHIFT
    pre = perturbation_states(n, batch, init)
    states = pre @ u_aa.T
    theta = np.asarray(theta, dtype=float)
    angles = np.tile(model.angles(None, theta), (2 * k + 1, 1))
    e = model.expectations(angles, states)
    de = (e[0 : 2 * k : 2] - e[1 : 2 * k + 1 : 2]) / 2.0
    chain = _dloss_dexpect(model.loss_kind, e[-1], np.asarray(a, float),
                           model.prob_floor)
    return float(chain) * kappa * np.cos(psi) * de


def batch_losses(
    model: Classifier, X_encoded, theta, A, init_states=None
) -> tuple[np.ndarray, np.ndarray]:
    """(per-sample loss, per-sample <sigma_z>) for a batch."""
    theta = np.asarray(theta, dtype=float)
    if X_encoded is not None:
        angles = model.angles(np.asarray(X_encoded, float), theta)
        if angles.ndim == 1:
            angles = angles[None, :]
    else:
        nb = init_states.shape[0]
        angles = np.tile(model.angles(None, theta), (nb, 1))
    e = model.expectations(angles, init_states)
    return _loss_rows(model.loss_kind, e, np.asarray(A, float), model.prob_floor), e
