"""Adversarial example generation and adversarial training.

Classical attacks run Adam ascent on the raw pixels against a frozen
trained model, clamping to [0, 1] and re-encoding before every
evaluation. The quantum attack inserts a bounded single-qubit layer
before the Aubry-Andre evolution and optimizes its generating angles.
The iterate with the highest loss seen during the ascent is emitted, so
every returned example satisfies loss(x_adv) >= loss(x); samples where
the attack made no progress are flagged in the provenance record.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .datasets import encode
from .grad import SHIFT, Classifier, _dloss_dexpect, _loss_rows, batch_losses, \
    loss_grad_psi, perturbation_states
from .optim import AdamState, ArrayDataset, TrainConfig, TrainResult, adam_step, train
from .quantum_data import QuantumSample, evolution_unitary, staggered_imbalance
from .sim import StateVector, neel_state

PROVENANCE_SCHEMA_VERSION = 1


class AttackKind(str, Enum):
    TYPE1 = "TYPE1"
    TYPE2 = "TYPE2"
    QUANTUM = "QUANTUM"


@dataclass(frozen=True)
class AttackConfig:
    kind: AttackKind
    iterations: int = 30
    lr: float = 0.1
    mask_threshold: float = 0.0  # TYPE2: pixels above this form the object
    kappa: float = 0.5  # QUANTUM: bound on each perturbation angle
    linf_clamp: float | None = None  # optional pixel-space l-inf budget
    stop_on_flip: bool = False  # halt a sample once it is misclassified
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if not 0.0 <= self.mask_threshold <= 1.0:
            raise ValueError("mask threshold must lie in [0, 1]")


@dataclass
class PerturbationLayer:
    """Generating angles psi (3 per qubit); bound angles are kappa*sin(psi)."""

    psi: np.ndarray
    kappa: float = 0.5

    def deltas(self) -> np.ndarray:
        return self.kappa * np.sin(self.psi)

    def apply(self, init: np.ndarray, n_qubits: int) -> np.ndarray:
        return perturbation_states(n_qubits, self.deltas(), init)[0]


@dataclass
class AttackRecord:
    sample_index: int
    initial_loss: float
    final_loss: float
    iterations: int
    improved: bool


@dataclass
class AttackResult:
    config: AttackConfig
    records: list[AttackRecord]
    x_adv: np.ndarray | None = None  # (B, D) raw pixels (classical attacks)
    samples: list[QuantumSample] | None = None  # quantum attack output
    layers: list[PerturbationLayer] = field(default_factory=list)

    def flip_mask(self, expectations_before, expectations_after) -> np.ndarray:
        before = np.asarray(expectations_before) >= 0.0
        after = np.asarray(expectations_after) >= 0.0
        return before != after


def _encode_rows(X: np.ndarray, pad_to: int) -> np.ndarray:
    return np.stack([encode(row, pad_to=pad_to) for row in X])


def _batch_input_grads(model: Classifier, X_encoded: np.ndarray, theta: np.ndarray,
                       A: np.ndarray, n_raw: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample (dL/dx over the first n_raw feature entries, loss).

    One fused engine run per call: every data-bearing slot is shifted both
    ways for every sample in the batch.
    """
    d, w, _ = model.template.slot_arrays()
    slots = np.nonzero((d >= 0) & (d < n_raw) & (w != 0.0))[0]
    k = len(slots)
    base = model.angles(X_encoded, theta)  # (B, S)
    nb, n_slots = base.shape
    rows_per = 2 * k + 1
    mega = np.repeat(base, rows_per, axis=0).reshape(nb, rows_per, n_slots)
    r = np.arange(k)
    mega[:, 2 * r, slots] += SHIFT
    mega[:, 2 * r + 1, slots] -= SHIFT
    e = model.expectations(mega.reshape(nb * rows_per, n_slots)).reshape(nb, rows_per)
    de = (e[:, 0 : 2 * k : 2] - e[:, 1 : 2 * k + 1 : 2]) / 2.0  # (B, K)
    chain = _dloss_dexpect(model.loss_kind, e[:, -1], np.asarray(A, float),
                           model.prob_floor)
    grads = np.zeros((nb, n_raw))
    np.add.at(grads.T, d[slots], (chain[:, None] * de * w[slots]).T)
    losses = _loss_rows(model.loss_kind, e[:, -1], np.asarray(A, float),
                        model.prob_floor)
    return grads, losses


def _classical_attack(
    model: Classifier,
    theta: np.ndarray,
    X: np.ndarray,
    A: np.ndarray,
    config: AttackConfig,
    masks: np.ndarray | None,
    chunk: int = 10,
) -> AttackResult:
    """Shared ascent loop for the pixel-space attacks."""
    theta = np.asarray(theta, dtype=float).copy()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    nb, n_raw = X.shape
    pad_to = model.template.data_slot_count
    x_adv = np.empty_like(X)
    records = []
    for start in range(0, nb, chunk):
        sl = slice(start, min(start + chunk, nb))
        x0 = X[sl]
        a = A[sl]
        cur = x0.copy()
        m = masks[sl] if masks is not None else None
        loss0, _ = batch_losses(model, _encode_rows(cur, pad_to), theta, a)
        best = cur.copy()
        best_loss = loss0.copy()
        state = AdamState.zeros(cur.size)
        for _ in range(config.iterations):
            grads, _ = _batch_input_grads(model, _encode_rows(cur, pad_to),
                                          theta, a, n_raw)
            if m is not None:
                grads = grads * m
            # ascend: feed -grad to the (descent-form) Adam update
            state, flat = adam_step(state, cur.ravel(), -grads.ravel(), config.lr)
            cur = flat.reshape(cur.shape)
            if config.linf_clamp is not None:
                cur = np.clip(cur, x0 - config.linf_clamp, x0 + config.linf_clamp)
            cur = np.clip(cur, 0.0, 1.0)
            if m is not None:
                cur = np.where(m > 0, cur, x0)
            losses, _ = batch_losses(model, _encode_rows(cur, pad_to), theta, a)
            gained = losses > best_loss
            best[gained] = cur[gained]
            best_loss[gained] = losses[gained]
        x_adv[sl] = best
        for j in range(x0.shape[0]):
            records.append(AttackRecord(start + j, float(loss0[j]),
                                        float(best_loss[j]), config.iterations,
                                        bool(best_loss[j] > loss0[j])))
    return AttackResult(config, records, x_adv=x_adv)


def attack_type1(model: Classifier, theta, X, A, config: AttackConfig) -> AttackResult:
    """Unrestricted pixel attack: Adam ascent on every pixel."""
    if config.kind != AttackKind.TYPE1:
        raise ValueError("config.kind must be TYPE1")
    return _classical_attack(model, theta, X, A, config, masks=None)


def attack_type2(model: Classifier, theta, X, A, config: AttackConfig) -> AttackResult:
    """Masked attack: only pixels above the threshold in the original image
    move; all others are bitwise unchanged."""
    if config.kind != AttackKind.TYPE2:
        raise ValueError("config.kind must be TYPE2")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    masks = (X > config.mask_threshold).astype(float)
    return _classical_attack(model, theta, X, np.atleast_2d(A), config, masks=masks)


def attack_quantum(
    model: Classifier,
    theta,
    samples: list[QuantumSample],
    config: AttackConfig,
    g: float | None = None,
    tau: float | None = None,
) -> AttackResult:
    """Optimize the pre-evolution perturbation layer per sample.

    Each adversarial state is U_AA (U_psi |Neel>) rebuilt from the sample's
    stored (V/g, phi); the legitimate state's imbalance is compared against
    the perturbed one in the provenance record.
    """
    if config.kind != AttackKind.QUANTUM:
        raise ValueError("config.kind must be QUANTUM")
    theta = np.asarray(theta, dtype=float).copy()
    n = model.template.n_qubits
    neel = neel_state(n).amplitudes
    out_samples, layers, records = [], [], []
    for idx, s in enumerate(samples):
        kw = {}
        if g is not None:
            kw["g"] = g
        if tau is not None:
            kw["tau"] = tau
        u_aa = evolution_unitary(s.params(n, **kw))
        a = s.one_hot()
        psi = np.zeros(3 * n)
        state = AdamState.zeros(len(psi))
        loss0, _ = _psi_loss(model, theta, u_aa, psi, a, config.kappa, neel)
        best_psi, best_loss = psi.copy(), loss0
        for _ in range(config.iterations):
            grad = loss_grad_psi(model, theta, u_aa, psi, a, config.kappa, neel)
            state, psi = adam_step(state, psi, -grad, config.lr)
            cur, e = _psi_loss(model, theta, u_aa, psi, a, config.kappa, neel)
            if cur > best_loss:
                best_psi, best_loss = psi.copy(), cur
            if config.stop_on_flip and bool(e < 0.0) != bool(a[1] > a[0]):
                # predicted class now disagrees with the true label
                break
        layer = PerturbationLayer(best_psi, config.kappa)
        adv_amps = u_aa @ layer.apply(neel, n)
        adv_amps = adv_amps / np.linalg.norm(adv_amps)
        out_samples.append(replace(s, state=StateVector(n, adv_amps)))
        layers.append(layer)
        records.append(AttackRecord(idx, float(loss0), float(best_loss),
                                    config.iterations,
                                    bool(best_loss > loss0)))
    return AttackResult(config, records, samples=out_samples, layers=layers)


def _psi_loss(model, theta, u_aa, psi, a, kappa, neel) -> tuple[float, float]:
    pre = perturbation_states(model.template.n_qubits, kappa * np.sin(psi), neel)
    state = pre @ u_aa.T
    losses, e = batch_losses(model, None, theta, a[None, :], state)
    return float(losses[0]), float(e[0])


def imbalance_shift(before: list[QuantumSample], after: list[QuantumSample]) -> np.ndarray:
    """Per-sample |staggered imbalance change| between two aligned sets."""
    return np.array([
        abs(staggered_imbalance(b.state) - staggered_imbalance(p.state))
        for b, p in zip(before, after)
    ])


def adversarial_train(
    model: Classifier,
    legit_train: ArrayDataset,
    adv_train: ArrayDataset,
    config: TrainConfig,
    eval_sets: dict[str, ArrayDataset] | None = None,
    rng: np.random.Generator | None = None,
) -> TrainResult:
    """Retrain from scratch on the legit/adversarial union with mixed batches."""
    if len(legit_train.labels) == 0 or len(adv_train.labels) == 0:
        raise ValueError("both training sets must be non-empty")
    legit = replace_origin(legit_train, False)
    adv = replace_origin(adv_train, True)
    mixed = ArrayDataset.concat(legit, adv)
    return train(model, mixed, config, eval_sets=eval_sets)


def replace_origin(dataset: ArrayDataset, adversarial: bool) -> ArrayDataset:
    flags = np.full(len(dataset.labels), adversarial, dtype=bool)
    return ArrayDataset(dataset.labels, dataset.features, dataset.states, flags)


def save_provenance(result: AttackResult, path) -> None:
    doc = {
        "schema_version": PROVENANCE_SCHEMA_VERSION,
        "config": {
            "kind": result.config.kind.value,
            "iterations": result.config.iterations,
            "lr": result.config.lr,
            "mask_threshold": result.config.mask_threshold,
            "kappa": result.config.kappa,
            "linf_clamp": result.config.linf_clamp,
            "seed": result.config.seed,
        },
        "records": [
            {"sample_index": r.sample_index, "initial_loss": r.initial_loss,
             "final_loss": r.final_loss, "iterations": r.iterations,
             "improved": r.improved}
            for r in result.records
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
