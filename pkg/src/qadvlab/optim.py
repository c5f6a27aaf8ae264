"""Adam optimizer and the grouped / fixed-subset / full training schedules.

Reproducibility contract: every random draw flows from the config seed
through a single generator consumed in a fixed order, and all batch
reductions are in fixed sample order, so identical configs give
bit-identical metrics.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .grad import Classifier, batch_loss_grad_theta, batch_losses

CHECKPOINT_SCHEMA_VERSION = 1


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def zeros(n: int) -> "AdamState":
        return AdamState(np.zeros(n), np.zeros(n))


def adam_step(state: AdamState, params, grads, lr: float) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; returns fresh state and params."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads, and Adam state must have equal shapes")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return AdamState(m, v, t, state.beta1, state.beta2, state.eps), new_params


class ScheduleKind(str, Enum):
    GROUPED_BY_QUBIT = "GROUPED_BY_QUBIT"
    FIXED_SUBSET = "FIXED_SUBSET"
    FULL = "FULL"


@dataclass
class Schedule:
    kind: ScheduleKind
    subset: np.ndarray | None = None  # FIXED_SUBSET only

    def groups(self, model: Classifier, n_params: int) -> list[np.ndarray]:
        if self.kind == ScheduleKind.GROUPED_BY_QUBIT:
            groups = model.template.param_groups_by_qubit()
            covered = np.sort(np.concatenate(groups))
            if not np.array_equal(covered, np.arange(n_params)):
                raise ValueError("group schedule must cover each index exactly once")
            return groups
        if self.kind == ScheduleKind.FIXED_SUBSET:
            if self.subset is None:
                raise ValueError("FIXED_SUBSET schedule needs indices")
            return [np.asarray(self.subset, dtype=np.intp)]
        return [np.arange(n_params, dtype=np.intp)]


@dataclass
class TrainConfig:
    epochs: int
    lr: float = 0.05
    batch_size: int = 20
    eval_batch: int = 50
    schedule: Schedule = field(default_factory=lambda: Schedule(ScheduleKind.GROUPED_BY_QUBIT))
    seed: int = 0
    # per-batch draw counts from (legitimate, adversarial) pools; None = plain
    mixed_batch: tuple[int, int] | None = None

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class ArrayDataset:
    """Either encoded-feature rows or prepared input states, plus labels."""

    labels: np.ndarray  # (N, 2) one-hot
    features: np.ndarray | None = None  # (N, D) encoded vectors
    states: np.ndarray | None = None  # (N, 2**n) amplitudes
    origin: np.ndarray | None = None  # True = adversarial (mixed batches)

    def __post_init__(self):
        if (self.features is None) == (self.states is None):
            raise ValueError("exactly one of features/states must be set")
        if len(self.labels) != len(self):
            raise ValueError("labels length mismatch")

    def __len__(self) -> int:
        src = self.features if self.features is not None else self.states
        return src.shape[0]

    def take(self, idx) -> tuple:
        """(features_or_None, states_or_None, labels) rows."""
        f = self.features[idx] if self.features is not None else None
        s = self.states[idx] if self.states is not None else None
        return f, s, self.labels[idx]

    @staticmethod
    def concat(a: "ArrayDataset", b: "ArrayDataset") -> "ArrayDataset":
        if (a.features is None) != (b.features is None):
            raise ValueError("cannot mix feature and state datasets")
        return ArrayDataset(
            labels=np.concatenate([a.labels, b.labels]),
            features=None if a.features is None else np.concatenate([a.features, b.features]),
            states=None if a.states is None else np.concatenate([a.states, b.states]),
            origin=np.concatenate([
                np.zeros(len(a), bool) if a.origin is None else a.origin,
                np.ones(len(b), bool) if b.origin is None else b.origin,
            ]),
        )


@dataclass
class MetricsRow:
    epoch: int
    split: str
    loss: float
    accuracy: float


@dataclass
class TrainResult:
    theta: np.ndarray
    history: list[MetricsRow]
    adam: list[AdamState]


def predict_classes(expectations: np.ndarray) -> np.ndarray:
    """0 for class 1 (<sigma_z> >= 0), 1 for class 2; ties go to class 1."""
    return (np.asarray(expectations) < 0.0).astype(int)


def evaluate(model: Classifier, theta, dataset: ArrayDataset, indices=None) -> tuple[float, float]:
    """(mean loss, accuracy) over the dataset or the given row indices."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    if indices is None:
        indices = np.arange(len(dataset))
    f, s, a = dataset.take(indices)
    losses, e = batch_losses(model, f, theta, a, s)
    acc = float(np.mean(predict_classes(e) == np.argmax(a, axis=1)))
    return float(losses.mean()), acc


def init_theta(n_params: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, 2.0 * np.pi, n_params)


def _draw_batch(rng: np.random.Generator, dataset: ArrayDataset,
                config: TrainConfig) -> np.ndarray:
    if config.mixed_batch is None:
        k = min(config.batch_size, len(dataset))
        return rng.choice(len(dataset), size=k, replace=False)
    n_legit, n_adv = config.mixed_batch
    legit = np.nonzero(~dataset.origin)[0]
    adv = np.nonzero(dataset.origin)[0]
    pick_l = rng.choice(legit, size=min(n_legit, len(legit)), replace=False)
    pick_a = rng.choice(adv, size=min(n_adv, len(adv)), replace=False)
    return np.concatenate([pick_l, pick_a])


def train(
    model: Classifier,
    train_set: ArrayDataset,
    config: TrainConfig,
    eval_sets: dict[str, ArrayDataset] | None = None,
    theta0: np.ndarray | None = None,
) -> TrainResult:
    """Run the configured schedule; per epoch, each group gets one Adam
    step on a fresh random batch, and every eval split is scored on a
    random eval batch (full split if smaller)."""
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    n_params = model.template.param_slot_count
    rng = np.random.default_rng(config.seed)
    theta = init_theta(n_params, rng) if theta0 is None else np.asarray(theta0, float).copy()
    groups = config.schedule.groups(model, n_params)
    adam = [AdamState.zeros(len(g)) for g in groups]
    eval_sets = eval_sets if eval_sets is not None else {}
    history: list[MetricsRow] = []

    def record(epoch: int) -> None:
        for split in sorted(eval_sets):
            ds = eval_sets[split]
            k = min(config.eval_batch, len(ds))
            idx = rng.choice(len(ds), size=k, replace=False)
            l, acc = evaluate(model, theta, ds, idx)
            history.append(MetricsRow(epoch, split, l, acc))

    record(0)
    for epoch in range(1, config.epochs + 1):
        for gi, group in enumerate(groups):
            idx = _draw_batch(rng, train_set, config)
            f, s, a = train_set.take(idx)
            g = batch_loss_grad_theta(model, f, theta, a, group, s)
            adam[gi], updated = adam_step(adam[gi], theta[group], g, config.lr)
            theta = theta.copy()
            theta[group] = updated
        record(epoch)
    return TrainResult(theta, history, adam)


def write_metrics_csv(history: list[MetricsRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "split", "loss", "accuracy"])
        for row in history:
            w.writerow([row.epoch, row.split, repr(row.loss), repr(row.accuracy)])


def save_checkpoint(path, theta: np.ndarray, adam: list[AdamState],
                    rng_state=None, meta: dict | None = None) -> None:
    doc = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "theta": [float(x) for x in np.asarray(theta)],
        "adam": [
            {"m": s.m.tolist(), "v": s.v.tolist(), "t": s.t,
             "beta1": s.beta1, "beta2": s.beta2, "eps": s.eps}
            for s in adam
        ],
        "rng_state": rng_state,
        "meta": meta or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_checkpoint(path) -> tuple[np.ndarray, list[AdamState], dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise ValueError("unsupported checkpoint schema version")
    theta = np.array(doc["theta"], dtype=float)
    adam = [AdamState(np.array(s["m"]), np.array(s["v"]), s["t"],
                      s["beta1"], s["beta2"], s["eps"]) for s in doc["adam"]]
    return theta, adam, doc.get("meta", {})
