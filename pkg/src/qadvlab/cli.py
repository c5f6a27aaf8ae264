"""Configuration-driven experiment runner.

Every command reads a JSON config (flags override individual keys),
seeds all randomness from the single top-level seed, and writes a
deterministic artifact tree: a copy of the effective config, metrics
CSVs, checkpoint and summary JSON. Validation problems exit with status
2, runtime failures with 1.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import adversarial, circuits, datasets, grad, optim, quantum_data, xeb
from .sim import NoiseSpec

CONFIG_SCHEMA_VERSION = 1
OUT_ROOT_ENV = "QADVLAB_OUT_ROOT"
COMMANDS = ("train", "eval", "attack", "advtrain", "gen-qdata", "xeb",
            "benchmark-encodings")


class ConfigError(ValueError):
    pass


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def load_config(path, overrides: dict) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    _require(cfg.get("schema_version") == CONFIG_SCHEMA_VERSION,
             "config schema_version must be 1")
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    _require(cfg.get("command") in COMMANDS,
             f"command must be one of {COMMANDS}")
    _require("seed" in cfg and isinstance(cfg["seed"], int),
             "an integer seed is mandatory")
    return cfg


def _out_dir(cfg: dict) -> Path:
    root = cfg.get("out_dir") or os.environ.get(OUT_ROOT_ENV) or "runs"
    out = Path(root)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_config(cfg: dict, out: Path) -> None:
    with open(out / "config.json", "w") as fh:
        json.dump(cfg, fh, sort_keys=True, indent=1)


def _architecture(cfg: dict) -> circuits.ArchitectureSpec:
    arch = cfg.get("architecture", {})
    preset = circuits.Preset(arch.get("preset", "INTERLEAVED_MEDICAL_10Q"))
    return circuits.ArchitectureSpec(preset, arch.get("n_qubits", 10),
                                     arch.get("data_weight", 2.0))


def _model(cfg: dict) -> grad.Classifier:
    template = circuits.build_template(_architecture(cfg))
    return grad.Classifier(template, measure_qubit=cfg.get("measure_qubit", 5),
                           loss_kind=grad.LossKind(cfg.get("loss",
                                                           "CROSS_ENTROPY")))


def _train_config(cfg: dict) -> optim.TrainConfig:
    t = cfg.get("train", {})
    _require("epochs" in t, "train.epochs is required")
    kind = optim.ScheduleKind(t.get("schedule", "GROUPED_BY_QUBIT"))
    subset = None
    if kind == optim.ScheduleKind.FIXED_SUBSET:
        subset = np.asarray(t.get("subset", []), dtype=np.intp)
        _require(len(subset) > 0, "FIXED_SUBSET schedule needs train.subset")
    mixed = t.get("mixed_batch")
    return optim.TrainConfig(
        epochs=t["epochs"], lr=t.get("lr", 0.05),
        batch_size=t.get("batch_size", 20), eval_batch=t.get("eval_batch", 50),
        schedule=optim.Schedule(kind, subset), seed=cfg["seed"],
        mixed_batch=tuple(mixed) if mixed else None)


def _attack_config(cfg: dict) -> adversarial.AttackConfig:
    a = cfg.get("attack", {})
    return adversarial.AttackConfig(
        kind=adversarial.AttackKind(a.get("kind", "TYPE1")),
        iterations=a.get("iterations", 30), lr=a.get("lr", 0.1),
        mask_threshold=a.get("mask_threshold", 0.0),
        kappa=a.get("kappa", 0.5), linf_clamp=a.get("linf_clamp"),
        seed=cfg["seed"])


def _classical_split(cfg: dict) -> datasets.DatasetSplit:
    ds = cfg.get("dataset", {})
    kind = ds.get("kind")
    _require(kind in ("idx", "snapshot", "synthetic"),
             "dataset.kind must be idx, snapshot, or synthetic")
    if kind == "snapshot":
        _require(os.path.exists(ds["path"]), f"missing snapshot {ds.get('path')}")
        return datasets.load_split(ds["path"])
    if kind == "idx":
        for key in ("images", "labels"):
            _require(os.path.exists(ds.get(key, "")), f"missing dataset.{key}")
        images, labels = datasets.load_idx(
            ds["images"], ds["labels"],
            keep_labels=set(ds.get("class_labels", (0, 1))))
    else:
        images, labels = datasets.synthetic_digits(
            ds.get("n_images", 1400), seed=cfg["seed"] + 1)
    return datasets.make_split(
        images, labels, n_train=ds.get("n_train", 500),
        n_test=ds.get("n_test", 100), seed=cfg["seed"],
        class_labels=tuple(ds.get("class_labels", (0, 1))),
        pad_to=ds.get("pad_to", 260), mode=ds.get("encoding", "l2"))


def _split_datasets(split: datasets.DatasetSplit):
    def pack(samples):
        _, xe, a = datasets.split_to_arrays(samples)
        return optim.ArrayDataset(a, features=xe)

    return pack(split.train), pack(split.test)


def _summary(out: Path, payload: dict) -> None:
    with open(out / "summary.json", "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)


def _final_metrics(history, split: str):
    rows = [r for r in history if r.split == split]
    return (rows[-1].loss, rows[-1].accuracy) if rows else (None, None)


def cmd_train(cfg: dict, out: Path) -> None:
    model = _model(cfg)
    split = _classical_split(cfg)
    train_set, test_set = _split_datasets(split)
    result = optim.train(model, train_set, _train_config(cfg),
                         eval_sets={"train": train_set, "test": test_set})
    optim.write_metrics_csv(result.history, out / "metrics.csv")
    optim.save_checkpoint(out / "checkpoint.json", result.theta, result.adam,
                          meta={"command": "train", "seed": cfg["seed"]})
    datasets.save_split(split, out / "dataset.json")
    loss, acc = _final_metrics(result.history, "test")
    _summary(out, {"command": "train", "final_test_loss": loss,
                   "final_test_accuracy": acc})


def cmd_eval(cfg: dict, out: Path) -> None:
    _require(os.path.exists(cfg.get("checkpoint", "")), "missing checkpoint")
    model = _model(cfg)
    theta, _, _ = optim.load_checkpoint(cfg["checkpoint"])
    split = _classical_split(cfg)
    _, test_set = _split_datasets(split)
    loss, acc = optim.evaluate(model, theta, test_set)
    _summary(out, {"command": "eval", "loss": loss, "accuracy": acc})


def cmd_attack(cfg: dict, out: Path) -> None:
    _require(os.path.exists(cfg.get("checkpoint", "")), "missing checkpoint")
    model = _model(cfg)
    theta, _, _ = optim.load_checkpoint(cfg["checkpoint"])
    split = _classical_split(cfg)
    x_raw, _, a = datasets.split_to_arrays(split.test)
    config = _attack_config(cfg)
    if config.kind == adversarial.AttackKind.TYPE1:
        result = adversarial.attack_type1(model, theta, x_raw, a, config)
    elif config.kind == adversarial.AttackKind.TYPE2:
        result = adversarial.attack_type2(model, theta, x_raw, a, config)
    else:
        raise ConfigError("quantum attacks run through gen-qdata pipelines")
    adversarial.save_provenance(result, out / "provenance.json")
    adv_samples = datasets.make_samples(
        result.x_adv.reshape(-1, 16, 16), np.argmax(a, axis=1),
        class_labels=(0, 1), id_prefix="adv-")
    datasets.save_split(datasets.DatasetSplit([], adv_samples),
                        out / "adversarial.json")
    _, xe_adv, _ = datasets.split_to_arrays(adv_samples)
    _, e0 = grad.batch_losses(model, np.stack([s.x_encoded for s in split.test]),
                              theta, a)
    _, e1 = grad.batch_losses(model, xe_adv, theta, a)
    flips = result.flip_mask(e0, e1)
    _summary(out, {"command": "attack", "kind": config.kind.value,
                   "flip_rate": float(flips.mean())})


def cmd_advtrain(cfg: dict, out: Path) -> None:
    _require(os.path.exists(cfg.get("checkpoint", "")), "missing checkpoint")
    model = _model(cfg)
    theta_star, _, _ = optim.load_checkpoint(cfg["checkpoint"])
    split = _classical_split(cfg)
    config = _attack_config(cfg)
    attack_sets = {}
    for name, samples in (("train", split.train), ("test", split.test)):
        x_raw, _, a = datasets.split_to_arrays(samples)
        result = adversarial.attack_type1(model, theta_star, x_raw, a, config)
        adversarial.save_provenance(result, out / f"provenance_{name}.json")
        xe = np.stack([datasets.encode(row, pad_to=model.template.data_slot_count)
                       for row in result.x_adv])
        attack_sets[name] = optim.ArrayDataset(a, features=xe)
    legit_train, legit_test = _split_datasets(split)
    train_cfg = _train_config(cfg)
    result = adversarial.adversarial_train(
        model, legit_train, attack_sets["train"], train_cfg,
        eval_sets={"legit_test": legit_test, "adv_test": attack_sets["test"]})
    optim.write_metrics_csv(result.history, out / "metrics.csv")
    optim.save_checkpoint(out / "checkpoint.json", result.theta, result.adam,
                          meta={"command": "advtrain", "seed": cfg["seed"]})
    _summary(out, {
        "command": "advtrain",
        "final_legit_accuracy": _final_metrics(result.history, "legit_test")[1],
        "final_adv_accuracy": _final_metrics(result.history, "adv_test")[1],
    })


def cmd_gen_qdata(cfg: dict, out: Path) -> None:
    q = cfg.get("quantum", {})
    train, test = quantum_data.generate_dataset(
        n_train=q.get("n_train", 500), n_test=q.get("n_test", 100),
        seed=cfg["seed"], n_qubits=q.get("n_qubits", 10))
    quantum_data.save_quantum_dataset(train, out / "train.json", out / "train.bin")
    quantum_data.save_quantum_dataset(test, out / "test.json", out / "test.bin")
    ratios = q.get("sweep_ratios", [0, 1, 2, 4, 5])
    means, stds, profiles = quantum_data.imbalance_sweep(
        ratios, n_phases=q.get("sweep_phases", 20), seed=cfg["seed"],
        n_qubits=q.get("n_qubits", 10))
    emit_imbalance_csv(out / "imbalance_sweep.csv", ratios, means, stds)
    emit_profile_csv(out / "excitation_grid.csv", ratios, profiles)
    _summary(out, {"command": "gen-qdata", "n_train": len(train),
                   "n_test": len(test),
                   "imbalance_means": [float(m) for m in means]})


def cmd_xeb(cfg: dict, out: Path) -> None:
    x = cfg.get("xeb", {})
    _require("cycles" in x, "xeb.cycles is required")
    config = xeb.XebConfig(
        n_qubits=x.get("n_qubits", 1), cycles=tuple(x["cycles"]),
        n_circuits=x.get("n_circuits", 50), shots=x.get("shots"),
        trajectories=x.get("trajectories", 200),
        noise=NoiseSpec(x.get("pauli_prob", 0.0)), seed=cfg["seed"])
    result = xeb.run_xeb(config)
    xeb.write_xeb_csv(result, out / "xeb.csv")
    xeb.write_xeb_summary(result, out / "summary.json")


def cmd_benchmark_encodings(cfg: dict, out: Path) -> None:
    split = _classical_split(cfg)
    train_set, test_set = _split_datasets(split)
    train_cfg = _train_config(cfg)
    finals = {}
    for preset in (circuits.Preset.BENCHMARK_540, circuits.Preset.ENCODING_FIRST_540):
        arch = circuits.ArchitectureSpec(preset, 10, 2.0)
        model = grad.Classifier(circuits.build_template(arch),
                                measure_qubit=cfg.get("measure_qubit", 5))
        result = optim.train(model, train_set, train_cfg,
                             eval_sets={"test": test_set})
        name = preset.value.lower()
        optim.write_metrics_csv(result.history, out / f"metrics_{name}.csv")
        finals[name] = _final_metrics(result.history, "test")[1]
    _summary(out, {"command": "benchmark-encodings",
                   "final_test_accuracy": finals})


def emit_imbalance_csv(path, ratios, means, stds) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v_over_g", "imbalance_mean", "imbalance_std"])
        for r, m, s in zip(ratios, means, stds):
            w.writerow([repr(float(r)), repr(float(m)), repr(float(s))])


def emit_profile_csv(path, ratios, profiles) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v_over_g", "qubit", "p1"])
        for r, prof in zip(ratios, profiles):
            for q, p1 in enumerate(prof, start=1):
                w.writerow([repr(float(r)), q, repr(float(p1))])


def emit_expectation_scatter(path, model, theta, dataset: optim.ArrayDataset) -> None:
    """Per-sample <sigma_z> with the true class, for Fig.-style scatters."""
    import csv

    f, s, a = dataset.take(np.arange(len(dataset)))
    _, e = grad.batch_losses(model, f, theta, a, s)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "expectation_z", "true_class"])
        for i, (ei, ai) in enumerate(zip(e, a)):
            w.writerow([i, repr(float(ei)), int(np.argmax(ai))])


_HANDLERS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "attack": cmd_attack,
    "advtrain": cmd_advtrain,
    "gen-qdata": cmd_gen_qdata,
    "xeb": cmd_xeb,
    "benchmark-encodings": cmd_benchmark_encodings,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qadvlab",
        description="Quantum adversarial learning workbench")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker hint; never changes numeric output")
    parser.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, {
            "command": args.command, "seed": args.seed, "out_dir": args.out,
            "threads": args.threads,
        })
        out = _out_dir(cfg)
    except (OSError, ConfigError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        _dump_config(cfg, out)
        _HANDLERS[cfg["command"]](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runner boundary
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
