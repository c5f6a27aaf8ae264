"""End-to-end acceptance suite.

Each test class maps to one acceptance criterion, in order: gradient
oracles, simulator invariants, Aubry-Andre evolution oracle, phase
structure, quantum-data classifier accuracy, classical classifier
accuracy, classical attack efficacy, quantum attack efficacy,
adversarial training, XEB decay fits, the encoding benchmark, and
pipeline determinism. Trained models are shared through module-scoped
fixtures because training dominates the suite's runtime.

Classical image criteria run on the synthetic two-class digit generator
pushed through the same downsample/encode/split pipeline as IDX data.
"""
import filecmp

import numpy as np
import pytest
import scipy.linalg

from qadvlab import adversarial, datasets, grad, optim, quantum_data, xeb
from qadvlab.circuits import (AngleSlot, ArchitectureSpec, CircuitTemplate,
                              Preset, SlotRole, build_template,
                              compile_single_qubit_runs)
from qadvlab.grad import Classifier, LossKind, batch_losses
from qadvlab.sim import (Gate, GateKind, StateVector, apply_circuit,
                         apply_gate, init_basis_state, neel_state,
                         overlap_fidelity)

FD_EPS = 1e-4

# Quantum-data classifier recipe (criterion: >= 0.98 train and test within
# 40 epochs for >= 3 of 4 seeds). Loss kind, learning rate, batch size and
# the init distribution are free; the small-magnitude init starts near the
# identity circuit, which trains far more reliably than uniform[0, 2pi).
QC_SEEDS = (101, 102, 103, 104)
QC_EPOCHS = 40
QC_LR = 0.05
QC_BATCH = 20
QC_LOSS = LossKind.CROSS_ENTROPY
QC_INIT_SCALE = 0.1

# Classical classifier recipe (pinned by the criterion).
CC_EPOCHS = 20
CC_LR = 0.05


def random_state(n, rng):
    amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return StateVector(n, amps / np.linalg.norm(amps))


def random_gates(n, depth, rng, two_qubit=True):
    gates = []
    kinds = [GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.RPHI, GateKind.H]
    for _ in range(depth):
        for q in range(1, n + 1):
            kind = kinds[rng.integers(len(kinds))]
            gates.append(Gate(kind, (q,), rng.uniform(0, 2 * np.pi),
                              rng.uniform(0, 2 * np.pi)))
        if two_qubit and n >= 2:
            q = int(rng.integers(1, n))
            kind = GateKind.CNOT if rng.integers(2) else GateKind.CZ
            gates.append(Gate(kind, (q, q + 1)))
    return gates


def random_template(rng):
    """Random mixed-role template, <= 6 qubits and <= 8 layers."""
    n = int(rng.integers(2, 7))
    depth = int(rng.integers(2, 9))
    program = []
    di = pi = 0
    for layer in range(depth):
        kind = GateKind.RX if layer % 2 == 0 else GateKind.RZ
        for q in range(1, n + 1):
            role = rng.integers(3)
            if role == 0:
                program.append(AngleSlot(kind, q, SlotRole.DATA,
                                         data_index=di, weight=2.0))
                di += 1
            elif role == 1:
                program.append(AngleSlot(kind, q, SlotRole.PARAM,
                                         param_index=pi))
                pi += 1
            else:
                program.append(AngleSlot(kind, q, SlotRole.DATA_PLUS_PARAM,
                                         data_index=di, weight=2.0,
                                         param_index=pi))
                di += 1
                pi += 1
        if n >= 2:
            q = int(rng.integers(1, n))
            program.append(Gate(GateKind.CNOT, (q, q + 1)))
    return CircuitTemplate(n, program)


# ---------------------------------------------------------------------------
# shared trained models


@pytest.fixture(scope="module")
def quantum_split():
    train_s, test_s = quantum_data.generate_dataset(500, 100, seed=7)
    s_tr, a_tr = quantum_data.samples_to_arrays(train_s)
    s_te, a_te = quantum_data.samples_to_arrays(test_s)
    return {
        "train_samples": train_s, "test_samples": test_s,
        "train": optim.ArrayDataset(a_tr, states=s_tr),
        "test": optim.ArrayDataset(a_te, states=s_te),
    }


def train_quantum_classifier(quantum_split, seed):
    template = build_template(ArchitectureSpec(Preset.AMPLITUDE_QUANTUM_10Q))
    model = Classifier(template, loss_kind=QC_LOSS)
    cfg = optim.TrainConfig(epochs=QC_EPOCHS, lr=QC_LR, batch_size=QC_BATCH,
                            seed=seed)
    rng = np.random.default_rng(seed)
    theta0 = rng.uniform(0.0, QC_INIT_SCALE, template.param_slot_count)
    result = optim.train(model, quantum_split["train"], cfg, theta0=theta0)
    _, train_acc = optim.evaluate(model, result.theta, quantum_split["train"])
    _, test_acc = optim.evaluate(model, result.theta, quantum_split["test"])
    return model, result.theta, train_acc, test_acc


@pytest.fixture(scope="module")
def quantum_models(quantum_split):
    return [(seed,) + train_quantum_classifier(quantum_split, seed)
            for seed in QC_SEEDS]


@pytest.fixture(scope="module")
def classical_split():
    images, labels = datasets.synthetic_digits(800, seed=3)
    return datasets.make_split(images, labels, n_train=500, n_test=100, seed=3)


@pytest.fixture(scope="module")
def classical_model(classical_split):
    template = build_template(ArchitectureSpec(Preset.INTERLEAVED_MEDICAL_10Q))
    model = Classifier(template)
    train_set = dataset_from(classical_split.train)
    test_set = dataset_from(classical_split.test)
    cfg = optim.TrainConfig(epochs=CC_EPOCHS, lr=CC_LR, seed=5)
    result = optim.train(model, train_set, cfg)
    _, test_acc = optim.evaluate(model, result.theta, test_set)
    return model, result.theta, test_acc


def dataset_from(samples):
    _, xe, a = datasets.split_to_arrays(samples)
    return optim.ArrayDataset(a, features=xe)


# ---------------------------------------------------------------------------
# 1. gradient oracle


class TestGradientOracle:
    def test_param_shift_and_loss_gradients_match_finite_differences(self):
        rng = np.random.default_rng(11)
        worst_e = worst_l = 0.0
        for _ in range(100):
            t = random_template(rng)
            x = rng.uniform(-1, 1, t.data_slot_count)
            theta = rng.uniform(0, 2 * np.pi, t.param_slot_count)
            k = int(rng.integers(1, t.n_qubits + 1))
            model = Classifier(t, measure_qubit=k)
            a = np.array([1.0, 0.0]) if rng.integers(2) else np.array([0.0, 1.0])

            # <sigma_z> derivative for one random slot
            slot = int(rng.integers(len(t.slots)))
            base = t.resolve_angles(x, theta)
            up, dn = base.copy(), base.copy()
            up[slot] += FD_EPS
            dn[slot] -= FD_EPS
            fd = (model.expectations(up[None, :])[0]
                  - model.expectations(dn[None, :])[0]) / (2 * FD_EPS)
            got = grad.param_shift(t, x, theta, k, slot)
            worst_e = max(worst_e, abs(got - fd))

            # CE loss gradient for one random parameter
            if t.param_slot_count:
                pi = int(rng.integers(t.param_slot_count))
                got_l = grad.loss_grad_theta(model, x, theta, a, [pi])[0]
                tp, tm = theta.copy(), theta.copy()
                tp[pi] += FD_EPS
                tm[pi] -= FD_EPS
                lp, _ = batch_losses(model, x[None, :], tp, a[None, :])
                lm, _ = batch_losses(model, x[None, :], tm, a[None, :])
                worst_l = max(worst_l, abs(got_l - (lp[0] - lm[0]) / (2 * FD_EPS)))
        assert worst_e < 1e-6
        assert worst_l < 1e-6


# ---------------------------------------------------------------------------
# 2. simulator invariants


class TestSimulatorInvariants:
    def test_norm_preserved_over_1000_random_gates(self):
        rng = np.random.default_rng(2)
        state = random_state(10, rng)
        count = 0
        while count < 1000:
            for gate in random_gates(10, 1, rng):
                state = apply_gate(state, gate)
                count += 1
        assert abs(np.linalg.norm(state.amplitudes) ** 2 - 1) < 1e-10

    def test_gate_inverse_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = int(rng.integers(1, 6))
            state = random_state(n, rng)
            gate = random_gates(n, 1, rng)[int(rng.integers(n))]
            back = apply_gate(apply_gate(state, gate), gate.inverse())
            assert overlap_fidelity(state, back) > 1 - 1e-12

    def test_compiled_circuits_match_uncompiled(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(2, 6))
            gates = random_gates(n, int(rng.integers(2, 7)), rng)
            state = random_state(n, rng)
            full = apply_circuit(state, gates)
            compiled = apply_circuit(state, compile_single_qubit_runs(gates))
            assert overlap_fidelity(full, compiled) > 1 - 1e-10


# ---------------------------------------------------------------------------
# 3. Aubry-Andre evolution oracle


class TestEvolutionOracle:
    @pytest.mark.parametrize("n", [2, 4, 6])
    def test_matches_dense_expm(self, n):
        rng = np.random.default_rng(n)
        for _ in range(5):
            params = quantum_data.AAParams(
                n, disorder=rng.uniform(0, 5) * quantum_data.DEFAULT_G,
                phase=rng.uniform(0, 2 * np.pi))
            state = random_state(n, rng)
            got = quantum_data.evolve(state, params)
            h = quantum_data.build_hamiltonian(params).toarray()
            want = scipy.linalg.expm(-1j * h * params.tau) @ state.amplitudes
            fid = abs(np.vdot(want, got.amplitudes)) ** 2
            assert fid > 1 - 1e-8

    def test_excitation_conserved_at_n10(self):
        rng = np.random.default_rng(9)
        state = neel_state(10)
        params = quantum_data.AAParams(
            10, disorder=3.0 * quantum_data.DEFAULT_G, phase=rng.uniform(0, 2 * np.pi))
        out = quantum_data.evolve(state, params)
        assert abs(quantum_data.total_excitation(out) - 5.0) < 1e-9


# ---------------------------------------------------------------------------
# 4. phase structure


class TestPhaseStructure:
    def test_imbalance_transition(self):
        ratios = [0.0, 1.0, 2.0, 4.0, 5.0]
        means, stds, _ = quantum_data.imbalance_sweep(ratios, n_phases=20, seed=1)
        # localized regime dominates thermal by at least 2x
        assert means[-1] >= 2 * means[0]
        # monotone non-decreasing within 1 sigma of each step
        for i in range(len(ratios) - 1):
            sigma = float(np.hypot(stds[i], stds[i + 1]))
            assert means[i + 1] >= means[i] - sigma


# ---------------------------------------------------------------------------
# 5. quantum-data classifier


class TestQuantumClassifier:
    def test_train_and_test_accuracy(self, quantum_models):
        good = sum(1 for _, _, _, tr, te in quantum_models
                   if tr >= 0.98 and te >= 0.98)
        accs = [(seed, tr, te) for seed, _, _, tr, te in quantum_models]
        assert good >= 3, f"only {good}/4 seeds reached 0.98: {accs}"


# ---------------------------------------------------------------------------
# 6. classical classifier


class TestClassicalClassifier:
    def test_test_accuracy(self, classical_model):
        _, _, test_acc = classical_model
        assert test_acc >= 0.95


# ---------------------------------------------------------------------------
# 7. classical attack efficacy


class TestClassicalAttacks:
    def test_type1_flip_rate(self, classical_model, classical_split):
        model, theta, _ = classical_model
        x, xe, a = datasets.split_to_arrays(classical_split.test)
        _, e = batch_losses(model, xe, theta, a)
        correct = np.nonzero(optim.predict_classes(e) == np.argmax(a, axis=1))[0][:50]
        assert len(correct) == 50
        cfg = adversarial.AttackConfig(adversarial.AttackKind.TYPE1,
                                       iterations=15, lr=0.1)
        out = adversarial.attack_type1(model, theta, x[correct], a[correct], cfg)
        _, e_adv = batch_losses(model, encode_rows(out.x_adv), theta, a[correct])
        flipped = optim.predict_classes(e_adv) != np.argmax(a[correct], axis=1)
        assert flipped.mean() >= 0.9

    def test_type2_flip_rate_and_mask_support(self, classical_model,
                                              classical_split):
        model, theta, _ = classical_model
        x, xe, a = datasets.split_to_arrays(classical_split.test)
        _, e = batch_losses(model, xe, theta, a)
        correct = np.nonzero(optim.predict_classes(e) == np.argmax(a, axis=1))[0][:50]
        cfg = adversarial.AttackConfig(adversarial.AttackKind.TYPE2,
                                       iterations=20, lr=0.3,
                                       mask_threshold=0.5)
        out = adversarial.attack_type2(model, theta, x[correct], a[correct], cfg)
        masks = x[correct] > cfg.mask_threshold
        moved = out.x_adv != x[correct]
        assert not np.any(moved & ~masks)  # support strictly inside the mask
        _, e_adv = batch_losses(model, encode_rows(out.x_adv), theta, a[correct])
        flipped = optim.predict_classes(e_adv) != np.argmax(a[correct], axis=1)
        assert flipped.mean() >= 0.6


def encode_rows(x_rows, pad_to=260):
    return np.stack([datasets.encode(r, pad_to=pad_to) for r in x_rows])


# ---------------------------------------------------------------------------
# 8. quantum attack


class TestQuantumAttack:
    def test_flip_rates_and_imbalance_budget(self, quantum_split, quantum_models):
        _, model, theta, _, _ = max(quantum_models, key=lambda m: m[4])
        by_label = {
            quantum_data.PhaseLabel.LOCALIZED: [],
            quantum_data.PhaseLabel.THERMAL: [],
        }
        for s in quantum_split["test_samples"]:
            by_label[s.label].append(s)
        cfg = adversarial.AttackConfig(adversarial.AttackKind.QUANTUM,
                                       iterations=40, lr=0.05,
                                       stop_on_flip=True)
        rates, shifts = {}, {}
        for label, samples in by_label.items():
            states, a = quantum_data.samples_to_arrays(samples)
            _, e0 = batch_losses(model, None, theta, a, states)
            correct = [i for i in range(len(samples))
                       if optim.predict_classes(e0[i:i + 1])[0] == np.argmax(a[i])]
            subset = [samples[i] for i in correct]
            out = adversarial.attack_quantum(model, theta, subset, cfg)
            s_adv, a_sub = quantum_data.samples_to_arrays(out.samples)
            _, e1 = batch_losses(model, None, theta, a_sub, s_adv)
            flipped = optim.predict_classes(e1) != np.argmax(a_sub, axis=1)
            rates[label] = flipped.mean()
            shifts[label] = adversarial.imbalance_shift(subset, out.samples).mean()
            for layer in out.layers:
                assert np.max(np.abs(layer.deltas())) <= cfg.kappa + 1e-12
        assert rates[quantum_data.PhaseLabel.LOCALIZED] >= 0.8, rates
        assert rates[quantum_data.PhaseLabel.THERMAL] >= 0.3, rates
        assert shifts[quantum_data.PhaseLabel.LOCALIZED] < 0.2, shifts


# ---------------------------------------------------------------------------
# 9. adversarial training


class TestAdversarialTraining:
    def test_mixed_retraining_restores_accuracy(self, classical_model,
                                                classical_split):
        model, theta, _ = classical_model
        cfg = adversarial.AttackConfig(adversarial.AttackKind.TYPE1,
                                       iterations=15, lr=0.1)
        x_tr, _, a_tr = datasets.split_to_arrays(classical_split.train)
        x_te, _, a_te = datasets.split_to_arrays(classical_split.test)
        adv_tr = adversarial.attack_type1(model, theta, x_tr, a_tr, cfg)
        adv_te = adversarial.attack_type1(model, theta, x_te, a_te, cfg)

        legit_train = dataset_from(classical_split.train)
        legit_test = dataset_from(classical_split.test)
        adv_train = optim.ArrayDataset(a_tr, features=encode_rows(adv_tr.x_adv))
        adv_test = optim.ArrayDataset(a_te, features=encode_rows(adv_te.x_adv))

        train_cfg = optim.TrainConfig(epochs=30, lr=CC_LR, seed=6,
                                      mixed_batch=(10, 10))
        result = adversarial.adversarial_train(model, legit_train, adv_train,
                                               train_cfg)
        _, acc_legit = optim.evaluate(model, result.theta, legit_test)
        _, acc_adv = optim.evaluate(model, result.theta, adv_test)
        assert acc_legit >= 0.9, (acc_legit, acc_adv)
        assert acc_adv >= 0.9, (acc_legit, acc_adv)


# ---------------------------------------------------------------------------
# 10. XEB


class TestXeb:
    @pytest.mark.parametrize("n", [1, 2])
    def test_noiseless_alpha_is_one(self, n):
        cfg = xeb.XebConfig(n_qubits=n, cycles=(1, 5, 10), n_circuits=10,
                            seed=n)
        result = xeb.run_xeb(cfg)
        assert np.all(np.abs(np.asarray(result.alphas) - 1.0) < 1e-9)

    @pytest.mark.parametrize("n", [1, 2])
    def test_noisy_decay_matches_depolarizing_prediction(self, n):
        p = 0.005
        cfg = xeb.XebConfig(n_qubits=n, cycles=(1, 5, 10, 16, 24, 34),
                            n_circuits=30, trajectories=400,
                            noise=xeb.NoiseSpec(p), seed=n)
        result = xeb.run_xeb(cfg)
        predicted = xeb.depolarizing_prediction(p, n)
        assert abs(result.error_per_cycle - predicted) <= 0.25 * predicted


# ---------------------------------------------------------------------------
# 11. encoding benchmark


class TestEncodingBenchmark:
    def test_interleaved_beats_encoding_first(self):
        images, labels = datasets.synthetic_digits(1600, seed=13)
        split = datasets.make_split(images, labels, n_train=1000, n_test=400,
                                    seed=13, pad_to=270)
        train_set = dataset_from(split.train)
        test_set = dataset_from(split.test)
        wins = 0
        for seed in (0, 1, 2, 3):
            finals = {}
            for preset in (Preset.BENCHMARK_540, Preset.ENCODING_FIRST_540):
                template = build_template(ArchitectureSpec(preset))
                model = Classifier(template)
                cfg = optim.TrainConfig(epochs=8, lr=0.003, seed=seed)
                result = optim.train(model, train_set, cfg)
                _, acc = optim.evaluate(model, result.theta, test_set)
                finals[preset] = acc
            if finals[Preset.BENCHMARK_540] >= finals[Preset.ENCODING_FIRST_540]:
                wins += 1
        assert wins >= 3


# ---------------------------------------------------------------------------
# 12. determinism


class TestDeterminism:
    """Shortened reruns through the exact code paths of criteria 5-9;
    metrics CSVs must be byte-identical across reruns."""

    def run_quantum(self, out_csv, quantum_split):
        template = build_template(ArchitectureSpec(Preset.AMPLITUDE_QUANTUM_10Q))
        model = Classifier(template, loss_kind=QC_LOSS)
        cfg = optim.TrainConfig(epochs=2, lr=QC_LR, batch_size=QC_BATCH, seed=42)
        result = optim.train(model, quantum_split["train"], cfg,
                             eval_sets={"test": quantum_split["test"]})
        optim.write_metrics_csv(result.history, out_csv)
        return result.theta

    def run_classical(self, out_csv, classical_split):
        template = build_template(ArchitectureSpec(Preset.INTERLEAVED_MEDICAL_10Q))
        model = Classifier(template)
        train_set = dataset_from(classical_split.train)
        test_set = dataset_from(classical_split.test)
        cfg = optim.TrainConfig(epochs=2, lr=CC_LR, seed=42)
        result = optim.train(model, train_set, cfg,
                             eval_sets={"test": test_set})
        optim.write_metrics_csv(result.history, out_csv)
        return model, result.theta

    def test_training_pipelines_are_byte_deterministic(self, tmp_path,
                                                       quantum_split,
                                                       classical_split):
        a, b = tmp_path / "q_a.csv", tmp_path / "q_b.csv"
        self.run_quantum(a, quantum_split)
        self.run_quantum(b, quantum_split)
        assert filecmp.cmp(a, b, shallow=False)

        a, b = tmp_path / "c_a.csv", tmp_path / "c_b.csv"
        model, theta = self.run_classical(a, classical_split)
        self.run_classical(b, classical_split)
        assert filecmp.cmp(a, b, shallow=False)

        # attack + adversarial retrain reruns (criteria 7-9 code paths)
        x, _, lab = datasets.split_to_arrays(classical_split.test[:10])
        cfg = adversarial.AttackConfig(adversarial.AttackKind.TYPE1,
                                       iterations=3, lr=0.1)
        r1 = adversarial.attack_type1(model, theta, x, lab, cfg)
        r2 = adversarial.attack_type1(model, theta, x, lab, cfg)
        assert np.array_equal(r1.x_adv, r2.x_adv)

        adv_set = optim.ArrayDataset(lab, features=encode_rows(r1.x_adv))
        legit = dataset_from(classical_split.train[:20])
        tc = optim.TrainConfig(epochs=2, lr=CC_LR, seed=9, mixed_batch=(5, 5))
        h1 = adversarial.adversarial_train(model, legit, adv_set, tc)
        h2 = adversarial.adversarial_train(model, legit, adv_set, tc)
        p1, p2 = tmp_path / "m_a.csv", tmp_path / "m_b.csv"
        optim.write_metrics_csv(h1.history, p1)
        optim.write_metrics_csv(h2.history, p2)
        assert filecmp.cmp(p1, p2, shallow=False)
        assert np.array_equal(h1.theta, h2.theta)

    def test_quantum_attack_rerun_identical(self, quantum_split):
        template = build_template(ArchitectureSpec(Preset.AMPLITUDE_QUANTUM_10Q))
        model = Classifier(template, loss_kind=QC_LOSS)
        theta = np.random.default_rng(1).uniform(0, 0.2, template.param_slot_count)
        samples = quantum_split["test_samples"][:4]
        cfg = adversarial.AttackConfig(adversarial.AttackKind.QUANTUM,
                                       iterations=3, lr=0.1)
        r1 = adversarial.attack_quantum(model, theta, samples, cfg)
        r2 = adversarial.attack_quantum(model, theta, samples, cfg)
        for s1, s2 in zip(r1.samples, r2.samples):
            assert np.array_equal(s1.state.amplitudes, s2.state.amplitudes)
