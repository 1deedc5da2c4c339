import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lstm_oracle import lstm_gradient_error
from kgembed.embeddings import EmbeddingTable
from kgembed.errors import EmptyDataset, NoMappedCodes, ShapeMismatch
from kgembed.patient import (AllDiagnoses, CycleRule, FrequentTopK, LSTMParams, PatientModelConfig, RareTopK,
                             RecallAtK, VisitSequence, ZipfMarkovRule, apply_grouping, embed_visit,
                             evaluate_prediction, generate_synthetic_cohort, load_code_grouping, load_cohort,
                             lstm_forward, restricted_codes, save_cohort, score_predictions, shuffle_targets,
                             split_patients, train_patient_model, visit_code_counts)


def table(vectors):
    return EmbeddingTable(np.asarray(vectors, dtype=float), "euclidean", [f"C{i}" for i in range(len(vectors))])


class TestVisitEmbedding:
    def test_single(self):
        t = table([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(embed_visit([1], t, {0: "C0", 1: "C1"}).vector, [3.0, 4.0])

    def test_symmetric_cancel(self):
        t = table([[1.0, -2.0], [-1.0, 2.0]])
        assert np.allclose(embed_visit([0, 1], t, {0: "C0", 1: "C1"}).vector, 0)

    def test_unmapped_skipped(self):
        t = table([[1.0, 0.0], [3.0, 0.0]])
        vv = embed_visit([0, 1, 2], t, {0: "C0", 1: "C1", 2: "NOPE"})
        assert vv.skipped == 1 and np.allclose(vv.vector, [2.0, 0.0])

    def test_none_mapped(self):
        with pytest.raises(NoMappedCodes):
            embed_visit([5], table([[1.0]]), {})


class TestLSTM:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 6))
    def test_softmax_normalized(self, seed, t):
        rng = np.random.default_rng(seed)
        params = LSTMParams.init(3, 4, 9, rng)
        _, probs = lstm_forward(rng.normal(size=(t, 3)) * 5, params)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_zero_params(self):
        hid, probs = lstm_forward(np.ones((4, 3)), LSTMParams.zeros(3, 5, 8))
        assert np.all(hid == 0) and np.allclose(probs, 1 / 8)

    def test_shape_checks(self):
        with pytest.raises(ShapeMismatch):
            lstm_forward(np.ones((2, 4)), LSTMParams.zeros(3, 5, 8))

    def test_forget_bias(self):
        p = LSTMParams.init(2, 3, 4, np.random.default_rng(0))
        assert np.all(p.b[3:6] == 1.0) and np.all(p.b[:3] == 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_finite_differences(self, seed):
        assert lstm_gradient_error(seed) < 1e-4


class TestScoring:
    def test_perfect(self):
        targets = [[0, 2], [1], [3, 4, 5]]
        preds = [np.isin(np.arange(6), t).astype(float) for t in targets]
        counts = np.array([5, 4, 3, 3, 2, 1])
        for obj in (AllDiagnoses(), FrequentTopK(3), RareTopK(3, 1), RecallAtK(2)):
            assert score_predictions(preds, targets, obj, counts)[0] == 1.0

    def test_uniform_expectation(self):
        rng = np.random.default_rng(0)
        m = 284
        scores = []
        for _ in range(3000):
            pred = rng.random(m)
            true = rng.choice(m, 10, replace=False)
            scores.append(score_predictions([pred], [true], AllDiagnoses())[0])
        assert np.mean(scores) == pytest.approx(10 / 284, abs=0.005)

    def test_restricted_sets(self):
        counts = np.array([10, 1, 7, 7, 0, 3])
        assert restricted_codes(FrequentTopK(3), counts).tolist() == [0, 2, 3]
        assert restricted_codes(RareTopK(2, 2), counts).tolist() == [2, 5]
        assert restricted_codes(AllDiagnoses(), counts) is None

    def test_recall_denominator(self):
        pred = np.array([0.5, 0.3, 0.1, 0.1])
        assert score_predictions([pred], [[0, 2, 3]], RecallAtK(1))[0] == 1.0
        assert score_predictions([pred], [[0, 2, 3]], RecallAtK(2))[0] == 0.5

    def test_visits_outside_subset_skipped(self):
        counts = np.array([5, 0, 0])
        score, n = score_predictions([np.ones(3), np.ones(3)], [[0], [2]], FrequentTopK(1), counts)
        assert n == 1 and score == 1.0


class TestCohorts:
    def test_deterministic(self):
        a = generate_synthetic_cohort(20, 30, ZipfMarkovRule(), seed=4)
        b = generate_synthetic_cohort(20, 30, ZipfMarkovRule(), seed=4)
        assert [s.visits for s in a] == [s.visits for s in b]

    def test_zipf_ratio(self):
        seqs = generate_synthetic_cohort(9000, 100, ZipfMarkovRule(zipf_exponent=1.0), seed=0)
        counts = visit_code_counts(seqs, 100)
        assert counts.sum() >= 100_000
        ratio = counts[0] / counts[1]
        assert abs(ratio - 2.0) <= 0.2

    def test_cycle_rule_exact(self):
        rule = CycleRule(3)
        sets = rule.code_sets(12)
        for s in generate_synthetic_cohort(50, 12, rule, seed=1):
            idx = [sets.index(v) for v in s.visits]
            assert all(b == (a + 1) % 3 for a, b in zip(idx, idx[1:]))
            assert rule.min_visits <= len(s.visits) <= rule.max_visits

    def test_save_load(self, tmp_path):
        seqs = generate_synthetic_cohort(5, 10, CycleRule(2), seed=2)
        save_cohort(seqs, tmp_path / "c.jsonl")
        assert load_cohort(tmp_path / "c.jsonl") == seqs

    def test_grouping(self, tmp_path):
        (tmp_path / "g.tsv").write_text("raw\tgroup\n10\t0\n11\t0\n12\t1\n")
        mapping = load_code_grouping(tmp_path / "g.tsv")
        out = apply_grouping([VisitSequence("p", [[10, 11], [12, 99]])], mapping)
        assert out[0].visits == [(0,), (1,)]

    def test_split_disjoint(self):
        seqs = generate_synthetic_cohort(30, 10, CycleRule(2), seed=3)
        tr, te = split_patients(seqs, 0.8, 0)
        assert len(tr) == 24 and not {s.patient_id for s in tr} & {s.patient_id for s in te}

    def test_shuffle_preserves_lengths(self):
        seqs = generate_synthetic_cohort(40, 10, CycleRule(2), seed=3)
        sh = shuffle_targets(seqs, 1)
        assert [len(s.visits) for s in sh] == [len(s.visits) for s in seqs]
        assert sorted(s.patient_id for s in sh) == sorted(s.patient_id for s in seqs)


class TestTraining:
    def _setup(self, m=12, d=6):
        t = table(np.random.default_rng(0).normal(size=(m, d)))
        seqs = generate_synthetic_cohort(80, m, CycleRule(3), seed=1)
        return t, seqs

    def test_zero_epochs(self):
        t, seqs = self._setup()
        model = train_patient_model(seqs, t, PatientModelConfig(12, 6, hidden_size=8, epochs=0))
        assert all(np.array_equal(a, b) for a, b in zip(model.params.arrays(), model.initial_params.arrays()))

    def test_learns_cycle(self):
        t, seqs = self._setup()
        train, test = split_patients(seqs, 0.8, 0)
        model = train_patient_model(train, t, PatientModelConfig(12, 6, hidden_size=16, epochs=15))
        assert model.loss_history[-1] < model.loss_history[0]
        assert evaluate_prediction(model, test, RecallAtK(1)) >= 0.95
        assert evaluate_prediction(model, test, AllDiagnoses()) >= 0.95

    def test_errors(self):
        t, seqs = self._setup()
        with pytest.raises(EmptyDataset):
            train_patient_model([], t, PatientModelConfig(12, 6))
        with pytest.raises(ShapeMismatch):
            train_patient_model(seqs, t, PatientModelConfig(12, 7))
        with pytest.raises(ValueError):
            train_patient_model([VisitSequence("x", [[0]])], t, PatientModelConfig(12, 6))
