import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rehabattn import evaluation as ev
from rehabattn.dataio import Corpus, LABELS
from rehabattn.evaluation import (EvaluationReport, SplitError, compare_table,
                                  confusion_matrix, evaluate, macro_f1, make_split,
                                  report_from_predictions)
from rehabattn.model import ModelConfig, init_weights
from rehabattn.synthgen import generate_corpus


def mixed_corpus(n1=4, n2=8, n3=8, seed=0):
    """Corpus with all three participant groups, balanced classes within each."""
    parts = []
    for group, n in ((1, n1), (2, n2), (3, n3)):
        c = generate_corpus(max(n // 4, 1), "torso_rotation", noise_sigma=0.01,
                            seed=seed * 10 + group, group=group)
        parts.extend(c.sequences)
    return Corpus(tuple(parts))


class TestMakeSplit:
    def test_scenario2_forty_balanced(self):
        corpus = generate_corpus(10, "torso_rotation", seed=1)   # 40 sequences
        plan = make_split(corpus, 2, ratio=0.2, seed=0)
        assert len(plan.train_indices) == 32
        assert len(plan.test_indices) == 8
        assert plan.test_class_counts == (2, 2, 2, 2)

    def test_scenario1_no_group3_in_test(self):
        corpus = mixed_corpus()
        plan = make_split(corpus, 1)
        groups = corpus.groups()
        assert all(groups[i] == 3 for i in plan.train_indices)
        assert all(groups[i] in (1, 2) for i in plan.test_indices)

    def test_scenario3_counts_by_enumeration(self):
        # groups 1/2/3 with 8/20/20 members: test = 8 patients + 6 of the 40 healthy
        corpus = mixed_corpus(n1=8, n2=20, n3=20)
        plan = make_split(corpus, 3, seed=5)
        groups = corpus.groups()
        labels = corpus.labels()
        patients = [i for i in range(len(corpus)) if groups[i] == 1]
        assert set(patients) <= set(plan.test_indices)
        held = [i for i in plan.test_indices if groups[i] != 1]
        assert len(held) == round(0.15 * 40)
        # stratification within one sample of corpus proportions
        healthy = [i for i in range(len(corpus)) if groups[i] != 1]
        for c in range(4):
            expected = 0.15 * sum(1 for i in healthy if labels[i] == c)
            got = sum(1 for i in held if labels[i] == c)
            assert abs(got - expected) <= 1.0

    def test_scenario2_disjoint_cover(self):
        corpus = generate_corpus(7, "torso_rotation", seed=2)
        plan = make_split(corpus, 2, seed=3)
        plan.validate(len(corpus))

    def test_missing_group_errors(self):
        corpus = generate_corpus(2, "torso_rotation", seed=0, group=2)
        with pytest.raises(SplitError, match="group-3"):
            make_split(corpus, 1)
        with pytest.raises(SplitError, match="group-1"):
            make_split(corpus, 3)

    def test_unknown_scenario(self):
        with pytest.raises(SplitError, match="scenario"):
            make_split(generate_corpus(1, "torso_rotation"), 4)

    def test_deterministic_given_seed(self):
        corpus = generate_corpus(6, "torso_rotation", seed=0)
        a = make_split(corpus, 2, seed=9)
        b = make_split(corpus, 2, seed=9)
        assert a.test_indices == b.test_indices

    @given(st.integers(min_value=1, max_value=12), st.integers(min_value=0, max_value=50))
    @settings(max_examples=200, deadline=None)
    def test_split_disjoint_cover_property(self, n_per_class, seed):
        corpus = generate_corpus(n_per_class, "torso_rotation", noise_sigma=0.0,
                                 seed=0, t_raw=4)
        plan = make_split(corpus, 2, ratio=0.2, seed=seed)
        plan.validate(len(corpus))
        # stratification within one sample per class
        n = len(corpus)
        labels = corpus.labels()
        for c in range(4):
            corpus_frac = (labels == c).mean()
            test_count = plan.test_class_counts[c]
            expected = corpus_frac * len(plan.test_indices)
            assert abs(test_count - expected) <= 1.0


class TestMetrics:
    def test_perfect_predictor(self):
        rep = report_from_predictions([0, 1, 2, 3], [0, 1, 2, 3])
        assert rep.accuracy == 1.0
        assert rep.macro_f1 == 1.0
        assert np.array_equal(rep.confusion, np.eye(4))

    def test_constant_predictor_balanced(self):
        true = [0, 1, 2, 3] * 5
        rep = report_from_predictions(true, [0] * 20)
        assert rep.accuracy == 0.25

    def test_hand_counted_confusion(self):
        true = [0, 0, 0, 1, 1, 2]
        pred = [0, 1, 0, 1, 1, 0]
        m = confusion_matrix(true, pred)
        expected = np.array([
            [2 / 3, 1 / 3, 0, 0],
            [0, 1, 0, 0],
            [1, 0, 0, 0],
            [0, 0, 0, 0],
        ])
        assert np.allclose(m, expected, atol=1e-15)

    def test_row_sums_contract(self):
        true = [0, 0, 1, 2]
        pred = [1, 2, 1, 2]
        m = confusion_matrix(true, pred)
        sums = m.sum(axis=1)
        assert np.abs(sums[:3] - 1.0).max() < 1e-9
        assert np.array_equal(m[3], np.zeros(4))     # absent class: all-zero row

    def test_macro_f1_skips_absent_classes(self):
        true = [0, 0, 1, 1]
        pred = [0, 1, 1, 1]
        # class0: p=1, r=.5, f1=2/3 ; class1: p=2/3, r=1, f1=0.8 ; classes 2,3 absent
        assert macro_f1(true, pred) == pytest.approx((2 / 3 + 0.8) / 2)

    def test_report_invariants(self):
        rep = report_from_predictions([0, 1, 1, 2], [0, 2, 1, 0])
        for c in range(4):
            row_sum = rep.confusion[c].sum()
            if rep.class_frequencies[c] == 0:
                assert row_sum == 0.0
            else:
                assert abs(row_sum - 1.0) < 1e-9
        assert rep.absent_classes == (3,)

    def test_empty_test_set_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            report_from_predictions([], [])


class TestEvaluate:
    def test_pure_and_deterministic(self):
        corpus = generate_corpus(2, "torso_rotation", seed=0, t_raw=8)
        w = init_weights(ModelConfig(num_layers=1, channels=8, t_frames=8), seed=0)
        r1 = evaluate(w, corpus)
        r2 = evaluate(w, corpus)
        assert r1.accuracy == r2.accuracy
        assert np.array_equal(r1.confusion, r2.confusion)
        assert r1.predictions == r2.predictions

    def test_empty_rejected(self):
        w = init_weights(ModelConfig(num_layers=1, channels=8, t_frames=8), seed=0)
        with pytest.raises(ValueError, match="empty"):
            evaluate(w, Corpus(()))


class TestCompareTable:
    def test_single_report_row(self):
        rep = report_from_predictions([0, 1], [0, 1])
        out = compare_table({"torso_rotation": rep})
        assert "torso_rotation" in out
        assert "100.00" in out

    def test_reference_values_verbatim(self):
        rep = report_from_predictions([0], [0])
        out = compare_table({"torso_rotation": rep, "flank_stretch": rep,
                             "hiding_face": rep})
        for v in ("73.17", "64.10", "74.28", "64.44", "53.89", "27.78",
                  "43.04", "31.64", "25.32", "56.19", "49.10", "33.33"):
            assert v in out, v

    def test_two_decimal_formatting(self):
        rep = report_from_predictions([0, 0, 0], [0, 0, 1])
        out = compare_table({"flank_stretch": rep})
        assert "66.67" in out

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compare_table({})


class TestReportSchema:
    def test_json_validates_against_schema(self):
        import jsonschema
        rep = report_from_predictions([0, 1, 2, 2], [0, 1, 1, 2])
        doc = json.loads(rep.to_json())
        jsonschema.validate(doc, ev.REPORT_SCHEMA)

    def test_text_render_contains_frequencies(self):
        rep = report_from_predictions([0, 0, 3], [0, 1, 3])
        text = rep.to_text()
        assert "accuracy" in text and "macro-F1" in text
        assert "(  2)" in text
