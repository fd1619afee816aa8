from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ensemblelabel.metrics import (ConfusionMatrix, build_confusion, metrics,
                                   threshold_curve)
from ensemblelabel.schema import ecg_af_schema
from ensemblelabel.voting import VoteTally, EnsembleDecision

SCHEMA = ecg_af_schema()
TOL = 1e-12


def cm(counts, review=None, classes=("AF", "Non-AF", "Uncertain")):
    counts = np.asarray(counts, dtype=np.int64)
    if review is None:
        review = np.zeros(len(classes), dtype=np.int64)
    return ConfusionMatrix(classes=tuple(classes), counts=counts,
                           review_by_truth=np.asarray(review, dtype=np.int64))


def decision(case_id, outcome, n=7):
    t = VoteTally(counts={l: 0 for l in SCHEMA.valid_set}, invalid_count=n, n_agents=n)
    return EnsembleDecision(case_id=case_id, outcome=outcome, tally=t,
                            winner_set_size=0, winning_votes=0, min_votes=0)


class TestHandComputedMatrices:
    def test_two_class_recall_and_specificity(self):
        # truth x predicted, positive class first
        report = metrics(cm([[8, 2], [1, 9]], classes=("AF", "Non-AF")), "AF")
        assert abs(report.recall_positive - 0.8) < TOL
        assert abs(report.specificity_positive - 0.9) < TOL
        assert abs(report.accuracy - Fraction(17, 20)) < TOL

    def test_jaccard_is_tp_over_tp_fp_fn(self):
        # AF: TP=3, FN=1, FP=1 -> 3/5
        report = metrics(cm([[3, 1], [1, 0]], classes=("AF", "Non-AF")), "AF")
        assert abs(report.jaccard["AF"] - 0.6) < TOL

    def test_perfect_matrix(self):
        report = metrics(cm([[7, 0, 0], [0, 2, 0], [0, 0, 1]]), "AF")
        assert report.accuracy == 1.0
        assert all(abs(v - 1.0) < TOL for v in report.jaccard.values())
        assert abs(report.f1_weighted - 1.0) < TOL

    def test_three_class_hand_tally(self):
        # Hand-counted from the matrix:
        #   AF:        TP=50 FN=5 FP=6   Non-AF: TP=30 FN=5 FP=5
        #   Uncertain: TP=6  FN=4 FP=3   total auto = 100, trace = 86
        counts = [[50, 3, 2], [4, 30, 1], [2, 2, 6]]
        report = metrics(cm(counts, review=[3, 1, 0]), "AF")
        assert abs(report.accuracy - Fraction(86, 100)) < TOL
        assert abs(report.recall_positive - Fraction(50, 55)) < TOL
        tn = 100 - 50 - 5 - 6
        assert abs(report.specificity_positive - Fraction(tn, tn + 6)) < TOL
        assert abs(report.jaccard["AF"] - Fraction(50, 61)) < TOL
        assert abs(report.jaccard["Non-AF"] - Fraction(30, 40)) < TOL
        assert abs(report.jaccard["Uncertain"] - Fraction(6, 13)) < TOL
        f1 = {
            "AF": Fraction(100, 111),
            "Non-AF": Fraction(60, 70),
            "Uncertain": Fraction(12, 19),
        }
        weighted = (55 * f1["AF"] + 35 * f1["Non-AF"] + 10 * f1["Uncertain"]) / 100
        assert abs(report.f1_weighted - weighted) < TOL
        assert abs(report.review_rate - Fraction(4, 104)) < TOL
        assert report.n_auto == 100 and report.n_review == 4


class TestUndefinedConventions:
    def test_empty_matrix_with_reviews(self):
        report = metrics(cm([[0, 0, 0]] * 3, review=[5, 3, 2]), "AF")
        assert report.accuracy is None
        assert report.f1_weighted is None
        assert report.review_rate == 1.0
        assert report.warnings

    def test_fully_empty_matrix(self):
        report = metrics(cm([[0, 0, 0]] * 3), "AF")
        assert report.review_rate is None

    def test_never_predicted_class_has_undefined_precision(self):
        report = metrics(cm([[5, 0, 0], [3, 0, 0], [0, 0, 0]]), "AF")
        assert report.precision["Uncertain"] is None
        assert report.recall["Non-AF"] == 0.0
        assert report.f1_weighted is not None  # Non-AF still contributes F1=0
        assert any("undefined" in w for w in report.warnings)


class TestBuildConfusion:
    def test_perfect_fixture_is_diagonal(self):
        truth = {f"c{i}": "AF" for i in range(6)}
        truth.update({"n0": "Non-AF", "n1": "Non-AF", "u0": "Uncertain", "u1": "Uncertain"})
        decisions = [decision(cid, label) for cid, label in truth.items()]
        matrix = build_confusion(truth, decisions, SCHEMA)
        assert np.trace(matrix.counts) == 10
        assert matrix.n_review == 0

    def test_all_review_fixture(self):
        truth = {f"c{i}": "AF" for i in range(4)}
        decisions = [decision(cid, "Review") for cid in truth]
        matrix = build_confusion(truth, decisions, SCHEMA)
        assert matrix.counts.sum() == 0 and matrix.n_review == 4

    def test_hand_built_mixed_fixture(self):
        truth = {"a": "AF", "b": "AF", "c": "Non-AF", "d": "Uncertain", "e": "AF"}
        decisions = [
            decision("a", "AF"), decision("b", "Non-AF"), decision("c", "Non-AF"),
            decision("d", "Review"), decision("e", "AF"),
        ]
        matrix = build_confusion(truth, decisions, SCHEMA)
        assert matrix.counts[0, 0] == 2  # AF -> AF
        assert matrix.counts[0, 1] == 1  # AF -> Non-AF
        assert matrix.counts[1, 1] == 1
        assert matrix.review_by_truth.tolist() == [0, 0, 1]
        assert matrix.n_evaluated == 5

    def test_decided_case_without_truth_is_hard_error(self):
        with pytest.raises(ValueError, match="ghost"):
            build_confusion({"a": "AF"}, [decision("a", "AF"), decision("ghost", "AF")], SCHEMA)

    def test_truth_outside_valid_set(self):
        with pytest.raises(ValueError, match="Flutter"):
            build_confusion({"a": "Flutter"}, [decision("a", "AF")], SCHEMA)


matrix_strategy = arrays(np.int64, (3, 3), elements=st.integers(0, 40))


class TestAlgebraicProperties:
    @given(matrix_strategy)
    def test_jaccard_bounded_by_recall_and_precision(self, counts):
        report = metrics(cm(counts), "AF")
        for label in ("AF", "Non-AF", "Uncertain"):
            j = report.jaccard[label]
            if j is None:
                continue
            for bound in (report.recall[label], report.precision[label]):
                if bound is not None:
                    assert j <= bound + TOL

    @given(matrix_strategy, arrays(np.int64, (3,), elements=st.integers(0, 10)))
    def test_everything_in_unit_interval_and_conserved(self, counts, review):
        matrix = cm(counts, review=review)
        report = metrics(matrix, "AF")
        for value in (report.accuracy, report.f1_weighted, report.recall_positive,
                      report.specificity_positive, report.review_rate,
                      *report.jaccard.values()):
            if value is not None:
                assert -TOL <= value <= 1 + TOL
        assert matrix.counts.sum() + matrix.review_by_truth.sum() == matrix.n_evaluated


class TestThresholdCurve:
    def test_rows_match_direct_computation(self):
        truth = {"a": "AF", "b": "AF", "c": "Non-AF"}
        tables = {
            0: [decision("a", "AF"), decision("b", "AF"), decision("c", "Non-AF")],
            7: [decision("a", "AF"), decision("b", "Review"), decision("c", "Review")],
        }
        rows = threshold_curve(tables, truth, SCHEMA)
        assert [r["min_votes"] for r in rows] == [0, 7]
        assert rows[0]["accuracy"] == 1.0 and rows[0]["n_review"] == 0
        direct = metrics(build_confusion(truth, tables[7], SCHEMA), "AF")
        assert rows[1]["accuracy"] == direct.accuracy
        assert rows[1]["n_review"] == direct.n_review == 2
