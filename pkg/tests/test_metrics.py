import json

import numpy as np
import pytest

from app.errors import DomainError
from app.metrics import auc, confusion_metrics, evaluate_predictions, metrics_json, metrics_table


def pairwise_auc(thetas, labels):
    positives = [t for t, y in zip(thetas, labels) if y == 1]
    negatives = [t for t, y in zip(thetas, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in positives for n in negatives)
    return wins / (len(positives) * len(negatives))


class TestAuc:

    def test_example(self):
        assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75, abs=1e-12)

    def test_perfect_and_inverted(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_ties_count_half(self):
        assert auc([0.5, 0.5], [0, 1]) == pytest.approx(0.5)

    def test_matches_pairwise_count(self, generator):
        for _ in range(200):
            n = int(generator.integers(2, 40))
            labels = generator.integers(0, 2, size=n)
            labels[0], labels[1] = 0, 1
            # Coarse grid forces ties.
            thetas = np.round(generator.uniform(size=n), 1)
            assert abs(auc(thetas, labels) - pairwise_auc(thetas, labels)) <= 1e-12

    def test_flipping_labels_mirrors_auc(self, generator):
        thetas = generator.uniform(size=30)
        labels = np.array([0, 1] * 15)
        assert auc(thetas, 1 - labels) == pytest.approx(1.0 - auc(thetas, labels), abs=1e-12)

    def test_increasing_transforms_keep_auc(self, generator):
        thetas = generator.uniform(size=40)
        labels = np.array([0, 1] * 20)
        expected = auc(thetas, labels)
        assert auc(thetas ** 3, labels) == pytest.approx(expected, abs=1e-12)
        assert auc(0.5 + thetas / 2, labels) == pytest.approx(expected, abs=1e-12)

    def test_single_class(self):
        with pytest.raises(DomainError):
            auc([0.2, 0.7], [1, 1])

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            auc([0.2, 0.7, 0.1], [0, 1])


class TestConfusionMetrics:

    def test_example(self):
        report = confusion_metrics([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert (report.tp, report.fp, report.tn, report.fn) == (1, 0, 2, 1)
        assert report.accuracy == 0.75
        assert report.precision == 1.0
        assert report.recall == 0.5
        assert report.f_score == pytest.approx(2.0 / 3.0)
        assert report.undefined == ()

    def test_threshold_is_inclusive(self):
        assert confusion_metrics([0.5], [1]).tp == 1
        assert confusion_metrics([0.5], [1], threshold=0.6).fn == 1

    def test_zero_threshold_recalls_every_positive(self, generator):
        thetas = generator.uniform(size=25)
        labels = generator.integers(0, 2, size=25)
        labels[0] = 1
        report = confusion_metrics(thetas, labels, threshold=0.0)
        assert report.recall == 1.0
        assert report.tn == report.fn == 0

    def test_undefined_ratios_are_logged(self, caplog):
        with caplog.at_level("WARNING"):
            confusion_metrics([0.1, 0.2], [0, 0])
        assert "precision" in caplog.text and "recall" in caplog.text

    def test_undefined_ratios_are_zero(self):
        report = confusion_metrics([0.1, 0.2], [0, 0])
        assert (report.precision, report.recall, report.f_score) == (0.0, 0.0, 0.0)
        assert set(report.undefined) == {"precision", "recall", "f_score"}
        assert report.accuracy == 1.0

    def test_labels_must_be_binary(self):
        with pytest.raises(DomainError):
            confusion_metrics([0.3], [2])

    def test_empty_input(self):
        with pytest.raises(DomainError):
            confusion_metrics([], [])


class TestReports:

    def test_single_class_leaves_auc_empty(self, caplog):
        with caplog.at_level("WARNING"):
            report = evaluate_predictions([0.2, 0.9], [1, 1])
        assert report.auc is None
        assert "AUC" in caplog.text

    def test_json_has_folds_and_mean(self):
        reports = [
            evaluate_predictions([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]),
            evaluate_predictions([0.2, 0.9], [0, 1]),
        ]
        payload = json.loads(metrics_json(reports))
        assert sorted(payload) == ["fold_0", "fold_1", "mean"]
        assert payload["fold_0"]["auc"] == pytest.approx(0.75)
        assert payload["mean"]["auc"] == pytest.approx(0.875)
        assert payload["mean"]["accuracy"] == pytest.approx(0.875)

    def test_mean_auc_skips_undefined_folds(self):
        reports = [evaluate_predictions([0.2, 0.9], [0, 1]), evaluate_predictions([0.2, 0.9], [1, 1])]
        assert json.loads(metrics_json(reports))["mean"]["auc"] == 1.0

    def test_table(self):
        reports = [evaluate_predictions([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]), evaluate_predictions([0.2], [1])]
        lines = metrics_table(reports, "NOR").splitlines()
        assert lines[0].split() == ["Fold", "Accuracy", "Precision", "Recall", "F-score", "AUC"]
        assert lines[1].split() == ["0", "0.750", "1.000", "0.500", "0.667", "0.750"]
        assert lines[2].split()[-1] == "N/A"
        assert lines[3].startswith("Mean NOR")
        assert len({len(line) for line in lines}) == 1


class TestSpecialCases:

    def test_exact_predictions(self):
        report = evaluate_predictions([1.0, 0.0, 1.0], [1, 0, 1])
        assert (report.accuracy, report.auc) == (1.0, 1.0)

    def test_symmetric_confusion(self):
        report = confusion_metrics([0.6, 0.6, 0.4, 0.4], [1, 0, 1, 0])
        assert (report.tp, report.fp, report.tn, report.fn) == (1, 1, 1, 1)
        assert (report.accuracy, report.precision, report.recall, report.f_score) == (0.5, 0.5, 0.5, 0.5)

    def test_all_negative_predictions(self):
        report = confusion_metrics([0.1, 0.2, 0.3], [1, 0, 1])
        assert report.recall == 0.0
        assert report.precision == 0.0 and "precision" in report.undefined

    def test_constant_scores_give_half_auc(self):
        assert auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
