import json

import numpy as np
import pytest

from gazeact.core import ParameterError, PipelineConfig, ProtocolError
from gazeact.evaluation import (
    EvalReport,
    FoldSpec,
    UTOKYO_REFERENCE_ACCURACY,
    average_precision,
    check_reference_ordering,
    confusion_matrix,
    mean_average_precision,
    run_synthetic_selftest,
    run_two_fold,
    two_fold_spec,
    write_report,
)
from gazeact.synthetic import make_synthetic_sessions


def brute_force_average_precision(scores, positives):
    """Independent AP computation: stable ranking, then literal precision sums."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    precisions = []
    for rank, i in enumerate(order, start=1):
        if positives[i]:
            hits += 1
            precisions.append(hits / rank)
    return sum(precisions) / len(precisions)


def small_config(**overrides):
    base = dict(sample_rate=6.0, class_mode=5, n_trees=40, rng_seed=0)
    base.update(overrides)
    return PipelineConfig(**base)


def small_sessions(seed=0, **kwargs):
    defaults = dict(seed=seed, rate=6.0, segment_seconds=30.0, embed_dim=64)
    defaults.update(kwargs)
    return make_synthetic_sessions(**defaults)


class TestConfusionMatrix:
    CLASSES = ["a", "b", "c"]

    def test_perfect_predictions_identity(self):
        y = ["a", "b", "c", "a", "b", "c"]
        matrix, support = confusion_matrix(y, y, self.CLASSES)
        assert np.array_equal(matrix, np.eye(3))
        assert list(support) == [2, 2, 2]

    def test_collapsed_predictions_fill_one_column(self):
        truth = ["a", "b", "c"] * 3
        pred = ["a"] * 9
        matrix, _ = confusion_matrix(truth, pred, self.CLASSES)
        assert np.array_equal(matrix[:, 0], np.ones(3))
        assert matrix[:, 1:].sum() == 0

    def test_rows_with_support_sum_to_one(self):
        rng = np.random.default_rng(0)
        truth = [self.CLASSES[i] for i in rng.integers(0, 3, 60)]
        pred = [self.CLASSES[i] for i in rng.integers(0, 3, 60)]
        matrix, support = confusion_matrix(truth, pred, self.CLASSES)
        for i in range(3):
            if support[i]:
                assert matrix[i].sum() == pytest.approx(1.0, abs=1e-9)

    def test_zero_support_row_is_zero_and_flagged(self):
        matrix, support = confusion_matrix(["a", "a"], ["a", "b"], self.CLASSES)
        assert support[2] == 0
        assert np.array_equal(matrix[2], np.zeros(3))

    def test_unknown_label_rejected(self):
        with pytest.raises(ParameterError):
            confusion_matrix(["a"], ["z"], self.CLASSES)


class TestAveragePrecision:
    def test_perfect_separation_is_one(self):
        scores = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
        truth = ["x", "y", "x", "y"]
        map_score, per_class = mean_average_precision(scores, truth, ["x", "y"])
        assert map_score == 1.0
        assert per_class == {"x": 1.0, "y": 1.0}

    def test_constant_scores_even_spread_equals_prevalence(self):
        # positives at ranks 2, 4, 6, 8, 10 under index tie-breaking:
        # precision is 0.5 at every positive, so AP equals the prevalence
        positives = np.array([False, True] * 5)
        ap = average_precision(np.zeros(10), positives)
        assert ap == pytest.approx(positives.mean())
        assert ap == pytest.approx(brute_force_average_precision(np.zeros(10), positives))

    def test_constant_scores_match_brute_force_in_general(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            positives = rng.random(12) < 0.4
            if not positives.any():
                continue
            ap = average_precision(np.zeros(12), positives)
            assert ap == pytest.approx(brute_force_average_precision(np.zeros(12), positives))

    def test_matches_brute_force_on_small_instances(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            n = int(rng.integers(2, 21))
            scores = np.round(rng.random(n), 2)  # coarse grid forces score ties
            positives = rng.random(n) < 0.5
            if not positives.any():
                continue
            ap = average_precision(scores, positives)
            assert ap == pytest.approx(brute_force_average_precision(scores, positives), abs=1e-12)

    def test_absent_class_excluded_with_warning(self):
        scores = np.array([[0.6, 0.3, 0.1], [0.2, 0.7, 0.1]])
        with pytest.warns(UserWarning, match="absent"):
            map_score, per_class = mean_average_precision(scores, ["a", "b"], ["a", "b", "c"])
        assert set(per_class) == {"a", "b"}


class TestFoldSpec:
    def test_overlap_rejected(self):
        with pytest.raises(ProtocolError):
            FoldSpec(train_keys=[("s01", 1)], test_keys=[("s01", 1)]).validate()

    def test_missing_session_names_subject(self):
        sessions = small_sessions()
        dropped = [s for s in sessions if not (s.subject_id == "s02" and s.session_index == 2)]
        with pytest.raises(ProtocolError, match="s02"):
            two_fold_spec(dropped)

    def test_fold_layout(self):
        folds = two_fold_spec(small_sessions())
        assert all(k[1] == 1 for k in folds[0].train_keys)
        assert all(k[1] == 2 for k in folds[0].test_keys)
        assert folds[1].train_keys == folds[0].test_keys


@pytest.fixture(scope="module")
def report():
    return run_two_fold(small_sessions(), small_config())


class TestRunTwoFold:
    def test_overall_is_mean_of_folds(self, report):
        folds = [d["accuracy"] for d in report.fold_details]
        assert report.overall_accuracy == pytest.approx(np.mean(folds), abs=1e-12)

    def test_confusion_rows_sum_to_one(self, report):
        for i, row in enumerate(report.confusion):
            if report.confusion_support[i]:
                assert row.sum() == pytest.approx(1.0, abs=1e-9)
            else:
                assert row.sum() == 0.0

    def test_five_class_mode_has_no_void(self, report):
        assert "void" not in report.classes
        assert len(report.classes) == 5

    def test_per_subject_keys(self, report):
        assert sorted(report.per_subject_accuracy) == ["s01", "s02", "s03"]

    def test_six_class_mode_has_six_classes(self):
        sessions = small_sessions(void_seconds=10.0)
        report = run_two_fold(sessions, small_config(class_mode=6), channels=("eye", "ego"))
        assert report.classes[-1] == "void"
        assert len(report.classes) == 6
        assert report.confusion.shape == (6, 6)

    def test_channel_subset_restricts_features(self):
        sessions = small_sessions()
        report = run_two_fold(sessions, small_config(), channels=("visual",))
        assert report.channels == ("visual",)
        assert report.overall_accuracy > 0.8  # visual regimes are separable on their own

    def test_degenerate_thresholds_remove_motion_information(self):
        # both taus huge: every coefficient quantizes to 0, all symbols collapse
        sessions = small_sessions()
        cfg = small_config(tau_small=1e9 - 1, tau_large=1e9)
        report = run_two_fold(sessions, cfg, channels=("eye", "ego"))
        assert report.overall_accuracy < 0.55  # near chance for 3 balanced classes


class TestSelftest:
    def test_selftest_report_is_usable(self):
        report = run_synthetic_selftest(seed=0)
        assert report.overall_accuracy >= 0.95
        for i, row in enumerate(report.confusion):
            if report.confusion_support[i]:
                assert row.sum() == pytest.approx(1.0, abs=1e-9)


class TestReference:
    def test_reference_table_matches_published_orderings(self):
        violations = check_reference_ordering(dict(UTOKYO_REFERENCE_ACCURACY))
        assert violations == []

    def test_ordering_violation_detected(self):
        acc = dict(UTOKYO_REFERENCE_ACCURACY)
        acc[(5, ("eye", "ego", "visual"))] = 0.10
        violations = check_reference_ordering(acc)
        assert violations and "5-class" in violations[0]

    def test_reference_delta_reported(self):
        sessions = small_sessions()
        report = run_two_fold(sessions, small_config(), channels=("eye", "ego", "visual"))
        assert report.reference_accuracy == UTOKYO_REFERENCE_ACCURACY[(5, ("eye", "ego", "visual"))]
        assert report.reference_delta == pytest.approx(
            report.overall_accuracy - report.reference_accuracy
        )


class TestWriteReport:
    def test_emits_json_and_csv(self, tmp_path):
        report = run_two_fold(small_sessions(), small_config(), channels=("eye",))
        write_report(report, tmp_path)
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["class_mode"] == 5
        assert payload["channels"] == ["eye"]
        assert len(payload["confusion"]) == 5
        lines = (tmp_path / "confusion.csv").read_text().strip().splitlines()
        assert len(lines) == 6  # header + 5 classes
