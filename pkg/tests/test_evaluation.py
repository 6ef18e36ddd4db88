import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crossing_intent.core.errors import ConfigError, DataError, InsufficientDataError
from crossing_intent.prediction import evaluation
from crossing_intent.prediction.dtw_knn import knn_scores
from crossing_intent.prediction.evaluation import (
    confusion_metrics,
    failure_rows,
    fold_rows,
    label_shuffle_test,
    mann_whitney_auc,
    roc_auc,
    roc_rows,
    run_cv,
    stratified_kfold,
    sweep,
    sweep_rows
)
from crossing_intent.prediction.windowing import LabeledSegment, WindowConfig, adasyn

CFG = WindowConfig(8, 9)


@pytest.fixture(scope="module")
def ramp_segments():
    """20 trials of 4 noise windows followed by one rising ramp."""
    rng = np.random.default_rng(77)
    segments = []
    for trial in range(20):
        trial_id = f"t{trial:02d}"
        for start in range(4):
            segments.append(LabeledSegment(trial_id, start * 9, rng.normal(0.0, 0.3, size=8), 0))
        ramp = np.linspace(0.0, 5.0, 8) + rng.normal(0.0, 0.1, size=8)
        segments.append(LabeledSegment(trial_id, 36, ramp, 1))
    return segments


# ============================================================================
# Folds
# ============================================================================

def test_each_fold_gets_its_share_of_each_class():
    labels = np.array([1] * 5 + [0] * 20)
    folds = stratified_kfold(labels, n_folds=5, seed=1)
    for fold in range(5):
        test = folds.test_indices(fold)
        assert labels[test].sum() == 1
        assert len(test) == 5
    assert sorted(np.concatenate([folds.test_indices(f) for f in range(5)]).tolist()) == list(range(25))


def test_fold_assignment_is_seeded():
    labels = [1] * 6 + [0] * 30
    a = stratified_kfold(labels, 3, seed=5).fold_of
    b = stratified_kfold(labels, 3, seed=5).fold_of
    assert np.array_equal(a, b)


def test_trial_mode_keeps_trials_together():
    groups = [f"t{i}" for i in range(10) for _ in range(4)]
    labels = [0, 0, 0, 1] * 10
    folds = stratified_kfold(labels, n_folds=5, seed=2, groups=groups)
    assert folds.mode == "trial"
    for trial in range(10):
        assert len(set(folds.fold_of[trial * 4:(trial + 1) * 4])) == 1
    assert all(len(folds.test_indices(f)) == 8 for f in range(5))


def test_fold_errors():
    with pytest.raises(InsufficientDataError):
        stratified_kfold([1] * 3 + [0] * 20, n_folds=5)
    with pytest.raises(ConfigError):
        stratified_kfold([1, 0] * 5, n_folds=1)
    with pytest.raises(DataError):
        stratified_kfold([1, 0] * 5, n_folds=2, groups=["a"] * 3)


# ============================================================================
# Metrics and ROC
# ============================================================================

def test_confusion_metrics_example():
    m = confusion_metrics([1] * 7 + [1] * 3 + [0] * 3 + [0] * 7, [1] * 7 + [0] * 3 + [1] * 3 + [0] * 7)
    assert (m.tp, m.fp, m.fn, m.tn) == (7, 3, 3, 7)
    assert (m.precision, m.recall, m.f1, m.accuracy) == pytest.approx((0.7, 0.7, 0.7, 0.7))


def test_perfect_predictions():
    m = confusion_metrics([1, 0, 1, 0], [1, 0, 1, 0])
    assert (m.precision, m.recall, m.f1, m.accuracy) == (1.0, 1.0, 1.0, 1.0)


def test_no_predicted_positives():
    m = confusion_metrics([0, 0, 0], [1, 0, 0])
    assert m.precision_undefined
    assert not m.recall_undefined
    assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)
    assert m.accuracy == pytest.approx(2 / 3)


def test_confusion_metrics_errors():
    with pytest.raises(DataError):
        confusion_metrics([1, 0], [1])
    with pytest.raises(DataError):
        confusion_metrics([], [])


@pytest.mark.parametrize(
    "scores, labels, expected",
    (
        ([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0], 0.75),
        ([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0], 1.0),
        ([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0], 0.5),
        ([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0], 0.0),
    ),
)
def test_roc_examples(scores, labels, expected):
    roc = roc_auc(scores, labels)
    assert roc.auc == pytest.approx(expected)
    assert roc.points()[0] == (0.0, 0.0)
    assert roc.points()[-1] == (1.0, 1.0)
    assert np.all(np.diff(roc.fpr) >= 0)


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6).map(lambda v: v / 6), st.integers(0, 1)), min_size=2, max_size=40))
def test_roc_area_equals_rank_statistic(pairs):
    scores = [s for s, _ in pairs]
    labels = [y for _, y in pairs]
    if len(set(labels)) < 2:
        with pytest.raises(InsufficientDataError):
            roc_auc(scores, labels)
        return
    assert abs(roc_auc(scores, labels).auc - mann_whitney_auc(scores, labels)) <= 1e-12


@pytest.mark.parametrize("n_pos, n_neg", ((1, 1), (3, 7), (20, 5)))
def test_all_tied_scores_give_half(n_pos, n_neg):
    labels = [1] * n_pos + [0] * n_neg
    scores = [0.4] * len(labels)
    assert roc_auc(scores, labels).auc == 0.5
    assert mann_whitney_auc(scores, labels) == 0.5


# ============================================================================
# Cross-validation
# ============================================================================

def test_ramps_are_detected(ramp_segments):
    report = run_cv(ramp_segments, CFG, k=5, n_folds=5, seed=0)
    assert report.auc >= 0.95
    assert report.n_segments == 100
    assert report.n_positive == 20
    assert len(report.fold_metrics) == 5
    assert all(n > 0 for n in report.n_synthetic)
    assert not np.isnan(report.scores).any()
    assert report.to_row()["lookahead_s"] == pytest.approx(1.0)


def test_cv_is_reproducible(ramp_segments):
    a = run_cv(ramp_segments, CFG, seed=4)
    b = run_cv(ramp_segments, CFG, seed=4, n_jobs=2)
    np.testing.assert_array_equal(a.scores, b.scores)
    assert a.auc == b.auc


def test_exact_duplicates_are_always_recognised():
    rise = np.linspace(0.0, 1.0, 8)
    shapes = ((rise, 1), (2.0 * rise, 1), (np.zeros(8), 0), (rise[::-1] - 3.0, 0))
    copies = (10, 10, 15, 15)
    segments = [
        LabeledSegment(f"t{shape}_{i}", 0, values.copy(), label)
        for shape, ((values, label), n) in enumerate(zip(shapes, copies))
        for i in range(n)
    ]
    report = run_cv(segments, CFG, k=1, n_folds=5, seed=3)
    assert report.accuracy == 1.0
    assert report.auc == 1.0


def test_trial_split_mode(ramp_segments):
    report = run_cv(ramp_segments, CFG, seed=1, split_mode="trial")
    assert report.split_mode == "trial"
    assert report.auc >= 0.95


def test_synthetic_input_is_rejected(ramp_segments):
    fake = LabeledSegment(None, None, np.zeros(8), 1, synthetic=True)
    with pytest.raises(DataError):
        run_cv(ramp_segments + [fake], CFG)


def test_unknown_split_mode(ramp_segments):
    with pytest.raises(ConfigError):
        run_cv(ramp_segments, CFG, split_mode="subject")


def test_result_rows(ramp_segments):
    report = run_cv(ramp_segments, CFG, seed=2)
    assert len(fold_rows(report)) == 5
    assert fold_rows(report)[0]["fold"] == 0
    assert roc_rows(report.roc)[0] == {"fpr": 0.0, "tpr": 0.0}
    assert list(sweep_rows([report])[0]) == ["window_length", "stride", "n_segments", "accuracy",
                                             "precision", "recall", "f1", "auc", "lookahead_s"]


def test_label_shuffle_destroys_the_signal(ramp_segments):
    result = label_shuffle_test(ramp_segments, CFG, seed=11)
    again = label_shuffle_test(ramp_segments, CFG, seed=11)
    assert result.original_auc >= 0.95
    assert 0.40 <= result.shuffled_auc <= 0.60
    assert result.n_permutations == 10
    assert len(set(result.shuffled_aucs)) > 1
    assert result.shuffled_auc == pytest.approx(np.mean(result.shuffled_aucs), abs=1e-12)
    assert result.shuffled_auc_sd > 0
    assert result.shuffled_aucs == again.shuffled_aucs
    assert set(result.to_dict()) == {"original_auc", "shuffled_auc", "shuffled_auc_sd", "n_permutations", "seed"}


def test_single_permutation_has_no_spread(ramp_segments):
    result = label_shuffle_test(ramp_segments, CFG, seed=11, n_permutations=1)
    assert result.shuffled_auc == result.shuffled_aucs[0]
    assert result.shuffled_auc_sd == 0.0
    with pytest.raises(ConfigError):
        label_shuffle_test(ramp_segments, CFG, n_permutations=0)


# ============================================================================
# Sweep
# ============================================================================

def test_sweep_isolates_failing_configs(small_dataset):
    configs = [WindowConfig(5, 9), WindowConfig(200, 1), WindowConfig(8, 9)]
    result = sweep(small_dataset.trials, configs, seed=0, n_folds=3)
    assert [c for c, _ in result.failures] == [WindowConfig(200, 1)]
    assert "shorter than window" in result.failures[0][1]
    assert {r.config for r in result.reports} == {WindowConfig(5, 9), WindowConfig(8, 9)}
    aucs = [r.auc for r in result.reports]
    assert aucs == sorted(aucs, reverse=True)
    assert failure_rows(result.failures)[0]["window_length"] == 200


def test_sweep_never_scores_an_oversampled_segment(small_dataset, monkeypatch):
    synthetic, queried = [], []

    def recording_adasyn(train, **kwargs):
        augmented = adasyn(train, **kwargs)
        synthetic.extend(s.values for s in augmented if s.synthetic)
        return augmented

    def recording_scores(model, queries, n_jobs=1):
        queried.extend(queries)
        return knn_scores(model, queries, n_jobs)

    monkeypatch.setattr(evaluation, "adasyn", recording_adasyn)
    monkeypatch.setattr(evaluation, "knn_scores", recording_scores)
    result = sweep(small_dataset.trials, [WindowConfig(5, 9), WindowConfig(8, 9)], seed=0, n_folds=3)

    assert not result.failures
    assert synthetic
    synthetic_ids = {id(values) for values in synthetic}
    assert not any(id(query) in synthetic_ids for query in queried)
    # every real segment is scored once, in exactly one test fold
    assert len(queried) == sum(r.n_segments for r in result.reports)
    assert len({id(query) for query in queried}) == len(queried)
