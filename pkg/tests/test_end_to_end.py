"""Full synthetic study: stage recovery, window sweep and the label-shuffle control."""

import numpy as np
import pytest

from crossing_intent.analysis.stage_stats import rt_summaries, run_stage_battery, stage_feature_tables
from crossing_intent.analysis.stages import infer_stages
from crossing_intent.ingest.synth import study_config, synth_generate
from crossing_intent.prediction.evaluation import label_shuffle_test, sweep
from crossing_intent.prediction.windowing import REFERENCE_CONFIGS, segment_trials

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def study():
    return synth_generate(study_config(seed=0))


@pytest.fixture(scope="module")
def reference_sweep(study):
    return sweep(study.trials, REFERENCE_CONFIGS, seed=0, n_jobs=-1)


def test_surge_before_key_press_is_detected(reference_sweep):
    assert not reference_sweep.failures
    assert len(reference_sweep.reports) == 4
    assert reference_sweep.reports[0].auc >= 0.95


def test_shuffled_labels_fall_to_chance(study, reference_sweep):
    best = reference_sweep.reports[0].config
    result = label_shuffle_test(segment_trials(study.trials, best), best, seed=0, n_jobs=-1)
    assert result.original_auc >= 0.95
    assert result.n_permutations == 10
    assert 0.40 <= result.shuffled_auc <= 0.60


def test_pooled_stages_track_the_generating_paths(study):
    inference = infer_stages(study.trials, pca_scope="pooled", hmm_scope="pooled", seed=0)
    agreement = np.mean(np.concatenate([
        inference.paths[t.trial_id] == study.stage_paths[t.trial_id] for t in study.trials
    ]))
    assert agreement >= 0.75


def test_stage_battery_and_rt_summary(study):
    tables = stage_feature_tables(study.trials, study.stage_paths)
    results = run_stage_battery(tables, n_jobs=-1)
    assert len(results) == 70
    assert any(r.significant for r in results)
    summaries = rt_summaries(study.trials)
    assert [s.scenario for s in summaries][-1] == "all"
    assert summaries[-1].n == 60
