import numpy as np
import pytest

from crossing_intent.analysis.stages import (
    POOLED,
    StageBundle,
    decode_stages,
    explained_variance_rows,
    infer_stages,
    stage_label,
    stage_occupancy_rows,
    stage_path_rows,
    stage_run_rows
)
from crossing_intent.core.errors import ConfigError, DataError


@pytest.fixture(scope="module")
def per_trial(small_dataset):
    return infer_stages(small_dataset.trials, seed=7)


def test_every_frame_gets_a_stage(small_dataset, per_trial):
    for trial in small_dataset.trials:
        path = per_trial.paths[trial.trial_id]
        assert path.shape == (trial.n_frames,)
        assert set(path.tolist()) <= {0, 1, 2, 3}
        assert per_trial.scores[trial.trial_id].shape == (trial.n_frames, 5)


def test_per_trial_paths_start_in_the_first_stage(per_trial):
    # onset ordering puts the state seen at frame 0 first
    assert all(path[0] == 0 for path in per_trial.paths.values())


def test_stage_order_is_recorded_as_a_permutation(per_trial):
    for fit in per_trial.bundle.fits.values():
        assert sorted(fit.order) == [0, 1, 2, 3]


def test_same_seed_same_paths(small_dataset, per_trial):
    again = infer_stages(small_dataset.trials, seed=7)
    for trial_id, path in per_trial.paths.items():
        assert np.array_equal(again.paths[trial_id], path)


def test_saved_bundle_decodes_identically(small_dataset, per_trial):
    bundle = StageBundle.from_dict(per_trial.bundle.to_dict())
    decoded = decode_stages(bundle, small_dataset.trials)
    for trial_id, path in per_trial.paths.items():
        assert np.array_equal(decoded[trial_id], path)


def test_per_trial_bundle_refuses_unknown_trials(small_dataset, per_trial):
    fitted_on = infer_stages(small_dataset.trials[:2], seed=7)
    with pytest.raises(DataError, match=small_dataset.trials[2].trial_id):
        decode_stages(fitted_on.bundle, small_dataset.trials[2:3])


def test_pooled_scopes_share_one_model(small_dataset):
    inference = infer_stages(small_dataset.trials[:10], pca_scope=POOLED, hmm_scope=POOLED, seed=1)
    assert set(inference.bundle.fits) == {POOLED}
    assert set(inference.bundle.projections) == {POOLED}
    unseen = decode_stages(inference.bundle, small_dataset.trials[10:])
    assert set(unseen) == {t.trial_id for t in small_dataset.trials[10:]}


def test_pooled_hmm_needs_pooled_pca(small_dataset):
    with pytest.raises(ConfigError):
        infer_stages(small_dataset.trials, pca_scope="per-trial", hmm_scope=POOLED)


def test_duplicate_trial_ids_are_rejected(small_dataset):
    trial = small_dataset.trials[0]
    with pytest.raises(DataError):
        infer_stages([trial, trial])


def test_tables_cover_every_frame(small_dataset, per_trial):
    trials = small_dataset.trials
    assert len(stage_path_rows(trials, per_trial.paths)) == sum(t.n_frames for t in trials)

    occupancy = stage_occupancy_rows(trials, per_trial.paths)
    for trial in trials:
        frames = sum(r["frames"] for r in occupancy if r["trial_id"] == trial.trial_id)
        assert frames == trial.n_frames

    runs = stage_run_rows(trials[:1], per_trial.paths)
    assert runs[0]["start_frame"] == 0
    assert runs[-1]["end_frame"] == trials[0].n_frames - 1
    assert runs[-1]["end_s"] == pytest.approx(trials[0].response_time_s)


def test_explained_variance_rows(per_trial):
    rows = explained_variance_rows(per_trial.bundle)
    assert len(rows) == 5 * len(per_trial.bundle.projections)
    for group in per_trial.bundle.projections:
        cumulative = [r["cumulative_ratio"] for r in rows if r["group"] == group]
        assert cumulative == sorted(cumulative)
        assert cumulative[-1] <= 1.0 + 1e-12


def test_stage_labels():
    assert stage_label(0) == "perception"
    assert stage_label(3) == "execution"
    assert stage_label(6) == "state_6"
