import itertools

import numpy as np
import pytest
from scipy.special import logsumexp
from scipy.stats import norm

from crossing_intent.analysis.hmm import (
    MONOTONIC_SLACK,
    HmmModel,
    StageRun,
    hmm_decode,
    hmm_fit,
    hmm_loglik,
    order_states_by_onset,
    relabel_path,
    stage_runs
)
from crossing_intent.core.errors import ConfigError, DataError, InsufficientDataError
from crossing_intent.ingest.synth import default_truth_model, sample_stage_path


def _random_model(rng, n_states=3, n_features=2):
    transition = rng.dirichlet(np.ones(n_states), size=n_states)
    return HmmModel(
        initial=rng.dirichlet(np.ones(n_states)),
        transition=transition,
        means=rng.normal(0.0, 2.0, size=(n_states, n_features)),
        variances=rng.uniform(0.5, 2.0, size=(n_states, n_features)),
    )


def _log_joint(model, x, path):
    log_b = norm.logpdf(x[:, None, :], model.means[None], np.sqrt(model.variances)[None]).sum(axis=2)
    total = np.log(model.initial[path[0]]) + log_b[0, path[0]]
    for t in range(1, len(path)):
        total += np.log(model.transition[path[t - 1], path[t]]) + log_b[t, path[t]]
    return total


def _all_paths(n_states, n_frames):
    return [np.array(p) for p in itertools.product(range(n_states), repeat=n_frames)]


# ============================================================================
# Likelihood and decoding against exhaustive enumeration
# ============================================================================

@pytest.mark.parametrize("n_frames", (1, 3, 6))
def test_loglik_matches_sum_over_all_paths(rng, n_frames):
    model = _random_model(rng, n_states=4)
    x = rng.normal(size=(n_frames, 2))
    brute = logsumexp([_log_joint(model, x, p) for p in _all_paths(4, n_frames)])
    assert hmm_loglik(model, x) == pytest.approx(brute, abs=1e-8)


@pytest.mark.parametrize("n_frames", (2, 5, 6))
def test_viterbi_matches_best_path(rng, n_frames):
    model = _random_model(rng, n_states=4)
    x = rng.normal(size=(n_frames, 2))
    paths = _all_paths(4, n_frames)
    best = paths[int(np.argmax([_log_joint(model, x, p) for p in paths]))]
    assert hmm_decode(model, x).tolist() == best.tolist()


def test_random_models_against_enumeration():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n_frames = int(rng.integers(1, 8))
        model = _random_model(rng, n_states=4)
        x = rng.normal(size=(n_frames, 2))
        paths = np.array(list(itertools.product(range(4), repeat=n_frames)))
        log_b = norm.logpdf(x[:, None, :], model.means[None], np.sqrt(model.variances)[None]).sum(axis=2)
        joint = np.log(model.initial[paths[:, 0]]) + log_b[0, paths[:, 0]]
        for t in range(1, n_frames):
            joint += np.log(model.transition[paths[:, t - 1], paths[:, t]]) + log_b[t, paths[:, t]]
        assert hmm_loglik(model, x) == pytest.approx(logsumexp(joint), abs=1e-8)
        assert hmm_decode(model, x).tolist() == paths[int(np.argmax(joint))].tolist()


def test_single_state_loglik_is_sum_of_densities(rng):
    model = HmmModel(np.ones(1), np.ones((1, 1)), np.array([[0.5, -1.0]]), np.array([[2.0, 0.5]]))
    x = rng.normal(size=(12, 2))
    expected = norm.logpdf(x, model.means[0], np.sqrt(model.variances[0])).sum()
    assert hmm_loglik(model, x) == pytest.approx(expected, abs=1e-9)
    assert hmm_decode(model, x).tolist() == [0] * 12


def test_separated_states_decode_to_generating_path():
    means = np.array([[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]])
    model = HmmModel(
        initial=np.full(3, 1 / 3),
        transition=np.full((3, 3), 0.01) + np.eye(3) * 0.97,
        means=means,
        variances=np.ones((3, 2)),
    )
    path = np.array([0, 0, 0, 1, 1, 2, 2, 2, 2, 0])
    assert hmm_decode(model, means[path]).tolist() == path.tolist()


def test_permuting_states_leaves_loglik_unchanged(rng):
    model = _random_model(rng, n_states=3)
    x = rng.normal(size=(15, 2))
    assert hmm_loglik(model.permuted((2, 0, 1)), x) == pytest.approx(hmm_loglik(model, x), abs=1e-9)


@pytest.mark.parametrize("scale", (0.01, 3.0, 250.0))
def test_rescaled_emissions_decode_identically(rng, scale):
    model = _random_model(rng, n_states=4, n_features=3)
    x = rng.normal(0.0, 2.0, size=(40, 3))
    # x, means scaled by a and variances by a^2 multiply every density by a^-D
    rescaled = HmmModel(initial=model.initial, transition=model.transition,
                        means=model.means * scale, variances=model.variances * scale ** 2)
    assert hmm_decode(rescaled, x * scale).tolist() == hmm_decode(model, x).tolist()


def test_dimension_mismatch_is_rejected(rng):
    model = _random_model(rng, n_features=2)
    with pytest.raises(DataError):
        hmm_decode(model, rng.normal(size=(5, 3)))


# ============================================================================
# Fitting
# ============================================================================

def test_single_state_fit_is_closed_form(rng):
    sequences = [rng.normal(1.0, 2.0, size=(120, 2)), rng.normal(1.0, 2.0, size=(80, 2))]
    model, report = hmm_fit(sequences, n_states=1, seed=0)
    pooled = np.vstack(sequences)
    np.testing.assert_allclose(model.means[0], pooled.mean(axis=0), atol=1e-9)
    np.testing.assert_allclose(model.variances[0], pooled.var(axis=0), atol=1e-9)
    assert model.transition.tolist() == [[1.0]]
    assert report.converged


def test_fit_recovers_transition_matrix():
    truth = default_truth_model()
    rng = np.random.default_rng(2024)
    path = sample_stage_path(truth, 6000, rng)
    x = truth.means[path] + rng.standard_normal((6000, truth.n_features))

    model, report = hmm_fit([x], n_states=4, seed=1)
    assert report.monotonic
    best = min(itertools.permutations(range(4)),
               key=lambda order: np.abs(model.permuted(order).transition - truth.transition).sum())
    assert np.max(np.abs(model.permuted(best).transition - truth.transition)) <= 0.05


def test_em_trace_never_decreases(small_dataset):
    sequences = [small_dataset.latent_scores[t.trial_id] for t in small_dataset.trials]
    _, report = hmm_fit(sequences, n_states=4, seed=4)
    trace = np.array(report.log_likelihood_trace)
    assert report.monotonic
    assert np.all(np.diff(trace) >= -MONOTONIC_SLACK)


def test_identical_frames_clamp_variance():
    _, report = hmm_fit([np.ones((60, 2))], n_states=2, seed=0)
    assert report.variance_clamped


def test_short_fit_is_flagged_underdetermined(rng):
    _, report = hmm_fit([rng.normal(size=(30, 5))], n_states=4, seed=0)
    assert report.underdetermined


def test_fit_rejects_empty_input():
    with pytest.raises(InsufficientDataError):
        hmm_fit([], n_states=2)


def test_fit_rejects_bad_covariance_type(rng):
    with pytest.raises(ConfigError):
        hmm_fit([rng.normal(size=(20, 2))], covariance_type="spherical")


def test_full_covariance_fit_runs(rng):
    x = np.vstack([rng.normal(0, 1, size=(100, 2)), rng.normal(6, 1, size=(100, 2))])
    model, report = hmm_fit([x], n_states=2, seed=0, covariance_type="full")
    assert model.covariance_type == "full"
    assert report.monotonic
    assert HmmModel.from_dict(model.to_dict()).covariances.shape == (2, 2, 2)


def test_single_state_full_covariance_is_the_sample_covariance(rng):
    x = rng.normal(size=(300, 3)) @ np.array([[2.0, 0.5, 0.0], [0.0, 1.0, 0.3], [0.0, 0.0, 0.7]])
    model, report = hmm_fit([x], n_states=1, seed=0, covariance_type="full")
    np.testing.assert_allclose(model.covariances[0], np.cov(x, rowvar=False, bias=True), atol=1e-9)
    assert not report.variance_clamped


def test_collinear_frames_floor_only_the_flat_direction(rng):
    t = rng.normal(size=200)
    x = np.column_stack([t, 2.0 * t])
    model, report = hmm_fit([x], n_states=1, seed=0, covariance_type="full", variance_floor=1e-3)
    eigvals = np.linalg.eigvalsh(model.covariances[0])
    assert report.variance_clamped
    assert eigvals[0] == pytest.approx(1e-3, rel=1e-6)
    assert eigvals[1] == pytest.approx(5.0 * t.var(), rel=1e-9)


def test_non_stochastic_model_fails_check():
    model = HmmModel(np.array([0.5, 0.5]), np.array([[0.9, 0.2], [0.5, 0.5]]),
                     np.zeros((2, 1)), np.ones((2, 1)))
    with pytest.raises(ConfigError, match="rows \\[0\\]"):
        model.check()


def test_model_document_round_trip(rng):
    model = _random_model(rng)
    restored = HmmModel.from_dict(model.to_dict())
    np.testing.assert_array_equal(restored.transition, model.transition)
    np.testing.assert_array_equal(restored.means, model.means)


# ============================================================================
# Runs and stage ordering
# ============================================================================

def test_stage_runs_example():
    assert stage_runs([0, 0, 1, 1, 1, 3]) == [StageRun(0, 0, 1), StageRun(1, 2, 4), StageRun(3, 5, 5)]


def test_stage_runs_edge_cases():
    assert stage_runs([2, 2, 2]) == [StageRun(2, 0, 2)]
    assert len(stage_runs([0, 1, 0, 1])) == 4
    with pytest.raises(InsufficientDataError):
        stage_runs([])


def test_states_ordered_by_first_occurrence():
    order = order_states_by_onset([np.array([2, 2, 0, 0, 1])], n_states=4)
    assert order == (2, 0, 1, 3)
    assert relabel_path(np.array([2, 2, 0, 0, 1]), order).tolist() == [0, 0, 1, 1, 2]


def test_onset_is_averaged_over_paths():
    order = order_states_by_onset([np.array([0, 1, 1, 1]), np.array([1, 1, 1, 0])], n_states=2)
    # state 0 first appears at frames 0 and 3 (mean 1.5), state 1 at 1 and 0 (mean 0.5)
    assert order == (1, 0)
