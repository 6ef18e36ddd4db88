"""Shared fixtures: small synthetic datasets and hand-built trials."""

import numpy as np
import pytest

from crossing_intent.core.schema import N_FEATURES, BandPowerTrial, Scenario
from crossing_intent.ingest.synth import study_config, synth_generate


def make_trial(frames, trial_id="t1", subject_id="s1", scenario=Scenario.NONE):
    """Trial whose response time matches its frame count at 8 Hz."""
    frames = np.asarray(frames, dtype=float)
    return BandPowerTrial(trial_id, subject_id, scenario, frames, frames.shape[0] / 8.0)


@pytest.fixture
def trial_factory():
    return make_trial


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def flat_trial():
    return make_trial(np.ones((32, N_FEATURES)))


@pytest.fixture(scope="session")
def small_config():
    return study_config(seed=3, n_subjects=3, trials_per_subject=5)


@pytest.fixture(scope="session")
def small_dataset(small_config):
    """3 subjects x 5 trials with the pre-decision surge."""
    return synth_generate(small_config)
