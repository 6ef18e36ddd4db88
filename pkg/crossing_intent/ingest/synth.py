"""
Synthetic band-power datasets with known latent-stage ground truth.

Each trial samples a stage path from a truth HMM, emits 5-dimensional Gaussian
component scores per frame, mixes them into the 70 features through a loading
matrix, and adds isotropic noise. The final frames of every trial are emitted
from the execution stage while the sampled Markov chain is recorded unforced.
An optional pre-decision surge is added to one feature so that the window
ending at the key press carries signal.

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from crossing_intent.analysis.hmm import HmmModel
from crossing_intent.core.errors import ConfigError
from crossing_intent.core.schema import (
    DEFAULT_FEATURE,
    FEATURE_RATE_HZ,
    N_FEATURES,
    BandPowerTrial,
    ChannelBandKey,
    Scenario,
    Stage,
    feature_index,
    feature_name
)
from crossing_intent.utils.seeding import substream

logger = logging.getLogger(__name__)

SCENARIO_ORDER: Tuple[Scenario, ...] = tuple(Scenario)


@dataclass(frozen=True, eq=False)
class SynthConfig:
    """
    Generator settings.

    Attributes:
        truth_model: HMM the stage paths and component scores are drawn from
        loading_matrix: D x 70 map from component space to feature space
        n_subjects: Number of simulated participants
        trials_per_subject: Trials per participant (scenarios cycle in enum order)
        mean_duration_s: Mean response time
        duration_jitter_s: Half-width of the uniform response-time jitter
        noise_sigma: Standard deviation of the isotropic feature noise
        seed: Run seed; each trial draws from its own substream
        forced_execution_frames: Final frames forced into the execution stage
        ramp_feature: Feature carrying the pre-decision surge
        ramp_amplitude: Surge height at the key-press frame (0 disables it)
        ramp_frames: Frames over which the surge builds, doubling every frame
        min_frames: Shortest trial in frames
    """
    truth_model: HmmModel
    loading_matrix: np.ndarray
    n_subjects: int = 12
    trials_per_subject: int = 5
    mean_duration_s: float = 4.0
    duration_jitter_s: float = 1.0
    noise_sigma: float = 0.5
    seed: int = 0
    forced_execution_frames: int = 4
    ramp_feature: ChannelBandKey = DEFAULT_FEATURE
    ramp_amplitude: float = 0.0
    ramp_frames: int = 6
    min_frames: int = 17

    def __post_init__(self):
        loading = np.array(self.loading_matrix, dtype=float, copy=True)
        loading.setflags(write=False)
        object.__setattr__(self, "loading_matrix", loading)

    def check(self) -> None:
        """
        Raises:
            ConfigError: If any generator setting is out of range
        """
        self.truth_model.check()
        if self.n_subjects < 1 or self.trials_per_subject < 1:
            raise ConfigError("n_subjects and trials_per_subject must be >= 1")
        if not self.mean_duration_s > 0 or self.duration_jitter_s < 0:
            raise ConfigError("mean_duration_s must be > 0 and duration_jitter_s >= 0")
        if self.mean_duration_s - self.duration_jitter_s <= 0:
            raise ConfigError("durations must stay positive: mean_duration_s must exceed duration_jitter_s")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        expected = (self.truth_model.n_features, N_FEATURES)
        if self.loading_matrix.shape != expected:
            raise ConfigError(f"loading_matrix must be {expected[0]} x {expected[1]}, got {self.loading_matrix.shape}")
        if self.forced_execution_frames < 0 or self.ramp_frames < 0 or self.min_frames < 1:
            raise ConfigError("frame counts must be non-negative (min_frames >= 1)")


@dataclass(frozen=True)
class SynthDataset:
    """
    Generated trials with the stage paths and component scores behind them.

    stage_paths hold the stage each frame was emitted from, including the
    forced execution tail. chain_paths hold the Markov chain as sampled, before
    forcing, and follow the truth transition matrix exactly.
    """
    trials: List[BandPowerTrial]
    stage_paths: Dict[str, np.ndarray] = field(default_factory=dict)
    chain_paths: Dict[str, np.ndarray] = field(default_factory=dict)
    latent_scores: Dict[str, np.ndarray] = field(default_factory=dict)
    offset: float = 0.0

    def ground_truth(self, config: SynthConfig) -> Dict[str, Any]:
        """Sidecar document: truth model, offset, and per-trial paths and scores."""
        return {
            "seed": config.seed,
            "truth_model": config.truth_model.to_dict(),
            "loading_matrix": config.loading_matrix.tolist(),
            "noise_sigma": config.noise_sigma,
            "offset": self.offset,
            "ramp_feature": feature_name(config.ramp_feature),
            "ramp_amplitude": config.ramp_amplitude,
            "trials": {
                trial.trial_id: {
                    "stage_path": self.stage_paths[trial.trial_id].tolist(),
                    "chain_path": self.chain_paths[trial.trial_id].tolist(),
                    "latent_scores": self.latent_scores[trial.trial_id].tolist(),
                }
                for trial in self.trials
            },
        }


# ============================================================================
# Presets
# ============================================================================

def default_truth_model(n_components: int = 5, separation: float = 4.0) -> HmmModel:
    """
    Four well-separated stages that mostly advance in order.

    State k has mean +separation on component k; the fifth component carries
    no stage information.
    """
    means = np.zeros((4, n_components))
    for k in range(4):
        means[k, k % n_components] = separation
    transition = np.array([
        [0.80, 0.15, 0.03, 0.02],
        [0.03, 0.80, 0.15, 0.02],
        [0.02, 0.03, 0.80, 0.15],
        [0.05, 0.05, 0.05, 0.85],
    ])
    return HmmModel(
        initial=np.array([0.85, 0.05, 0.05, 0.05]),
        transition=transition,
        means=means,
        variances=np.ones((4, n_components)),
    )


def random_loading_matrix(seed: int, n_components: int = 5, scale: float = 0.5) -> np.ndarray:
    """Gaussian D x 70 loading matrix drawn from the synth substream."""
    return substream(seed, "synth", "loading").normal(0.0, scale, size=(n_components, N_FEATURES))


def identity_loading_matrix(n_components: int = 5) -> np.ndarray:
    """Component i drives feature i alone."""
    loading = np.zeros((n_components, N_FEATURES))
    loading[np.arange(n_components), np.arange(n_components)] = 1.0
    return loading


def study_config(seed: int = 0, **overrides: Any) -> SynthConfig:
    """
    12 subjects x 5 trials (one per scenario) with a surge in F4-high_beta.

    Args:
        seed: Run seed
        **overrides: Any SynthConfig field

    Returns:
        SynthConfig
    """
    settings: Dict[str, Any] = dict(
        truth_model=default_truth_model(),
        loading_matrix=random_loading_matrix(seed),
        n_subjects=12,
        trials_per_subject=5,
        mean_duration_s=4.0,
        duration_jitter_s=1.5,
        noise_sigma=0.5,
        seed=seed,
        forced_execution_frames=4,
        ramp_feature=DEFAULT_FEATURE,
        ramp_amplitude=24.0,
        ramp_frames=6,
    )
    settings.update(overrides)
    return SynthConfig(**settings)


# ============================================================================
# Generation
# ============================================================================

def sample_stage_path(model: HmmModel, n_frames: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a state path of the given length from an HMM's Markov chain."""
    path = np.empty(n_frames, dtype=int)
    cumulative = np.cumsum(model.transition, axis=1)
    path[0] = int(rng.choice(model.n_states, p=model.initial))
    draws = rng.random(n_frames)
    for t in range(1, n_frames):
        path[t] = min(int(np.searchsorted(cumulative[path[t - 1]], draws[t], side="right")),
                      model.n_states - 1)
    return path


def _generate_trial(config: SynthConfig, subject: int, trial: int
                    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
    rng = substream(config.seed, "synth", subject, trial)
    model = config.truth_model

    duration = config.mean_duration_s + config.duration_jitter_s * rng.uniform(-1.0, 1.0)
    n_frames = max(config.min_frames, int(round(duration * FEATURE_RATE_HZ)))

    chain = sample_stage_path(model, n_frames, rng)
    path = chain.copy()
    forced = min(config.forced_execution_frames, n_frames)
    if forced:
        path[n_frames - forced:] = min(int(Stage.EXECUTION), model.n_states - 1)

    sd = np.sqrt(model.variances[path])
    scores = model.means[path] + sd * rng.standard_normal(sd.shape)
    frames = scores @ config.loading_matrix
    frames += config.noise_sigma * rng.standard_normal(frames.shape)

    if config.ramp_amplitude and config.ramp_frames:
        span = min(config.ramp_frames, n_frames)
        distance = np.arange(span - 1, -1, -1)
        frames[n_frames - span:, feature_index(config.ramp_feature)] += config.ramp_amplitude * 0.5 ** distance

    return chain, path, scores, frames, n_frames / FEATURE_RATE_HZ


def synth_generate(config: SynthConfig) -> SynthDataset:
    """
    Generate a synthetic dataset with ground truth.

    Output is a pure function of the config: the same seed gives bit-identical
    trials. After all trials are drawn, one common offset lifts every power to
    be non-negative.

    Args:
        config: Generator settings

    Returns:
        SynthDataset with trials, emitted and sampled stage paths, and latent component scores

    Raises:
        ConfigError: If the truth model is not stochastic or a setting is out of range

    Example:
        >>> data = synth_generate(study_config(seed=3))
        >>> len(data.trials)
        60
    """
    config.check()

    generated = []
    for subject in range(config.n_subjects):
        for trial in range(config.trials_per_subject):
            generated.append((subject, trial) + _generate_trial(config, subject, trial))

    lowest = min(float(frames.min()) for *_, frames, _ in generated)
    offset = max(0.0, -lowest)

    trials, chains, paths, scores_by_trial = [], {}, {}, {}
    for subject, trial, chain, path, scores, frames, response_time in generated:
        trial_id = f"s{subject + 1:02d}_t{trial + 1:02d}"
        trials.append(BandPowerTrial(
            trial_id=trial_id,
            subject_id=f"s{subject + 1:02d}",
            scenario=SCENARIO_ORDER[trial % len(SCENARIO_ORDER)],
            frames=np.maximum(frames + offset, 0.0),
            response_time_s=response_time,
        ))
        chains[trial_id] = chain
        paths[trial_id] = path
        scores_by_trial[trial_id] = scores

    logger.info(f"Generated {len(trials)} synthetic trials "
                f"({sum(t.n_frames for t in trials)} frames, offset {offset:.4g})")
    return SynthDataset(trials=trials, stage_paths=paths, chain_paths=chains,
                        latent_scores=scores_by_trial, offset=offset)
