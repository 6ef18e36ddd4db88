"""
Getting band-power trials into the pipeline.

This package contains:
    - loader: JSON-lines manifests and CSV frame files
    - spectral: FFT band-power extraction from raw 128 Hz recordings
    - synth: synthetic trials with known latent-stage ground truth
"""

from crossing_intent.ingest.loader import (
    TrialManifestEntry,
    FRAME_HEADER,
    read_manifest,
    read_frame_file,
    load_trials,
    write_trials
)

from crossing_intent.ingest.spectral import (
    RawRecording,
    band_bin_masks,
    extract_band_power,
    band_power_trial
)

from crossing_intent.ingest.synth import (
    SynthConfig,
    SynthDataset,
    default_truth_model,
    random_loading_matrix,
    identity_loading_matrix,
    study_config,
    sample_stage_path,
    synth_generate
)

__all__ = [
    # Loading
    'TrialManifestEntry',
    'FRAME_HEADER',
    'read_manifest',
    'read_frame_file',
    'load_trials',
    'write_trials',

    # Spectral
    'RawRecording',
    'band_bin_masks',
    'extract_band_power',
    'band_power_trial',

    # Synthetic data
    'SynthConfig',
    'SynthDataset',
    'default_truth_model',
    'random_loading_matrix',
    'identity_loading_matrix',
    'study_config',
    'sample_stage_path',
    'synth_generate',
]
