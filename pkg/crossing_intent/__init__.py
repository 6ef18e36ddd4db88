"""
Crossing Intent - latent stages and crossing-intent prediction from EEG band power

Band power (14 channels x 5 bands at 8 Hz) is reduced with PCA, segmented
into four ordered stages by a Gaussian HMM, compared across stages with
nonparametric tests, and cut into fixed windows that a DTW nearest-neighbour
classifier scores for imminent crossing.

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.

Main modules:
    core: Channel/band schema, trials, validation and errors
    ingest: Manifest loader, spectral band power, synthetic generator
    analysis: Standardization, PCA, HMM, stage inference and statistics
    prediction: Windowing, ADASYN, DTW-KNN and cross-validation
    utils: Settings, seeding and report output
    cli: Command-line front end

Example:
    >>> from crossing_intent.ingest import load_trials
    >>> from crossing_intent.analysis import infer_stages
    >>> from crossing_intent.prediction import WindowConfig, segment_trials, run_cv
"""

__version__ = "1.0.0"
__author__ = "Crossing Intent Project"
__license__ = "AGPL-3.0"

from crossing_intent.core.errors import CrossingIntentError
from crossing_intent.core.schema import BandPowerTrial, ChannelBandKey

from crossing_intent.ingest.loader import load_trials, write_trials

from crossing_intent.analysis.stages import infer_stages, decode_stages

from crossing_intent.prediction.windowing import WindowConfig, segment_trials
from crossing_intent.prediction.evaluation import run_cv, sweep, label_shuffle_test

__all__ = [
    # Core
    'CrossingIntentError',
    'BandPowerTrial',
    'ChannelBandKey',

    # Ingest
    'load_trials',
    'write_trials',

    # Stages
    'infer_stages',
    'decode_stages',

    # Prediction
    'WindowConfig',
    'segment_trials',
    'run_cv',
    'sweep',
    'label_shuffle_test',
]
