"""
FFT band-power extraction from raw 128 Hz recordings.

A Hann window slides over each channel; every hop yields one frame holding,
per channel and band, the mean one-sided power of the FFT bins whose centre
frequency lies in the band. The default 2 s window and 0.125 s hop give 8
frames per second, the feature rate of the rest of the pipeline.

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

import logging
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft
from scipy.signal import detrend, get_window

from crossing_intent.core.errors import ConfigError, DataError, InsufficientDataError, TrialValidationError
from crossing_intent.core.schema import (
    BAND_DEFINITIONS,
    BANDS,
    CHANNELS,
    FEATURE_RATE_HZ,
    N_BANDS,
    N_CHANNELS,
    RAW_SAMPLE_RATE_HZ,
    BandPowerTrial,
    Channel,
    Scenario,
    validate_trial
)

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_S = 2.0
DEFAULT_HOP_S = 1.0 / FEATURE_RATE_HZ
MIN_WINDOW_SAMPLES = 32


@dataclass(frozen=True, eq=False)
class RawRecording:
    """
    Voltage samples of all 14 channels at 128 Hz.

    Attributes:
        data: 14 x n_samples matrix, rows in montage order
        sample_rate_hz: Sampling rate, exactly 128
    """
    data: np.ndarray
    sample_rate_hz: float = RAW_SAMPLE_RATE_HZ

    def __post_init__(self):
        data = np.array(self.data, dtype=float, copy=True)
        if data.ndim != 2 or data.shape[0] != N_CHANNELS:
            raise DataError(f"raw recording must be {N_CHANNELS} x n_samples, got shape {data.shape}")
        if self.sample_rate_hz != RAW_SAMPLE_RATE_HZ:
            raise DataError(f"raw sample rate must be {RAW_SAMPLE_RATE_HZ} Hz, got {self.sample_rate_hz}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_channels(cls, channels: Mapping[Channel, np.ndarray],
                      sample_rate_hz: float = RAW_SAMPLE_RATE_HZ) -> "RawRecording":
        """
        Build a recording from named channel series.

        Raises:
            DataError: If a channel is missing or lengths differ
        """
        missing = [c.value for c in CHANNELS if c not in channels]
        if missing:
            raise DataError(f"raw recording is missing channels: {', '.join(missing)}")
        lengths = {c.value: len(channels[c]) for c in CHANNELS}
        if len(set(lengths.values())) != 1:
            raise DataError(f"raw channels differ in length: {lengths}")
        return cls(np.vstack([np.asarray(channels[c], dtype=float) for c in CHANNELS]), sample_rate_hz)

    @property
    def n_samples(self) -> int:
        return int(self.data.shape[1])


def band_bin_masks(window_samples: int, sample_rate_hz: float = RAW_SAMPLE_RATE_HZ) -> np.ndarray:
    """Boolean (n_bands, n_bins) membership of one-sided FFT bins in each band."""
    freqs = fft.rfftfreq(window_samples, d=1.0 / sample_rate_hz)
    return np.vstack([BAND_DEFINITIONS[b].contains(freqs) for b in BANDS])


def extract_band_power(
    raw: RawRecording,
    window_s: float = DEFAULT_WINDOW_S,
    hop_s: float = DEFAULT_HOP_S
) -> np.ndarray:
    """
    Band-power frames of a raw recording.

    Frame f covers the window ending at sample (f * hop + window). Each window
    has its mean removed before the Hann taper, so a DC offset never leaks into
    theta. Bin power is the one-sided periodogram of the tapered samples,
    normalized so that the bin powers of a window sum to the mean squared
    tapered sample.

    Args:
        raw: 14-channel recording at 128 Hz
        window_s: Window length in seconds (>= 32 samples)
        hop_s: Hop between frames in seconds (0.125 s gives 8 Hz frames)

    Returns:
        T x 70 matrix of non-negative band powers, channel-major columns

    Raises:
        ConfigError: If the window is shorter than 32 samples or the hop is not positive
        InsufficientDataError: If the recording is shorter than one window

    Example:
        >>> frames = extract_band_power(RawRecording(np.zeros((14, 128))), window_s=1.0)
        >>> frames.shape
        (1, 70)
    """
    fs = raw.sample_rate_hz
    window_samples = int(round(window_s * fs))
    hop_samples = int(round(hop_s * fs))
    if window_samples < MIN_WINDOW_SAMPLES:
        raise ConfigError(f"window of {window_s} s is {window_samples} samples; need >= {MIN_WINDOW_SAMPLES}")
    if hop_samples < 1:
        raise ConfigError(f"hop of {hop_s} s is shorter than one sample")
    if raw.n_samples < window_samples:
        raise InsufficientDataError(
            f"insufficient samples: {raw.n_samples} < one window of {window_samples}")

    taper = get_window("hann", window_samples)
    # (channels, frames, window) view, one frame per hop
    segments = sliding_window_view(raw.data, window_samples, axis=1)[:, ::hop_samples, :]
    spectrum = fft.rfft(detrend(segments, axis=-1, type="constant") * taper, axis=-1)

    power = np.abs(spectrum) ** 2 / window_samples ** 2
    if window_samples % 2 == 0:
        power[..., 1:-1] *= 2.0
    else:
        power[..., 1:] *= 2.0

    masks = band_bin_masks(window_samples, fs)
    counts = masks.sum(axis=1)
    # (channels, frames, bands): mean of in-band bins
    band_power = np.einsum("cfk,bk->cfb", power, masks.astype(float)) / counts
    n_frames = band_power.shape[1]
    frames = band_power.transpose(1, 0, 2).reshape(n_frames, N_CHANNELS * N_BANDS)
    return np.maximum(frames, 0.0)


def band_power_trial(
    raw: RawRecording,
    trial_id: str,
    subject_id: str,
    scenario: Scenario,
    response_time_s: float,
    window_s: float = DEFAULT_WINDOW_S,
    hop_s: float = DEFAULT_HOP_S,
    onset_sample: int = 0
) -> BandPowerTrial:
    """
    Build a validated trial from the raw samples between stimulus onset and key press.

    The recording must include one window of lead-in before onset_sample so the
    first frame lands at stimulus onset; frames are taken from onset up to the
    key press at onset + response_time_s.

    Args:
        raw: Raw recording holding the trial
        trial_id: Trial identifier
        subject_id: Participant identifier
        scenario: Traffic scenario
        response_time_s: Seconds from stimulus onset to key press
        window_s: FFT window in seconds
        hop_s: Frame hop in seconds
        onset_sample: Sample index of stimulus onset

    Returns:
        BandPowerTrial at 1/hop_s frames per second

    Raises:
        InsufficientDataError: If the recording does not cover the trial
        TrialValidationError: If the resulting frames violate a trial invariant
    """
    fs = raw.sample_rate_hz
    window_samples = int(round(window_s * fs))
    end_sample = onset_sample + int(round(response_time_s * fs))
    start_sample = onset_sample - window_samples
    if start_sample < 0 or end_sample > raw.n_samples:
        raise InsufficientDataError(
            f"trial {trial_id} needs samples {start_sample}..{end_sample}, recording has {raw.n_samples}")

    frames = extract_band_power(RawRecording(raw.data[:, start_sample:end_sample], fs), window_s, hop_s)
    # drop the frame whose window ends exactly at onset
    frames = frames[1:]
    trial = BandPowerTrial(trial_id, subject_id, scenario, frames, response_time_s,
                           feature_rate_hz=1.0 / hop_s)
    result = validate_trial(trial)
    if not result.ok:
        raise TrialValidationError(trial_id, list(result.violations))
    logger.debug(f"Extracted {trial.n_frames} frames for trial {trial_id}")
    return trial
