"""
Channel/band schema and the canonical data types of the pipeline.

The 70 EEG features are every (channel, band) pair of a 14-channel montage and
five frequency bands. Features are serialized channel-major: the flat index of
(channel, band) is channel_index * 5 + band_index, which is also the column
order of the CSV frame files.

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Dict, List, Optional, Tuple

import numpy as np

from crossing_intent.core.errors import DataError

# ============================================================================
# Schema constants
# ============================================================================

RAW_SAMPLE_RATE_HZ = 128
FEATURE_RATE_HZ = 8
N_STAGES = 4


class Channel(Enum):
    """Scalp sites of the 14-channel montage, in on-disk column order."""
    AF3 = "AF3"
    F7 = "F7"
    F3 = "F3"
    FC5 = "FC5"
    T7 = "T7"
    P7 = "P7"
    O1 = "O1"
    O2 = "O2"
    P8 = "P8"
    T8 = "T8"
    FC6 = "FC6"
    F4 = "F4"
    F8 = "F8"
    AF4 = "AF4"


class Band(Enum):
    """EEG frequency bands, lowest first."""
    THETA = "theta"
    ALPHA = "alpha"
    LOW_BETA = "low_beta"
    HIGH_BETA = "high_beta"
    GAMMA = "gamma"


class Scenario(Enum):
    """Traffic scenario a trial was recorded under."""
    NONE = "None"
    SPARSE = "Sparse"
    BUSY = "Busy"
    SURFACE_MARKED = "SurfaceMarked"
    SIGNALIZED = "Signalized"


class Stage(IntEnum):
    """Latent cognitive stages, in the order they unfold before a crossing."""
    PERCEPTION = 0
    EVIDENCE_ACCUMULATION = 1
    DECISION_RESOLUTION = 2
    EXECUTION = 3


CHANNELS: Tuple[Channel, ...] = tuple(Channel)
BANDS: Tuple[Band, ...] = tuple(Band)
N_CHANNELS = len(CHANNELS)
N_BANDS = len(BANDS)
N_FEATURES = N_CHANNELS * N_BANDS


@dataclass(frozen=True)
class BandDefinition:
    """
    Frequency bounds of one band.

    Bins belong to a band when low_hz <= f < high_hz; the top band also keeps
    its upper edge (closed interval) so the bands partition [4, 45] Hz.
    """
    band: Band
    low_hz: float
    high_hz: float
    closed_high: bool = False

    def contains(self, freqs: np.ndarray) -> np.ndarray:
        """Boolean mask of the frequencies that fall inside this band."""
        freqs = np.asarray(freqs, dtype=float)
        upper = freqs <= self.high_hz if self.closed_high else freqs < self.high_hz
        return (freqs >= self.low_hz) & upper


BAND_DEFINITIONS: Dict[Band, BandDefinition] = {
    Band.THETA: BandDefinition(Band.THETA, 4.0, 8.0),
    Band.ALPHA: BandDefinition(Band.ALPHA, 8.0, 12.0),
    Band.LOW_BETA: BandDefinition(Band.LOW_BETA, 12.0, 16.0),
    Band.HIGH_BETA: BandDefinition(Band.HIGH_BETA, 16.0, 25.0),
    Band.GAMMA: BandDefinition(Band.GAMMA, 25.0, 45.0, closed_high=True),
}


@dataclass(frozen=True)
class ChannelBandKey:
    """One of the 70 (channel, band) features."""
    channel: Channel
    band: Band

    @property
    def name(self) -> str:
        return feature_name(self)

    def __str__(self) -> str:
        return feature_name(self)


# ============================================================================
# Feature indexing
# ============================================================================

def feature_index(key: ChannelBandKey) -> int:
    """
    Flat column index of a (channel, band) feature.

    Args:
        key: The feature

    Returns:
        Index in 0..69 (channel-major)

    Example:
        >>> feature_index(ChannelBandKey(Channel.F4, Band.HIGH_BETA))
        58
    """
    return CHANNELS.index(key.channel) * N_BANDS + BANDS.index(key.band)


def feature_key(index: int) -> ChannelBandKey:
    """Inverse of feature_index."""
    if not 0 <= index < N_FEATURES:
        raise DataError(f"feature index out of range 0..{N_FEATURES - 1}: {index}")
    channel_idx, band_idx = divmod(index, N_BANDS)
    return ChannelBandKey(CHANNELS[channel_idx], BANDS[band_idx])


def feature_name(key: ChannelBandKey) -> str:
    """Column name of a feature, e.g. 'F4.high_beta'."""
    return f"{key.channel.value}.{key.band.value}"


def parse_feature_name(name: str) -> ChannelBandKey:
    """
    Parse a column name such as 'F4.high_beta' (or 'F4-high_beta').

    Raises:
        DataError: If the channel or band is unknown
    """
    text = name.strip()
    sep = "." if "." in text else "-"
    channel_text, _, band_text = text.partition(sep)
    try:
        return ChannelBandKey(Channel(channel_text), Band(band_text))
    except ValueError:
        raise DataError(f"unknown feature name: {name!r}") from None


FEATURE_NAMES: Tuple[str, ...] = tuple(feature_name(feature_key(i)) for i in range(N_FEATURES))
DEFAULT_FEATURE = ChannelBandKey(Channel.F4, Band.HIGH_BETA)


# ============================================================================
# Trials and validation
# ============================================================================

@dataclass(frozen=True, eq=False)
class BandPowerTrial:
    """
    One trial's band-power time series, stimulus onset to key press.

    Attributes:
        trial_id: Unique trial identifier
        subject_id: Participant identifier
        scenario: Traffic scenario of the trial
        frames: T x 70 matrix of band powers (read-only)
        response_time_s: Seconds from stimulus onset to key press
        feature_rate_hz: Frame rate of the series (8 Hz)
    """
    trial_id: str
    subject_id: str
    scenario: Scenario
    frames: np.ndarray
    response_time_s: float
    feature_rate_hz: float = FEATURE_RATE_HZ

    def __post_init__(self):
        frames = np.array(self.frames, dtype=float, copy=True)
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0]) if self.frames.ndim >= 1 else 0

    def feature(self, key: ChannelBandKey) -> np.ndarray:
        """The series of one feature."""
        return self.frames[:, feature_index(key)]


@dataclass(frozen=True)
class Violation:
    """One violated trial invariant, with coordinates where they apply."""
    kind: str
    message: str
    frame: Optional[int] = None
    feature: Optional[int] = None

    def __str__(self) -> str:
        where = []
        if self.frame is not None:
            where.append(f"frame {self.frame}")
        if self.feature is not None:
            where.append(f"feature {self.feature} ({FEATURE_NAMES[self.feature]})")
        suffix = f" at {', '.join(where)}" if where else ""
        return f"{self.kind}: {self.message}{suffix}"


@dataclass(frozen=True)
class ValidationResult:
    """Outcome of validate_trial; ok iff there are no violations."""
    violations: Tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_trial(trial: BandPowerTrial, max_reported: int = 100) -> ValidationResult:
    """
    Check every BandPowerTrial invariant.

    Violations are returned as data; nothing is raised.

    Args:
        trial: Trial to check
        max_reported: Cap on per-cell violations listed (shape and timing
                      violations are always listed)

    Returns:
        ValidationResult enumerating each violated invariant

    Example:
        >>> t = BandPowerTrial("t1", "s1", Scenario.NONE, np.ones((100, 70)), 2.0)
        >>> [v.kind for v in validate_trial(t).violations]
        ['frame_count']
    """
    violations: List[Violation] = []
    frames = trial.frames

    if frames.ndim != 2 or frames.shape[1] != N_FEATURES:
        violations.append(Violation(
            "shape", f"expected T x {N_FEATURES} frames, got shape {frames.shape}"))
        return ValidationResult(tuple(violations))

    if trial.feature_rate_hz != FEATURE_RATE_HZ:
        violations.append(Violation(
            "rate", f"feature rate must be {FEATURE_RATE_HZ} Hz, got {trial.feature_rate_hz}"))

    if not trial.response_time_s > 0:
        violations.append(Violation(
            "response_time", f"response time must be > 0 s, got {trial.response_time_s}"))
    else:
        expected = round(trial.response_time_s * trial.feature_rate_hz)
        if abs(frames.shape[0] - expected) > 1:
            violations.append(Violation(
                "frame_count",
                f"{frames.shape[0]} frames but response time {trial.response_time_s} s "
                f"implies {expected}±1"))

    non_finite = np.argwhere(~np.isfinite(frames))
    negative = np.argwhere(np.isfinite(frames) & (frames < 0))
    for kind, cells, text in (("non_finite", non_finite, "power is not finite"),
                              ("negative", negative, "power is negative")):
        for frame_idx, feature_idx in cells[:max_reported]:
            violations.append(Violation(kind, text, int(frame_idx), int(feature_idx)))
        if len(cells) > max_reported:
            violations.append(Violation(kind, f"{len(cells) - max_reported} further cells"))

    return ValidationResult(tuple(violations))
