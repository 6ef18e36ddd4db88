"""
Sliding-window segmentation, the window-length grid, and ADASYN oversampling.

Every trial contributes exactly one positive window: the one ending at the
trial's final frame (the key press). If the stride skips past the end, an
extra end-anchored window is appended so that window always exists.

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.neighbors import NearestNeighbors

from crossing_intent.core.errors import ConfigError, DataError, InsufficientDataError
from crossing_intent.core.schema import (
    DEFAULT_FEATURE,
    FEATURE_RATE_HZ,
    BandPowerTrial,
    ChannelBandKey,
    feature_index,
    parse_feature_name
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class WindowConfig:
    """Window length and stride in frames."""
    length_frames: int
    stride_frames: int

    def __post_init__(self):
        if int(self.length_frames) != self.length_frames or int(self.stride_frames) != self.stride_frames:
            raise ConfigError("window length and stride must be whole frames")
        if self.length_frames < 2:
            raise ConfigError(f"window length must be >= 2 frames, got {self.length_frames}")
        if self.stride_frames < 1:
            raise ConfigError(f"window stride must be >= 1 frame, got {self.stride_frames}")

    @property
    def label(self) -> str:
        return f"{self.length_frames}x{self.stride_frames}"

    def lookahead_s(self, rate_hz: float = FEATURE_RATE_HZ) -> float:
        """Advance notice a window of this length gives before the key press."""
        return self.length_frames / rate_hz


REFERENCE_CONFIGS: Tuple[WindowConfig, ...] = (
    WindowConfig(5, 9),
    WindowConfig(8, 9),
    WindowConfig(9, 3),
    WindowConfig(11, 7),
)
DEFAULT_GRID_STRIDE = 3


@dataclass(frozen=True, eq=False)
class LabeledSegment:
    """
    One window of one or more feature series.

    Synthetic segments come from oversampling and have no source trial or frame range.
    """
    source_trial_id: Optional[str]
    start_frame: Optional[int]
    values: np.ndarray
    label: int
    synthetic: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.label not in (0, 1):
            raise DataError(f"segment label must be 0 or 1, got {self.label!r}")
        if self.synthetic and (self.source_trial_id is not None or self.start_frame is not None):
            raise DataError("synthetic segments have no source trial or frame range")

    @property
    def length(self) -> int:
        return int(self.values.shape[0])


def window_starts(n_frames: int, cfg: WindowConfig) -> List[int]:
    """Regular starts 0, S, 2S, ... plus N - L when no regular window ends at N - 1."""
    last = n_frames - cfg.length_frames
    if last < 0:
        raise InsufficientDataError(
            f"trial shorter than window ({n_frames} frames < {cfg.length_frames})")
    starts = list(range(0, last + 1, cfg.stride_frames))
    if last % cfg.stride_frames:
        starts.append(last)
    return starts


def slide(sequence: np.ndarray, cfg: WindowConfig, trial_id: Optional[str] = None) -> List[LabeledSegment]:
    """
    Cut a trial's feature series into labeled windows.

    Args:
        sequence: N frames, either a vector or an N x d matrix
        cfg: Window length and stride
        trial_id: Source trial recorded on each segment

    Returns:
        Segments in start order; only the window ending at frame N-1 has label 1

    Raises:
        InsufficientDataError: If N < L ("trial shorter than window")

    Example:
        >>> [s.start_frame for s in slide(np.arange(11.0), WindowConfig(4, 3))]
        [0, 3, 6, 7]
    """
    x = np.asarray(sequence, dtype=float)
    n_frames = x.shape[0]
    last = n_frames - cfg.length_frames
    return [
        LabeledSegment(trial_id, start, x[start:start + cfg.length_frames], int(start == last))
        for start in window_starts(n_frames, cfg)
    ]


def segment_trials(
    trials: Sequence[BandPowerTrial],
    cfg: WindowConfig,
    features: Sequence[ChannelBandKey] = (DEFAULT_FEATURE,)
) -> List[LabeledSegment]:
    """
    Window every trial on one feature (vector values) or several (L x d values).

    Raises:
        InsufficientDataError: If any trial is shorter than the window
    """
    if not features:
        raise ConfigError("at least one feature is needed for segmentation")
    columns = [feature_index(f) for f in features]
    segments = []
    for trial in trials:
        series = trial.frames[:, columns[0]] if len(columns) == 1 else trial.frames[:, columns]
        try:
            segments.extend(slide(series, cfg, trial.trial_id))
        except InsufficientDataError as e:
            raise InsufficientDataError(f"trial {trial.trial_id}: {e}") from e
    logger.debug(f"Config {cfg.label}: {len(segments)} segments from {len(trials)} trials")
    return segments


def window_grid(rate_hz: float = FEATURE_RATE_HZ, min_s: float = 0.25,
                max_s: float = 2.0, step_s: float = 0.125) -> List[int]:
    """
    Window lengths in frames from min_s to max_s in steps of step_s.

    Example:
        >>> window_grid()
        [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16]
    """
    low = int(round(min_s * rate_hz))
    high = int(round(max_s * rate_hz))
    step = max(1, int(round(step_s * rate_hz)))
    return list(range(low, high + 1, step))


def grid_configs(stride_frames: int = DEFAULT_GRID_STRIDE,
                 rate_hz: float = FEATURE_RATE_HZ) -> List[WindowConfig]:
    return [WindowConfig(length, stride_frames) for length in window_grid(rate_hz)]


def resolve_config_set(name: str, grid_stride: int = DEFAULT_GRID_STRIDE) -> List[WindowConfig]:
    """
    Turn a config-set setting into window configs.

    Accepts "reference" (the four study configurations), "grid" (every grid
    length at grid_stride), "all" (both, de-duplicated), or an explicit
    comma-separated list such as "5x9,8x9".

    Raises:
        ConfigError: On an unparseable entry
    """
    name = name.strip()
    if name == "reference":
        return list(REFERENCE_CONFIGS)
    if name == "grid":
        return grid_configs(grid_stride)
    if name == "all":
        configs = list(REFERENCE_CONFIGS)
        configs.extend(c for c in grid_configs(grid_stride) if c not in configs)
        return configs

    configs = []
    for item in name.split(","):
        try:
            length, stride = item.strip().lower().split("x")
            configs.append(WindowConfig(int(length), int(stride)))
        except ValueError:
            raise ConfigError(f"window config {item!r} is not of the form LENGTHxSTRIDE") from None
    if not configs:
        raise ConfigError("empty window config list")
    return configs


def parse_features(names: Sequence[str]) -> List[ChannelBandKey]:
    try:
        return [parse_feature_name(n) for n in names]
    except DataError as e:
        raise ConfigError(str(e)) from e


# ============================================================================
# ADASYN
# ============================================================================

def _neighbours_excluding_self(data: np.ndarray, k: int) -> np.ndarray:
    """Indices of each row's k nearest other rows (Euclidean), nearest first."""
    n = len(data)
    k = min(k, n - 1)
    nn = NearestNeighbors(n_neighbors=min(k + 1, n), algorithm="brute").fit(data)
    _, indices = nn.kneighbors(data)
    result = np.empty((n, k), dtype=int)
    for i, row in enumerate(indices):
        others = row[row != i]
        result[i] = others[:k]
    return result


def _apportion(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to total, proportional to weights (largest remainder)."""
    raw = weights * total
    counts = np.floor(raw).astype(int)
    remainder = total - int(counts.sum())
    if remainder > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:remainder]] += 1
    return counts


def adasyn(
    segments: Sequence[LabeledSegment],
    k_neighbors: int = 5,
    beta: float = 1.0,
    seed: int = 0
) -> List[LabeledSegment]:
    """
    Adaptive synthetic oversampling of the minority class.

    G = floor(beta * (N_maj - N_min)) synthetic samples are shared among the
    minority points in proportion to the fraction of majority points among
    each one's k nearest neighbours (uniformly when every fraction is 0).
    Each sample is x_i + lambda * (x_z - x_i) with lambda ~ U[0, 1] and x_z a
    random minority neighbour of x_i.

    Args:
        segments: Real segments of equal shape, both labels present
        k_neighbors: Neighbourhood size
        beta: Balance level, 1.0 for full balance
        seed: Seed of the generator drawing neighbours and lambdas

    Returns:
        The input segments followed by the synthetic ones

    Raises:
        InsufficientDataError: One class only, or fewer than 2 minority segments
        DataError: Segments of unequal shape
    """
    segments = list(segments)
    labels = np.array([s.label for s in segments], dtype=int)
    counts = np.bincount(labels, minlength=2)
    if np.any(counts == 0):
        raise InsufficientDataError("adasyn needs both classes present")
    minority = int(np.argmin(counts))
    n_min, n_maj = int(counts[minority]), int(counts[1 - minority])
    if n_min < 2:
        raise InsufficientDataError(f"adasyn needs at least 2 minority segments, got {n_min}")

    g_total = int(np.floor(beta * (n_maj - n_min)))
    if g_total <= 0:
        return segments

    shape = segments[0].values.shape
    if any(s.values.shape != shape for s in segments):
        raise DataError("adasyn needs segments of equal shape")
    data = np.vstack([s.values.ravel() for s in segments])
    minority_idx = np.flatnonzero(labels == minority)

    all_neighbours = _neighbours_excluding_self(data, k_neighbors)
    ratios = np.array([np.mean(labels[all_neighbours[i]] != minority) for i in minority_idx])
    if ratios.sum() > 0:
        weights = ratios / ratios.sum()
    else:
        logger.warning("ADASYN: no minority point has majority neighbours; apportioning uniformly")
        weights = np.full(n_min, 1.0 / n_min)
    per_point = _apportion(weights, g_total)

    minority_data = data[minority_idx]
    minority_neighbours = _neighbours_excluding_self(minority_data, k_neighbors)

    rng = np.random.default_rng(seed)
    synthetic = []
    for local, count in enumerate(per_point):
        base = minority_data[local]
        for _ in range(count):
            partner = minority_data[rng.choice(minority_neighbours[local])]
            gap = rng.random()
            synthetic.append(LabeledSegment(None, None, (base + gap * (partner - base)).reshape(shape),
                                            minority, synthetic=True))

    logger.debug(f"ADASYN: {len(synthetic)} synthetic label-{minority} segments "
                 f"({n_min} minority, {n_maj} majority)")
    return segments + synthetic


def segment_rows(segments: Sequence[LabeledSegment]) -> List[Dict[str, Any]]:
    """Segment dump rows: trial_id, start_frame, label, synthetic, v0..v{L-1} (flattened)."""
    rows = []
    for s in segments:
        row: Dict[str, Any] = {
            "trial_id": s.source_trial_id if s.source_trial_id is not None else "",
            "start_frame": s.start_frame if s.start_frame is not None else "",
            "label": s.label,
            "synthetic": int(s.synthetic),
        }
        for i, v in enumerate(s.values.ravel()):
            row[f"v{i}"] = float(v)
        rows.append(row)
    return rows
