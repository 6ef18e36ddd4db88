"""
Feature standardization, PCA, and IQR outlier removal.

Band powers differ by orders of magnitude between bands, so frames are
z-scored per feature before PCA; otherwise the low-frequency bands would
dominate every component.

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from sklearn.decomposition import PCA

from crossing_intent.core.errors import DataError, InsufficientDataError
from crossing_intent.core.schema import N_FEATURES

logger = logging.getLogger(__name__)

DEFAULT_N_COMPONENTS = 5
IQR_MULTIPLIER = 1.5


def _frozen(array: Any) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def _check_columns(frames: np.ndarray, n_columns: int) -> np.ndarray:
    x = np.asarray(frames, dtype=float)
    if x.ndim == 1 and x.size == 0:
        return x.reshape(0, n_columns)
    if x.ndim != 2 or x.shape[1] != n_columns:
        raise DataError(f"expected {n_columns} columns, got shape {x.shape}")
    return x


# ============================================================================
# Standardization
# ============================================================================

@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-feature z-score parameters; constant features map to 0."""
    mean: np.ndarray
    sd: np.ndarray
    constant_mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "sd", _frozen(self.sd))
        mask = np.array(self.constant_mask, dtype=bool, copy=True)
        mask.setflags(write=False)
        object.__setattr__(self, "constant_mask", mask)

    @property
    def n_features(self) -> int:
        return int(self.mean.shape[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean": self.mean.tolist(),
            "sd": self.sd.tolist(),
            "constant_mask": self.constant_mask.tolist(),
        }

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "Standardizer":
        try:
            return cls(document["mean"], document["sd"], document["constant_mask"])
        except KeyError as e:
            raise DataError(f"malformed standardizer document, missing {e}") from e


def standardize_fit(frames: np.ndarray) -> Standardizer:
    """
    Fit per-column mean and sample standard deviation (N-1 denominator).

    Args:
        frames: N x F matrix, N >= 2

    Returns:
        Standardizer with zero-variance columns flagged in constant_mask

    Raises:
        InsufficientDataError: If fewer than 2 rows are given

    Example:
        >>> s = standardize_fit(np.array([[0.0], [2.0]]))
        >>> float(s.mean[0]), float(s.sd[0]) ** 2
        (1.0, 2.0)
    """
    x = np.asarray(frames, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InsufficientDataError(f"standardize_fit needs at least 2 rows, got shape {x.shape}")
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    constant = sd <= 1e-12 * np.maximum(1.0, np.abs(mean))
    sd = np.where(constant, 1.0, sd)
    if constant.any():
        logger.debug(f"{int(constant.sum())} constant feature column(s) will map to 0")
    return Standardizer(mean=mean, sd=sd, constant_mask=constant)


def standardize_apply(standardizer: Standardizer, frames: np.ndarray) -> np.ndarray:
    """(x - mean) / sd per column; constant columns become 0."""
    x = _check_columns(frames, standardizer.n_features)
    z = (x - standardizer.mean) / standardizer.sd
    z[:, standardizer.constant_mask] = 0.0
    return z


def standardize_invert(standardizer: Standardizer, z: np.ndarray) -> np.ndarray:
    """Inverse of standardize_apply; constant columns return their mean."""
    z = _check_columns(z, standardizer.n_features)
    return z * standardizer.sd + standardizer.mean


# ============================================================================
# PCA
# ============================================================================

@dataclass(frozen=True, eq=False)
class PcaModel:
    """
    Principal components of a training set.

    Attributes:
        components: n_components x F orthonormal rows, largest-magnitude entry positive
        explained_variance: Eigenvalues of the sample covariance, non-increasing
        explained_variance_ratio: explained_variance / total variance
        training_mean: Column means of the training frames
    """
    components: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    training_mean: np.ndarray

    def __post_init__(self):
        for name in ("components", "explained_variance", "explained_variance_ratio", "training_mean"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n_components(self) -> int:
        return int(self.components.shape[0])

    @property
    def cumulative_ratio(self) -> float:
        return float(self.explained_variance_ratio.sum())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "training_mean": self.training_mean.tolist(),
        }

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "PcaModel":
        try:
            return cls(document["components"], document["explained_variance"],
                       document["explained_variance_ratio"], document["training_mean"])
        except KeyError as e:
            raise DataError(f"malformed PCA document, missing {e}") from e


def pca_fit(frames: np.ndarray, n_components: int = DEFAULT_N_COMPONENTS) -> PcaModel:
    """
    Top principal components of mean-centred frames.

    Components are eigenvectors of the sample covariance (N-1 denominator);
    each is sign-flipped so that its entry of largest magnitude is positive.

    Args:
        frames: N x F matrix with N > n_components
        n_components: Number of components to keep (5 by default)

    Returns:
        PcaModel

    Raises:
        InsufficientDataError: If N <= n_components
    """
    x = np.asarray(frames, dtype=float)
    if x.ndim != 2:
        raise DataError(f"pca_fit expects an N x F matrix, got shape {x.shape}")
    if x.shape[0] <= n_components:
        raise InsufficientDataError(f"pca_fit needs more than {n_components} rows, got {x.shape[0]}")
    if n_components > x.shape[1]:
        raise DataError(f"cannot extract {n_components} components from {x.shape[1]} features")

    pca = PCA(n_components=n_components, svd_solver="full").fit(x)
    components = np.array(pca.components_, dtype=float)
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), pivots])
    signs[signs == 0] = 1.0
    components *= signs[:, None]

    model = PcaModel(
        components=components,
        explained_variance=np.maximum(pca.explained_variance_, 0.0),
        explained_variance_ratio=np.clip(pca.explained_variance_ratio_, 0.0, 1.0),
        training_mean=pca.mean_,
    )
    logger.debug(f"PCA fit on {x.shape[0]} frames: cumulative ratio {model.cumulative_ratio:.4f}")
    return model


def pca_transform(model: PcaModel, frames: np.ndarray) -> np.ndarray:
    """Scores = (frames - training_mean) . components^T."""
    x = _check_columns(frames, model.training_mean.shape[0])
    return (x - model.training_mean) @ model.components.T


def pca_reconstruct(model: PcaModel, scores: np.ndarray) -> np.ndarray:
    """Map scores back to feature space (exact when all components are kept)."""
    s = _check_columns(scores, model.n_components)
    return s @ model.components + model.training_mean


# ============================================================================
# Outliers
# ============================================================================

def iqr_fences(values: np.ndarray, axis: Optional[int] = None,
               multiplier: float = IQR_MULTIPLIER) -> Tuple[np.ndarray, np.ndarray]:
    """
    Tukey fences Q1 - 1.5 IQR and Q3 + 1.5 IQR.

    Quartiles interpolate linearly between order statistics at position (n-1)q.
    """
    q1, q3 = np.percentile(values, [25.0, 75.0], axis=axis)
    spread = q3 - q1
    return q1 - multiplier * spread, q3 + multiplier * spread


def iqr_filter(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Remove values strictly outside the IQR fences (single pass).

    Args:
        values: 1-D vector of length >= 4

    Returns:
        Tuple of (kept values, outlier mask), mask True where a value was removed

    Raises:
        InsufficientDataError: If fewer than 4 values are given

    Example:
        >>> kept, mask = iqr_filter(np.array([1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 100.0]))
        >>> np.flatnonzero(mask).tolist()
        [11]
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 4:
        raise InsufficientDataError(f"iqr_filter needs at least 4 values, got {v.size}")
    low, high = iqr_fences(v)
    mask = (v < low) | (v > high)
    return v[~mask], mask
