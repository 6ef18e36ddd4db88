"""
Dynamic time warping and a k-nearest-neighbour classifier over it.

Local cost is the squared difference D(i, j) = (x_i - y_j)^2 (summed over
coordinates for multivariate series), and the accumulated cost follows

    C(i, j) = D(i, j) + min(C(i-1, j-1), C(i-1, j), C(i, j-1))

with C(0, 0) = D(0, 0) and cumulative sums along the first row and column.
No square root is taken anywhere.

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed, effective_n_jobs

from crossing_intent.core.errors import ConfigError, DataError, InsufficientDataError

logger = logging.getLogger(__name__)

DEFAULT_K = 5


def _as_series(x: Sequence[float], name: str = "sequence") -> np.ndarray:
    """n x d float matrix from a vector or matrix."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DataError(f"{name} must be a vector or an n x d matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        raise InsufficientDataError(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} contains non-finite values")
    return a


def _band_mask(n: int, m: int, band: Optional[int]) -> Optional[np.ndarray]:
    """Sakoe-Chiba admissible cells; the band is widened to |n - m| so (n-1, m-1) stays reachable."""
    if band is None:
        return None
    if band < 0:
        raise ConfigError(f"Sakoe-Chiba band must be >= 0, got {band}")
    width = max(band, abs(n - m))
    i, j = np.indices((n, m))
    return np.abs(i - j) <= width


def accumulated_cost_matrix(x: Sequence[float], y: Sequence[float], band: Optional[int] = None) -> np.ndarray:
    """
    Full n x m accumulated cost matrix C.

    Example:
        >>> accumulated_cost_matrix([1, 2, 3], [2, 3, 4]).tolist()
        [[1.0, 5.0, 14.0], [1.0, 2.0, 6.0], [2.0, 1.0, 2.0]]
    """
    a, b = _as_series(x, "x"), _as_series(y, "y")
    if a.shape[1] != b.shape[1]:
        raise DataError("sequences must have the same number of coordinates")
    n, m = len(a), len(b)
    local = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    mask = _band_mask(n, m, band)
    if mask is not None:
        local = np.where(mask, local, np.inf)

    cost = np.empty((n, m))
    cost[0, 0] = local[0, 0]
    for j in range(1, m):
        cost[0, j] = local[0, j] + cost[0, j - 1]
    for i in range(1, n):
        cost[i, 0] = local[i, 0] + cost[i - 1, 0]
        for j in range(1, m):
            cost[i, j] = local[i, j] + min(cost[i - 1, j - 1], cost[i - 1, j], cost[i, j - 1])
    return cost


def dtw_distance_many(query: Sequence[float], references: np.ndarray, band: Optional[int] = None) -> np.ndarray:
    """
    DTW cost of one query against many equal-length references.

    Runs the same recurrence as accumulated_cost_matrix, vectorized over the
    references and keeping two rows of the cost table.

    Args:
        query: Length-n vector or n x d matrix
        references: R x m (univariate) or R x m x d array
        band: Optional Sakoe-Chiba half-width in frames

    Returns:
        Vector of R costs
    """
    q = _as_series(query, "query")
    refs = np.asarray(references, dtype=float)
    if refs.ndim == 2:
        refs = refs[:, :, None]
    if refs.ndim != 3 or refs.shape[2] != q.shape[1]:
        raise DataError(f"references must be R x m{' x d' if q.shape[1] > 1 else ''}, got shape {np.shape(references)}")
    if refs.shape[0] == 0:
        return np.empty(0)
    if refs.shape[1] == 0:
        raise InsufficientDataError("references are empty sequences")
    if not np.all(np.isfinite(refs)):
        raise DataError("references contain non-finite values")

    n, m = len(q), refs.shape[1]
    mask = _band_mask(n, m, band)

    def local_row(i: int) -> np.ndarray:
        row = ((q[i][None, None, :] - refs) ** 2).sum(axis=-1)
        if mask is not None:
            row[:, ~mask[i]] = np.inf
        return row

    d = local_row(0)
    prev = np.empty_like(d)
    prev[:, 0] = d[:, 0]
    for j in range(1, m):
        prev[:, j] = d[:, j] + prev[:, j - 1]
    current = np.empty_like(prev)
    for i in range(1, n):
        d = local_row(i)
        current[:, 0] = d[:, 0] + prev[:, 0]
        for j in range(1, m):
            current[:, j] = d[:, j] + np.minimum(np.minimum(prev[:, j - 1], prev[:, j]), current[:, j - 1])
        prev, current = current, prev
    return prev[:, m - 1].copy()


def dtw_distance(x: Sequence[float], y: Sequence[float], band: Optional[int] = None) -> float:
    """
    Exact DTW cost C(n-1, m-1) with squared local cost.

    The shorter sequence is laid along the rolling rows, so memory is O(min(n, m)).

    Raises:
        InsufficientDataError: Empty sequence
        DataError: Non-finite values or mismatched coordinates

    Example:
        >>> dtw_distance([1, 2, 3], [2, 3, 4])
        2.0
    """
    a, b = _as_series(x, "x"), _as_series(y, "y")
    if a.shape[1] != b.shape[1]:
        raise DataError("sequences must have the same number of coordinates")
    if len(b) > len(a):
        a, b = b, a
    return float(dtw_distance_many(a, b[None], band)[0])


@dataclass(frozen=True)
class DtwAlignment:
    """DTW cost and, when requested, the warping path from (0, 0) to (n-1, m-1)."""
    cost: float
    path: Optional[Tuple[Tuple[int, int], ...]] = None


def dtw_path(x: Sequence[float], y: Sequence[float], band: Optional[int] = None) -> DtwAlignment:
    """
    DTW cost with its warping path.

    The backtrace starts at (n-1, m-1) and, among the admissible predecessors
    with the lowest accumulated cost, prefers diagonal, then up (i-1, j),
    then left (i, j-1).

    Example:
        >>> dtw_path([5], [5, 5, 5]).path
        ((0, 0), (0, 1), (0, 2))
    """
    cost = accumulated_cost_matrix(x, y, band)
    n, m = cost.shape
    i, j = n - 1, m - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            moves = ((i - 1, j - 1), (i - 1, j), (i, j - 1))
            i, j = min(moves, key=lambda cell: cost[cell])
        path.append((i, j))
    return DtwAlignment(cost=float(cost[n - 1, m - 1]), path=tuple(reversed(path)))


# ============================================================================
# KNN
# ============================================================================

@dataclass(frozen=True, eq=False)
class KnnModel:
    """
    Training windows for DTW nearest-neighbour voting.

    Attributes:
        values: N x L (univariate) or N x L x d training windows
        labels: N labels in {0, 1}
        k: Neighbours consulted per query
        band: Optional Sakoe-Chiba half-width
    """
    values: np.ndarray
    labels: np.ndarray
    k: int = DEFAULT_K
    band: Optional[int] = None

    @property
    def n_train(self) -> int:
        return int(len(self.labels))


def fit_knn(values: Sequence[np.ndarray], labels: Sequence[int], k: int = DEFAULT_K,
            band: Optional[int] = None) -> KnnModel:
    """
    Store training windows.

    Raises:
        InsufficientDataError: Empty training set or fewer windows than k
        ConfigError: k < 1
        DataError: Windows of unequal shape
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    labels = np.asarray(labels, dtype=int)
    if labels.size == 0:
        raise InsufficientDataError("KNN needs a non-empty training set")
    if labels.size < k:
        raise InsufficientDataError(f"KNN with k={k} needs at least {k} training windows, got {labels.size}")
    shapes = {np.shape(v) for v in values}
    if len(shapes) != 1:
        raise DataError(f"training windows must share one shape, got {sorted(shapes)}")
    stacked = np.stack([np.asarray(v, dtype=float) for v in values])
    if len(stacked) != labels.size:
        raise DataError("values and labels differ in length")
    if len(np.unique(labels)) < 2:
        logger.warning("KNN training set holds a single class; every score will be constant")
    return KnnModel(values=stacked, labels=labels, k=k, band=band)


def nearest_neighbours(model: KnnModel, query: Sequence[float]) -> np.ndarray:
    """Indices of the k nearest training windows; distance ties go to the lower index."""
    distances = dtw_distance_many(query, model.values, model.band)
    return np.argsort(distances, kind="stable")[:model.k]


def knn_score(model: KnnModel, query: Sequence[float]) -> float:
    """Fraction of the k nearest neighbours labelled 1."""
    return float(np.mean(model.labels[nearest_neighbours(model, query)]))


def knn_predict(model: KnnModel, query: Sequence[float]) -> int:
    """Majority label of the k nearest neighbours; a split vote gives 0."""
    votes = int(model.labels[nearest_neighbours(model, query)].sum())
    return int(2 * votes > model.k)


def knn_scores(model: KnnModel, queries: Sequence[np.ndarray], n_jobs: int = 1) -> np.ndarray:
    """knn_score for every query, spread over up to n_jobs workers."""
    queries = list(queries)
    workers = min(effective_n_jobs(n_jobs), len(queries))
    if workers <= 1:
        return np.array([knn_score(model, q) for q in queries], dtype=float)
    chunks: List[List[np.ndarray]] = [queries[i::workers] for i in range(workers)]
    results = Parallel(n_jobs=workers)(delayed(_score_chunk)(model, c) for c in chunks)
    scores = np.empty(len(queries))
    for offset, chunk_scores in enumerate(results):
        scores[offset::workers] = chunk_scores
    return scores


def _score_chunk(model: KnnModel, queries: List[np.ndarray]) -> List[float]:
    return [knn_score(model, q) for q in queries]
