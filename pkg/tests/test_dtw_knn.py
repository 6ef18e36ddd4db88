import itertools
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crossing_intent.core.errors import ConfigError, DataError, InsufficientDataError
from crossing_intent.prediction.dtw_knn import (
    accumulated_cost_matrix,
    dtw_distance,
    dtw_distance_many,
    dtw_path,
    fit_knn,
    knn_predict,
    knn_score,
    knn_scores,
    nearest_neighbours
)

short_series = st.lists(st.integers(0, 2).map(float), min_size=1, max_size=6)


def _warping_paths(n, m):
    """Every monotone, continuous path from (0, 0) to (n-1, m-1)."""
    def extend(path):
        i, j = path[-1]
        if (i, j) == (n - 1, m - 1):
            yield tuple(path)
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            if i + di < n and j + dj < m:
                yield from extend(path + [(i + di, j + dj)])
    yield from extend([(0, 0)])


@lru_cache(maxsize=None)
def _path_cells(n, m):
    """Path x cell incidence matrix over the flattened n x m cost grid."""
    paths = list(_warping_paths(n, m))
    cells = np.zeros((len(paths), n * m))
    for row, path in enumerate(paths):
        cells[row, [i * m + j for i, j in path]] = 1.0
    return cells


def _cheapest_path_cost(x, y):
    local = (np.asarray(x, dtype=float)[:, None] - np.asarray(y, dtype=float)[None, :]) ** 2
    return float(np.min(_path_cells(len(x), len(y)) @ local.ravel()))


def _path_cost(x, y, path):
    return sum((x[i] - y[j]) ** 2 for i, j in path)


# ============================================================================
# DTW
# ============================================================================

@pytest.mark.parametrize(
    "x, y, expected",
    (
        ([1, 2, 3], [1, 2, 3], 0.0),
        ([1, 2, 3], [2, 3, 4], 2.0),
        ([1, 1, 2], [1, 2, 2], 0.0),
        ([5], [5, 5, 5], 0.0),
        ([0], [3], 9.0),
    ),
)
def test_dtw_examples(x, y, expected):
    assert dtw_distance(x, y) == pytest.approx(expected)


def test_accumulated_cost_example():
    assert accumulated_cost_matrix([1, 2, 3], [2, 3, 4]).tolist() == [
        [1.0, 5.0, 14.0], [1.0, 2.0, 6.0], [2.0, 1.0, 2.0]]


@pytest.mark.parametrize("n, m", list(itertools.product(range(1, 7), repeat=2)))
def test_dtw_is_the_cheapest_warping_path_for_every_length_pair(n, m):
    rng = np.random.default_rng(n * 10 + m)
    for _ in range(5):
        x, y = rng.integers(0, 3, size=n).astype(float), rng.integers(0, 3, size=m).astype(float)
        assert dtw_distance(x, y) == _cheapest_path_cost(x, y)


@pytest.mark.slow
@settings(max_examples=10_000, deadline=None)
@given(short_series, short_series)
def test_dtw_is_the_cheapest_warping_path(x, y):
    brute = _cheapest_path_cost(x, y)
    assert dtw_distance(x, y) == brute
    assert dtw_distance(y, x) == brute


@settings(max_examples=60, deadline=None)
@given(short_series, short_series)
def test_backtraced_path_is_valid_and_optimal(x, y):
    alignment = dtw_path(x, y)
    path = alignment.path
    assert path[0] == (0, 0)
    assert path[-1] == (len(x) - 1, len(y) - 1)
    steps = {(b[0] - a[0], b[1] - a[1]) for a, b in zip(path, path[1:])}
    assert steps <= {(1, 1), (1, 0), (0, 1)}
    assert _path_cost(x, y, path) == pytest.approx(alignment.cost)


def test_backtrace_prefers_the_diagonal():
    assert dtw_path([0, 0], [0, 0]).path == ((0, 0), (1, 1))
    assert dtw_path([5], [5, 5, 5]).path == ((0, 0), (0, 1), (0, 2))


def test_batched_distances_match_pairwise(rng):
    query = rng.normal(size=(7, 2))
    references = rng.normal(size=(6, 9, 2))
    for band in (None, 1, 3):
        batched = dtw_distance_many(query, references, band)
        expected = [dtw_distance(query, r, band) for r in references]
        np.testing.assert_allclose(batched, expected, rtol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=1, max_size=12))
def test_dtw_never_exceeds_the_diagonal_cost(pairs):
    x, y = np.array(pairs).T
    diagonal = float(np.sum((x - y) ** 2))
    assert dtw_distance(x, y) <= diagonal + 1e-9 * (1.0 + diagonal)


def test_zero_band_on_equal_lengths_is_pointwise(rng):
    x, y = rng.normal(size=8), rng.normal(size=8)
    assert dtw_distance(x, y, band=0) == pytest.approx(np.sum((x - y) ** 2))


def test_band_is_widened_for_unequal_lengths():
    assert np.isfinite(dtw_distance([1, 2, 3, 4, 5], [1, 5], band=0))


def test_band_never_lowers_the_cost(rng):
    x, y = rng.normal(size=10), rng.normal(size=10)
    assert dtw_distance(x, y, band=2) >= dtw_distance(x, y) - 1e-12


def test_dtw_errors():
    with pytest.raises(InsufficientDataError):
        dtw_distance([], [1.0])
    with pytest.raises(DataError):
        dtw_distance([1.0, np.nan], [1.0])
    with pytest.raises(DataError):
        dtw_distance(np.ones((3, 2)), np.ones((3, 3)))
    with pytest.raises(ConfigError):
        dtw_distance([1.0], [1.0], band=-1)


# ============================================================================
# KNN
# ============================================================================

TRAIN = [np.full(2, float(v)) for v in (0, 1, 2, 3, 4, 10, 11)]
TRAIN_LABELS = [1, 1, 1, 0, 0, 0, 0]


def test_score_is_the_positive_fraction_of_neighbours():
    model = fit_knn(TRAIN, TRAIN_LABELS, k=5)
    assert nearest_neighbours(model, [0.0, 0.0]).tolist() == [0, 1, 2, 3, 4]
    assert knn_score(model, [0.0, 0.0]) == pytest.approx(0.6)
    assert knn_predict(model, [0.0, 0.0]) == 1
    assert knn_predict(model, [10.0, 10.0]) == 0


def test_single_class_training_scores_zero():
    model = fit_knn(TRAIN, [0] * len(TRAIN), k=3)
    assert knn_score(model, [1.0, 1.0]) == 0.0
    assert knn_predict(model, [1.0, 1.0]) == 0


def test_distance_ties_go_to_the_lower_index():
    model = fit_knn([np.ones(2)] * 3, [0, 1, 1], k=1)
    assert knn_score(model, [1.0, 1.0]) == 0.0


def test_split_vote_predicts_negative():
    model = fit_knn(TRAIN[:4], [1, 1, 0, 0], k=4)
    assert knn_score(model, [0.0, 0.0]) == 0.5
    assert knn_predict(model, [0.0, 0.0]) == 0


def test_fit_knn_errors():
    with pytest.raises(InsufficientDataError):
        fit_knn(TRAIN[:2], [0, 1], k=3)
    with pytest.raises(InsufficientDataError):
        fit_knn([], [], k=1)
    with pytest.raises(ConfigError):
        fit_knn(TRAIN, TRAIN_LABELS, k=0)
    with pytest.raises(DataError):
        fit_knn([np.zeros(2), np.zeros(3)], [0, 1], k=1)


def test_parallel_scoring_matches_serial(rng):
    model = fit_knn(list(rng.normal(size=(20, 6))), rng.integers(0, 2, size=20), k=5)
    queries = list(rng.normal(size=(9, 6)))
    np.testing.assert_array_equal(knn_scores(model, queries, n_jobs=2), knn_scores(model, queries, n_jobs=1))


@pytest.mark.parametrize("k", (1, 3, 5, 7))
def test_prediction_agrees_with_majority_score(k):
    rng = np.random.default_rng(k)
    model = fit_knn(list(rng.normal(size=(30, 6))), rng.integers(0, 2, size=30), k=k)
    for query in rng.normal(size=(100, 6)):
        assert knn_predict(model, query) == int(knn_score(model, query) > 0.5)


@pytest.mark.parametrize("factor", (0.1, 7.0))
def test_rescaling_every_series_keeps_the_neighbour_order(rng, factor):
    # scaling all values by c multiplies every DTW distance by c^2
    train = rng.normal(size=(25, 8))
    labels = rng.integers(0, 2, size=25)
    model = fit_knn(list(train), labels, k=5)
    scaled = fit_knn(list(train * factor), labels, k=5)
    for query in rng.normal(size=(20, 8)):
        assert nearest_neighbours(scaled, query * factor).tolist() == nearest_neighbours(model, query).tolist()
        assert knn_predict(scaled, query * factor) == knn_predict(model, query)
