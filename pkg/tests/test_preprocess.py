import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from crossing_intent.analysis.preprocess import (
    iqr_fences,
    iqr_filter,
    pca_fit,
    pca_reconstruct,
    pca_transform,
    standardize_apply,
    standardize_fit,
    standardize_invert
)
from crossing_intent.core.errors import DataError, InsufficientDataError


# ============================================================================
# Standardization
# ============================================================================

def test_constant_column_is_flagged_and_maps_to_zero():
    frames = np.column_stack([np.full(6, 5.0), np.arange(6.0)])
    s = standardize_fit(frames)
    assert s.mean[0] == 5.0
    assert s.constant_mask.tolist() == [True, False]
    assert np.all(standardize_apply(s, frames)[:, 0] == 0.0)


def test_two_point_column_uses_sample_sd():
    s = standardize_fit(np.array([[0.0], [2.0]]))
    assert s.mean[0] == 1.0
    assert s.sd[0] == pytest.approx(math.sqrt(2.0))


def test_standardized_training_data_has_zero_mean_unit_sd(rng):
    frames = rng.normal(3.0, 2.0, size=(40, 7))
    z = standardize_apply(standardize_fit(frames), frames)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(z.std(axis=0, ddof=1), 1.0, atol=1e-10)


def test_standardize_round_trip(rng):
    frames = rng.normal(size=(10, 4))
    s = standardize_fit(frames)
    np.testing.assert_allclose(standardize_invert(s, standardize_apply(s, frames)), frames, atol=1e-9)


def test_empty_frame_set_gives_empty_output(rng):
    s = standardize_fit(rng.normal(size=(5, 3)))
    assert standardize_apply(s, np.empty((0, 3))).shape == (0, 3)


def test_standardize_needs_two_rows():
    with pytest.raises(InsufficientDataError):
        standardize_fit(np.ones((1, 3)))


def test_column_mismatch_is_rejected(rng):
    s = standardize_fit(rng.normal(size=(5, 3)))
    with pytest.raises(DataError):
        standardize_apply(s, np.ones((2, 4)))


# ============================================================================
# PCA
# ============================================================================

def test_rank_one_data_puts_all_variance_in_first_component():
    direction = np.array([1.0, -2.0, 0.5, 3.0, 1.0])
    frames = np.outer(np.linspace(-1, 1, 20), direction)
    model = pca_fit(frames, n_components=3)
    assert model.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(model.explained_variance_ratio[1:], 0.0, atol=1e-9)


def test_two_informative_directions():
    a = np.array([1.0, -1.0] * 4)
    b = np.array([1.0, 1.0, -1.0, -1.0] * 2)
    frames = np.zeros((8, 6))
    frames[:, 0] = 3.0 * a
    frames[:, 1] = b
    model = pca_fit(frames, n_components=5)
    np.testing.assert_allclose(model.explained_variance_ratio, [0.9, 0.1, 0.0, 0.0, 0.0], atol=1e-9)


def test_isotropic_sample_spreads_variance_evenly(rng):
    model = pca_fit(rng.standard_normal((10_000, 70)), n_components=5)
    np.testing.assert_allclose(model.explained_variance_ratio, 1.0 / 70, atol=0.005)


def test_components_are_orthonormal_with_positive_pivot(rng):
    model = pca_fit(rng.normal(size=(50, 8)) @ rng.normal(size=(8, 8)), n_components=5)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(5), atol=1e-9)
    pivots = model.components[np.arange(5), np.argmax(np.abs(model.components), axis=1)]
    assert np.all(pivots > 0)
    assert np.all(np.diff(model.explained_variance) <= 1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_row_order_does_not_change_components(seed):
    rng = np.random.default_rng(seed)
    frames = rng.normal(size=(40, 7)) @ rng.normal(size=(7, 7))
    model = pca_fit(frames, n_components=4)
    shuffled = pca_fit(frames[rng.permutation(len(frames))], n_components=4)
    np.testing.assert_allclose(shuffled.explained_variance, model.explained_variance, rtol=1e-9)
    np.testing.assert_allclose(shuffled.training_mean, model.training_mean, atol=1e-12)
    alignment = np.abs(np.sum(shuffled.components * model.components, axis=1))
    np.testing.assert_allclose(alignment, 1.0, atol=1e-9)


def test_training_mean_projects_to_origin(rng):
    model = pca_fit(rng.normal(size=(30, 6)), n_components=3)
    np.testing.assert_allclose(pca_transform(model, model.training_mean[None, :]), 0.0, atol=1e-12)


def test_full_rank_reconstruction(rng):
    frames = rng.normal(size=(20, 6))
    model = pca_fit(frames, n_components=6)
    np.testing.assert_allclose(pca_reconstruct(model, pca_transform(model, frames)), frames, atol=1e-9)


def test_pca_needs_more_rows_than_components(rng):
    with pytest.raises(InsufficientDataError):
        pca_fit(rng.normal(size=(5, 10)), n_components=5)


# ============================================================================
# IQR
# ============================================================================

def test_iqr_hand_example():
    values = np.array([1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 100], dtype=float)
    low, high = iqr_fences(values)
    assert (low, high) == pytest.approx((-4.5, 17.5))
    kept, mask = iqr_filter(values)
    assert np.flatnonzero(mask).tolist() == [11]
    assert kept.size == 11


@pytest.mark.parametrize(
    "values",
    (
        np.full(8, 2.5),
        np.arange(1.0, 11.0),
    ),
)
def test_no_outliers(values):
    _, mask = iqr_filter(values)
    assert not mask.any()


def test_iqr_needs_four_values():
    with pytest.raises(InsufficientDataError):
        iqr_filter(np.array([1.0, 2.0, 3.0]))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(4, 40), elements=st.floats(-1e6, 1e6)))
def test_kept_values_lie_within_fences(values):
    kept, mask = iqr_filter(values)
    low, high = iqr_fences(values)
    assert kept.size + int(mask.sum()) == values.size
    assert np.all((kept >= low) & (kept <= high))
