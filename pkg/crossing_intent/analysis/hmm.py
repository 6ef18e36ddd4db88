"""
Gaussian hidden Markov model over PCA score sequences.

This module fits a Gaussian HMM with Baum-Welch EM (scaled forward-backward),
decodes the most likely latent-stage path with log-space Viterbi, and maps raw
HMM states onto the four named cognitive stages by when they first occur.

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

import logging
import warnings
from dataclasses import dataclass, field
from itertools import groupby
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from sklearn.cluster import KMeans

from crossing_intent.core.errors import (
    ConfigError,
    DataError,
    InsufficientDataError,
    NumericalError
)

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-6
STOCHASTIC_TOL = 1e-9
MONOTONIC_SLACK = 1e-8
COVARIANCE_TYPES = ("diag", "full")


@dataclass(frozen=True, eq=False)
class HmmModel:
    """
    Gaussian HMM parameters.

    Attributes:
        initial: Initial state distribution, shape (K,)
        transition: Row-stochastic transition matrix, shape (K, K)
        means: Per-state emission means, shape (K, D)
        variances: Per-state emission variances (diagonal), shape (K, D)
        covariances: Full per-state covariances, shape (K, D, D); None for diagonal models
    """
    initial: np.ndarray
    transition: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    covariances: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("initial", "transition", "means", "variances", "covariances"):
            value = getattr(self, name)
            if value is not None:
                value = np.array(value, dtype=float, copy=True)
                value.setflags(write=False)
                object.__setattr__(self, name, value)

    @property
    def n_states(self) -> int:
        return int(self.initial.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.means.shape[1])

    @property
    def covariance_type(self) -> str:
        return "diag" if self.covariances is None else "full"

    def check(self, tol: float = STOCHASTIC_TOL) -> None:
        """
        Verify shapes, stochasticity and positive variances.

        Raises:
            ConfigError: If any HmmModel invariant fails
        """
        k = self.n_states
        if self.transition.shape != (k, k):
            raise ConfigError(f"transition must be {k}x{k}, got {self.transition.shape}")
        if self.means.ndim != 2 or self.means.shape[0] != k or self.variances.shape != self.means.shape:
            raise ConfigError("means and variances must both be K x D")
        if np.any(self.initial < 0) or abs(self.initial.sum() - 1.0) > tol:
            raise ConfigError(f"initial distribution must sum to 1, got {self.initial.sum()!r}")
        row_sums = self.transition.sum(axis=1)
        bad_rows = np.flatnonzero((np.abs(row_sums - 1.0) > tol) | np.any(self.transition < 0, axis=1))
        if bad_rows.size:
            raise ConfigError(f"transition rows {bad_rows.tolist()} are not stochastic (sums {row_sums[bad_rows].tolist()})")
        if np.any(~np.isfinite(self.variances)) or np.any(self.variances <= 0):
            raise ConfigError("emission variances must be positive and finite")
        if self.covariances is not None and self.covariances.shape != (k, self.n_features, self.n_features):
            raise ConfigError("full covariances must be K x D x D")

    def permuted(self, order: Sequence[int]) -> "HmmModel":
        """Model whose state i is this model's state order[i]."""
        order = np.asarray(order, dtype=int)
        return HmmModel(
            initial=self.initial[order],
            transition=self.transition[np.ix_(order, order)],
            means=self.means[order],
            variances=self.variances[order],
            covariances=None if self.covariances is None else self.covariances[order],
        )

    def to_dict(self) -> Dict[str, Any]:
        document = {
            "n_states": self.n_states,
            "covariance_type": self.covariance_type,
            "initial": self.initial.tolist(),
            "transition": self.transition.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }
        if self.covariances is not None:
            document["covariances"] = self.covariances.tolist()
        return document

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "HmmModel":
        try:
            model = cls(
                initial=np.asarray(document["initial"], dtype=float),
                transition=np.asarray(document["transition"], dtype=float),
                means=np.asarray(document["means"], dtype=float),
                variances=np.asarray(document["variances"], dtype=float),
                covariances=(np.asarray(document["covariances"], dtype=float)
                             if "covariances" in document else None),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed HMM document: {e}") from e
        if model.n_states != int(document.get("n_states", model.n_states)):
            raise DataError("HMM document n_states does not match its parameters")
        model.check()
        return model


@dataclass(frozen=True)
class FitReport:
    """
    Convergence record of one EM fit.

    Attributes:
        log_likelihood_trace: Total log-likelihood before each M-step
        iterations: Number of EM iterations run
        converged: Whether |delta log-likelihood| fell below tol
        variance_clamped: Some emission variance hit the floor
        underdetermined: Fewer frames than 10x the free parameter count
        monotonic: Trace never decreased by more than the slack
    """
    log_likelihood_trace: Tuple[float, ...]
    iterations: int
    converged: bool
    variance_clamped: bool = False
    underdetermined: bool = False
    monotonic: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "log_likelihood_trace": list(self.log_likelihood_trace),
            "iterations": self.iterations,
            "converged": self.converged,
            "variance_clamped": self.variance_clamped,
            "underdetermined": self.underdetermined,
            "monotonic": self.monotonic,
        }


class StageRun(NamedTuple):
    """A maximal run of one state, inclusive frame bounds."""
    state: int
    start_frame: int
    end_frame: int


# ============================================================================
# Emission densities and the forward-backward recursions
# ============================================================================

def _as_sequence(model: HmmModel, sequence: np.ndarray) -> np.ndarray:
    x = np.asarray(sequence, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise DataError(f"sequence must be T x {model.n_features}, got shape {np.shape(sequence)}")
    if x.shape[0] < 1:
        raise InsufficientDataError("sequence must contain at least one frame")
    return x


def _emission_log_density(model: HmmModel, x: np.ndarray) -> np.ndarray:
    """Per-frame, per-state Gaussian log density, shape (T, K)."""
    d = x.shape[1]
    if model.covariances is None:
        var = model.variances
        diff = x[:, None, :] - model.means[None, :, :]
        return -0.5 * (d * np.log(2 * np.pi)
                       + np.log(var).sum(axis=1)[None, :]
                       + (diff ** 2 / var[None, :, :]).sum(axis=2))

    out = np.empty((x.shape[0], model.n_states))
    for k in range(model.n_states):
        try:
            chol = np.linalg.cholesky(model.covariances[k])
        except np.linalg.LinAlgError as e:
            raise NumericalError(f"covariance of state {k} is not positive definite") from e
        solved = np.linalg.solve(chol, (x - model.means[k]).T)
        out[:, k] = -0.5 * (d * np.log(2 * np.pi)
                            + 2 * np.log(np.diag(chol)).sum()
                            + (solved ** 2).sum(axis=0))
    return out


def _forward(log_b: np.ndarray, initial: np.ndarray, transition: np.ndarray
             ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Scaled forward pass; returns (alpha, scale, b, loglik)."""
    shift = log_b.max(axis=1, keepdims=True)
    b = np.exp(log_b - shift)
    n_frames, n_states = b.shape
    alpha = np.empty((n_frames, n_states))
    scale = np.empty(n_frames)

    a = initial * b[0]
    for t in range(n_frames):
        if t > 0:
            a = (alpha[t - 1] @ transition) * b[t]
        c = a.sum()
        if not c > 0 or not np.isfinite(c):
            raise NumericalError(f"forward pass underflowed at frame {t}")
        alpha[t] = a / c
        scale[t] = c

    loglik = float(np.log(scale).sum() + shift.sum())
    return alpha, scale, b, loglik


def _backward(b: np.ndarray, scale: np.ndarray, transition: np.ndarray) -> np.ndarray:
    n_frames, n_states = b.shape
    beta = np.ones((n_frames, n_states))
    for t in range(n_frames - 2, -1, -1):
        beta[t] = transition @ (b[t + 1] * beta[t + 1]) / scale[t + 1]
    return beta


def hmm_loglik(model: HmmModel, sequence: np.ndarray) -> float:
    """
    Log-likelihood of a sequence under the model (scaled forward algorithm).

    Args:
        model: Fitted or hand-built HMM
        sequence: T x D score matrix

    Returns:
        log p(sequence | model)

    Raises:
        DataError: If the sequence dimension does not match the model
    """
    x = _as_sequence(model, sequence)
    _, _, _, loglik = _forward(_emission_log_density(model, x), model.initial, model.transition)
    return loglik


def hmm_decode(model: HmmModel, sequence: np.ndarray) -> np.ndarray:
    """
    Most likely state path (Viterbi in log space).

    Ties are broken toward the lower state index at every step.

    Args:
        model: HMM to decode with
        sequence: T x D score matrix, T >= 1

    Returns:
        Integer array of length T with values in 0..K-1

    Raises:
        DataError: If the sequence dimension does not match the model
    """
    x = _as_sequence(model, sequence)
    log_b = _emission_log_density(model, x)
    with np.errstate(divide="ignore"):
        log_pi = np.log(model.initial)
        log_a = np.log(model.transition)

    n_frames, n_states = log_b.shape
    backpointers = np.zeros((n_frames, n_states), dtype=int)
    delta = log_pi + log_b[0]
    columns = np.arange(n_states)
    for t in range(1, n_frames):
        scores = delta[:, None] + log_a
        backpointers[t] = np.argmax(scores, axis=0)
        delta = scores[backpointers[t], columns] + log_b[t]

    path = np.empty(n_frames, dtype=int)
    path[-1] = int(np.argmax(delta))
    for t in range(n_frames - 1, 0, -1):
        path[t - 1] = backpointers[t, path[t]]
    return path


# ============================================================================
# Baum-Welch
# ============================================================================

def free_parameter_count(n_states: int, n_features: int, covariance_type: str = "diag") -> int:
    """Number of free parameters of a Gaussian HMM."""
    emission = n_states * n_features
    if covariance_type == "full":
        emission += n_states * n_features * (n_features + 1) // 2
    else:
        emission += n_states * n_features
    return (n_states - 1) + n_states * (n_states - 1) + emission


def _floor_covariance(cov: np.ndarray, variance_floor: float) -> Tuple[np.ndarray, bool]:
    """Raise eigenvalues below variance_floor up to it; other covariances come back unchanged."""
    cov = (cov + cov.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(cov)
    if np.min(eigvals) >= variance_floor:
        return cov, False
    return (eigvecs * np.maximum(eigvals, variance_floor)) @ eigvecs.T, True


def _initial_model(sequences: List[np.ndarray], n_states: int, seed: int,
                   covariance_type: str, variance_floor: float) -> Tuple[HmmModel, bool]:
    pooled = np.vstack(sequences)
    with warnings.catch_warnings():
        # identical frames make k-means find fewer distinct clusters than requested
        warnings.simplefilter("ignore")
        kmeans = KMeans(n_clusters=n_states, n_init=10, random_state=seed).fit(pooled)
    labels = kmeans.labels_

    pooled_var = pooled.var(axis=0)
    means = np.array(kmeans.cluster_centers_, dtype=float)
    variances = np.tile(pooled_var, (n_states, 1))
    covariances = None
    if covariance_type == "full":
        pooled_cov = np.atleast_2d(np.cov(pooled, rowvar=False, bias=True))
        covariances = np.tile(pooled_cov, (n_states, 1, 1))
    for k in range(n_states):
        members = pooled[labels == k]
        if len(members) >= 2:
            variances[k] = members.var(axis=0)
            if covariances is not None:
                covariances[k] = np.atleast_2d(np.cov(members, rowvar=False, bias=True))

    clamped = bool(np.any(variances < variance_floor))
    variances = np.maximum(variances, variance_floor)
    if covariances is not None:
        for k in range(n_states):
            covariances[k], state_clamped = _floor_covariance(covariances[k], variance_floor)
            clamped = clamped or state_clamped

    # Transition and initial counts from the k-means labelling, add-one smoothed
    counts = np.ones((n_states, n_states))
    starts = np.ones(n_states)
    offset = 0
    for seq in sequences:
        seq_labels = labels[offset:offset + len(seq)]
        offset += len(seq)
        starts[seq_labels[0]] += 1
        np.add.at(counts, (seq_labels[:-1], seq_labels[1:]), 1)

    model = HmmModel(
        initial=starts / starts.sum(),
        transition=counts / counts.sum(axis=1, keepdims=True),
        means=means,
        variances=variances,
        covariances=covariances,
    )
    return model, clamped


def _em_step(model: HmmModel, sequences: List[np.ndarray], variance_floor: float
             ) -> Tuple[float, HmmModel, bool]:
    """One E-step on the current model followed by the M-step; returns (loglik, new model, clamped)."""
    n_states, n_features = model.n_states, model.n_features
    total_ll = 0.0
    start_acc = np.zeros(n_states)
    trans_acc = np.zeros((n_states, n_states))
    weight_acc = np.zeros(n_states)
    sum_acc = np.zeros((n_states, n_features))
    gammas = []

    for x in sequences:
        log_b = _emission_log_density(model, x)
        alpha, scale, b, loglik = _forward(log_b, model.initial, model.transition)
        beta = _backward(b, scale, model.transition)
        gamma = alpha * beta
        gamma /= gamma.sum(axis=1, keepdims=True)
        total_ll += loglik

        start_acc += gamma[0]
        if len(x) > 1:
            weighted_next = b[1:] * beta[1:] / scale[1:, None]
            trans_acc += model.transition * (alpha[:-1].T @ weighted_next)
        weight_acc += gamma.sum(axis=0)
        sum_acc += gamma.T @ x
        gammas.append(gamma)

    initial = start_acc / start_acc.sum()

    transition = np.array(model.transition)
    row_mass = trans_acc.sum(axis=1)
    visited = row_mass > 0
    transition[visited] = trans_acc[visited] / row_mass[visited, None]

    means = np.array(model.means)
    occupied = weight_acc > 1e-12
    means[occupied] = sum_acc[occupied] / weight_acc[occupied, None]

    variances = np.array(model.variances)
    covariances = None if model.covariances is None else np.array(model.covariances)
    sq_acc = np.zeros((n_states, n_features))
    cov_acc = np.zeros((n_states, n_features, n_features))
    for x, gamma in zip(sequences, gammas):
        for k in np.flatnonzero(occupied):
            diff = x - means[k]
            if covariances is None:
                sq_acc[k] += gamma[:, k] @ (diff ** 2)
            else:
                cov_acc[k] += (gamma[:, k, None] * diff).T @ diff

    clamped = False
    if covariances is None:
        raw = sq_acc[occupied] / weight_acc[occupied, None]
        clamped = bool(np.any(raw < variance_floor))
        variances[occupied] = np.maximum(raw, variance_floor)
    else:
        for k in np.flatnonzero(occupied):
            covariances[k], state_clamped = _floor_covariance(cov_acc[k] / weight_acc[k], variance_floor)
            clamped = clamped or state_clamped
            variances[k] = np.diag(covariances[k])

    updated = HmmModel(initial=initial, transition=transition, means=means,
                       variances=variances, covariances=covariances)
    return total_ll, updated, clamped


def hmm_fit(
    sequences: Sequence[np.ndarray],
    n_states: int = 4,
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 200,
    covariance_type: str = "diag",
    variance_floor: float = VARIANCE_FLOOR
) -> Tuple[HmmModel, FitReport]:
    """
    Fit a Gaussian HMM to one or more score sequences with Baum-Welch EM.

    Initialization runs k-means (seeded, 10 restarts) on the pooled frames;
    transition and initial probabilities start from the k-means label counts.
    EM stops when the log-likelihood changes by less than tol; the returned
    model is the one whose likelihood was last evaluated when it converged.

    Args:
        sequences: List of T_i x D score matrices
        n_states: Number of hidden states (4 latent stages by default)
        seed: Seed for the k-means initialization
        tol: Convergence threshold on |delta log-likelihood|
        max_iter: Maximum number of EM iterations
        covariance_type: "diag" (default) or "full"
        variance_floor: Lower bound applied to every emission variance

    Returns:
        Tuple of (model, report)

    Raises:
        InsufficientDataError: Empty sequence list or fewer frames than states
        ConfigError: Invalid n_states or covariance_type
        DataError: Sequences with different dimensions

    Example:
        >>> model, report = hmm_fit([scores], n_states=4, seed=7)
        >>> report.converged
        True
    """
    if n_states < 1:
        raise ConfigError(f"n_states must be >= 1, got {n_states}")
    if covariance_type not in COVARIANCE_TYPES:
        raise ConfigError(f"covariance_type must be one of {COVARIANCE_TYPES}, got {covariance_type!r}")
    if not sequences:
        raise InsufficientDataError("hmm_fit needs at least one sequence")

    seqs = []
    for seq in sequences:
        x = np.asarray(seq, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or len(x) == 0:
            raise InsufficientDataError("every sequence must be a non-empty T x D matrix")
        seqs.append(x)
    n_features = seqs[0].shape[1]
    if any(x.shape[1] != n_features for x in seqs):
        raise DataError("all sequences must have the same number of columns")
    if not all(np.all(np.isfinite(x)) for x in seqs):
        raise DataError("sequences contain non-finite values")

    total_frames = sum(len(x) for x in seqs)
    if total_frames < n_states:
        raise InsufficientDataError(f"{total_frames} frames cannot support {n_states} states")

    n_params = free_parameter_count(n_states, n_features, covariance_type)
    underdetermined = total_frames <= 10 * n_params
    if underdetermined:
        logger.warning(f"HMM fit on {total_frames} frames for {n_params} free parameters "
                       f"is under-determined (want > {10 * n_params})")

    model, clamped = _initial_model(seqs, n_states, seed, covariance_type, variance_floor)

    trace: List[float] = []
    converged = False
    monotonic = True
    iterations = 0
    for iteration in range(max_iter):
        loglik, updated, step_clamped = _em_step(model, seqs, variance_floor)
        iterations = iteration + 1
        if not np.isfinite(loglik):
            raise NumericalError(f"log-likelihood became non-finite at iteration {iterations}")
        if trace and loglik < trace[-1] - MONOTONIC_SLACK:
            monotonic = False
            logger.warning(f"EM log-likelihood decreased at iteration {iterations}: "
                           f"{trace[-1]:.10g} -> {loglik:.10g}")
        trace.append(loglik)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol:
            converged = True
            break
        model = updated
        clamped = clamped or step_clamped

    if clamped:
        logger.warning("Emission variances were clamped to the floor (degenerate data?)")
    logger.info(f"HMM fit: {n_states} states, {total_frames} frames, {iterations} iterations, "
                f"converged={converged}, loglik={trace[-1]:.6g}")

    report = FitReport(
        log_likelihood_trace=tuple(trace),
        iterations=iterations,
        converged=converged,
        variance_clamped=clamped,
        underdetermined=underdetermined,
        monotonic=monotonic,
    )
    return model, report


# ============================================================================
# Paths and stages
# ============================================================================

def stage_runs(path: Sequence[int]) -> List[StageRun]:
    """
    Run-length encode a state path into maximal constant runs.

    Example:
        >>> stage_runs([0, 0, 1, 1, 1, 3])
        [StageRun(state=0, start_frame=0, end_frame=1), StageRun(state=1, start_frame=2, end_frame=4), StageRun(state=3, start_frame=5, end_frame=5)]
    """
    values = [int(v) for v in path]
    if not values:
        raise InsufficientDataError("stage_runs needs a non-empty path")
    runs = []
    start = 0
    for state, group in groupby(values):
        length = len(list(group))
        runs.append(StageRun(state, start, start + length - 1))
        start += length
    return runs


def order_states_by_onset(paths: Sequence[np.ndarray], n_states: int) -> Tuple[int, ...]:
    """
    Order raw HMM states by mean first-occurrence frame across paths.

    States that never occur are placed last, by index.

    Returns:
        order, where order[stage] is the raw state mapped to that stage
    """
    onsets: Dict[int, List[int]] = {k: [] for k in range(n_states)}
    for path in paths:
        path = np.asarray(path, dtype=int)
        for k in range(n_states):
            hits = np.flatnonzero(path == k)
            if hits.size:
                onsets[k].append(int(hits[0]))

    def sort_key(k: int) -> Tuple[int, float, int]:
        if not onsets[k]:
            return (1, 0.0, k)
        return (0, float(np.mean(onsets[k])), k)

    return tuple(sorted(range(n_states), key=sort_key))


def relabel_path(path: np.ndarray, order: Sequence[int]) -> np.ndarray:
    """Map raw states to stages given order[stage] = raw state."""
    lookup = np.empty(len(order), dtype=int)
    lookup[np.asarray(order, dtype=int)] = np.arange(len(order))
    return lookup[np.asarray(path, dtype=int)]
