"""
Cross-validated evaluation of the DTW-KNN intent detector.

Each fold oversamples its training segments with ADASYN, fits KNN on them,
and scores the held-out fold. The ROC is built from the pooled out-of-fold
scores, which cover every real segment exactly once; synthetic segments
never reach a test fold.

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import rankdata
from sklearn.metrics import auc as trapezoid_area
from sklearn.metrics import confusion_matrix, roc_curve

from crossing_intent.core.errors import ConfigError, CrossingIntentError, DataError, InsufficientDataError
from crossing_intent.core.schema import DEFAULT_FEATURE, FEATURE_RATE_HZ, BandPowerTrial, ChannelBandKey
from crossing_intent.prediction.dtw_knn import DEFAULT_K, fit_knn, knn_scores
from crossing_intent.prediction.windowing import LabeledSegment, WindowConfig, adasyn, segment_trials
from crossing_intent.utils.seeding import substream, substream_seed

logger = logging.getLogger(__name__)

DEFAULT_FOLDS = 5
DEFAULT_PERMUTATIONS = 10
SPLIT_MODES = ("segment", "trial")


# ============================================================================
# Folds
# ============================================================================

@dataclass(frozen=True, eq=False)
class FoldAssignment:
    """Fold index per segment."""
    fold_of: np.ndarray
    n_folds: int
    seed: int
    mode: str = "segment"

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)


def _round_robin(units_by_class: Dict[int, np.ndarray], n_units: int, n_folds: int,
                 rng: np.random.Generator) -> np.ndarray:
    fold_of = np.full(n_units, -1, dtype=int)
    for label in sorted(units_by_class):
        members = units_by_class[label]
        shuffled = members[rng.permutation(len(members))]
        fold_of[shuffled] = np.arange(len(shuffled)) % n_folds
    return fold_of


def stratified_kfold(
    labels: Sequence[int],
    n_folds: int = DEFAULT_FOLDS,
    seed: int = 0,
    groups: Optional[Sequence[str]] = None
) -> FoldAssignment:
    """
    Stratified fold assignment by class-wise round-robin after a seeded shuffle.

    With groups (trial ids), whole groups are assigned instead, stratified by
    whether the group holds a positive segment.

    Args:
        labels: Segment labels in {0, 1}
        n_folds: Number of folds
        seed: Run seed; the shuffle draws from the "split" substream
        groups: Optional group id per segment

    Returns:
        FoldAssignment

    Raises:
        InsufficientDataError: A class (or group class) with fewer members than n_folds

    Example:
        >>> folds = stratified_kfold([1] * 5 + [0] * 20, n_folds=5, seed=1)
        >>> [int(np.sum(np.array([1] * 5 + [0] * 20)[folds.test_indices(f)])) for f in range(5)]
        [1, 1, 1, 1, 1]
    """
    if n_folds < 2:
        raise ConfigError(f"n_folds must be >= 2, got {n_folds}")
    y = np.asarray(labels, dtype=int)
    rng = substream(seed, "split")

    if groups is None:
        by_class = {int(c): np.flatnonzero(y == c) for c in np.unique(y)}
        for label, members in by_class.items():
            if len(members) < n_folds:
                raise InsufficientDataError(
                    f"class {label} has {len(members)} segments, fewer than {n_folds} folds")
        return FoldAssignment(_round_robin(by_class, len(y), n_folds, rng), n_folds, seed, "segment")

    group_ids = np.asarray(groups)
    if group_ids.shape != y.shape:
        raise DataError("groups and labels differ in length")
    unique, inverse = np.unique(group_ids, return_inverse=True)
    group_label = np.zeros(len(unique), dtype=int)
    np.maximum.at(group_label, inverse, y)
    by_class = {int(c): np.flatnonzero(group_label == c) for c in np.unique(group_label)}
    for label, members in by_class.items():
        if len(members) < n_folds:
            raise InsufficientDataError(
                f"{len(members)} trials with label {label}, fewer than {n_folds} folds")
    group_fold = _round_robin(by_class, len(unique), n_folds, rng)
    return FoldAssignment(group_fold[inverse], n_folds, seed, "trial")


# ============================================================================
# Metrics
# ============================================================================

@dataclass(frozen=True)
class Metrics:
    """Confusion counts and the derived scores; *_undefined marks a zero denominator reported as 0."""
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    precision_undefined: bool = False
    recall_undefined: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def confusion_metrics(predicted: Sequence[int], actual: Sequence[int]) -> Metrics:
    """
    Accuracy, precision, recall and F1 for binary labels.

    Raises:
        DataError: Length mismatch or empty input

    Example:
        >>> m = confusion_metrics([1] * 7 + [1] * 3 + [0] * 3 + [0] * 7, [1] * 7 + [0] * 3 + [1] * 3 + [0] * 7)
        >>> round(m.precision, 10), round(m.recall, 10), round(m.f1, 10), round(m.accuracy, 10)
        (0.7, 0.7, 0.7, 0.7)
    """
    p = np.asarray(predicted, dtype=int)
    a = np.asarray(actual, dtype=int)
    if p.shape != a.shape:
        raise DataError(f"predicted and actual differ in length ({p.size} vs {a.size})")
    if p.size == 0:
        raise DataError("confusion_metrics needs at least one prediction")
    tn, fp, fn, tp = (int(v) for v in confusion_matrix(a, p, labels=[0, 1]).ravel())

    precision_undefined = tp + fp == 0
    recall_undefined = tp + fn == 0
    if precision_undefined:
        logger.warning("No predicted positives: precision reported as 0")
    if recall_undefined:
        logger.warning("No actual positives: recall reported as 0")
    precision = 0.0 if precision_undefined else tp / (tp + fp)
    recall = 0.0 if recall_undefined else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return Metrics(
        accuracy=(tp + tn) / p.size,
        precision=precision,
        recall=recall,
        f1=f1,
        tp=tp, fp=fp, fn=fn, tn=tn,
        precision_undefined=precision_undefined,
        recall_undefined=recall_undefined,
    )


@dataclass(frozen=True, eq=False)
class RocCurve:
    """ROC points from (0, 0) to (1, 1), monotone in fpr, with the trapezoidal AUC."""
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def points(self) -> List[Tuple[float, float]]:
        return [(float(f), float(t)) for f, t in zip(self.fpr, self.tpr)]


def _check_binary(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    if s.shape != y.shape:
        raise DataError("scores and labels differ in length")
    if len(np.unique(y)) < 2:
        raise InsufficientDataError("ROC analysis needs both classes present")
    return s, y


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """
    ROC over every distinct score (descending, ties grouped) and its trapezoidal area.

    Example:
        >>> roc_auc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]).auc
        0.75
    """
    s, y = _check_binary(scores, labels)
    fpr, tpr, thresholds = roc_curve(y, s, drop_intermediate=False)
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=float(trapezoid_area(fpr, tpr)))


def mann_whitney_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """P(score of a positive > score of a negative), ties counted one half."""
    s, y = _check_binary(scores, labels)
    ranks = rankdata(s)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# ============================================================================
# Cross-validation
# ============================================================================

@dataclass(frozen=True, eq=False)
class EvalReport:
    """
    Cross-validation outcome for one window configuration.

    Attributes:
        config: Window length and stride
        n_segments: Real segments evaluated
        n_positive: Positive real segments
        fold_metrics: Metrics per fold
        accuracy, precision, recall, f1: Means over folds
        roc: Curve from the pooled out-of-fold scores
        scores: Out-of-fold score per segment, in segment order
        labels: Segment labels, in segment order
        split_mode: "segment" or "trial"
        n_synthetic: Synthetic segments added per fold
    """
    config: WindowConfig
    n_segments: int
    n_positive: int
    fold_metrics: List[Metrics]
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc: RocCurve
    scores: np.ndarray
    labels: np.ndarray
    split_mode: str = "segment"
    n_synthetic: Tuple[int, ...] = ()
    rate_hz: float = FEATURE_RATE_HZ

    @property
    def auc(self) -> float:
        return self.roc.auc

    @property
    def lookahead_s(self) -> float:
        return self.config.lookahead_s(self.rate_hz)

    def to_row(self) -> Dict[str, Any]:
        return {
            "window_length": self.config.length_frames,
            "stride": self.config.stride_frames,
            "n_segments": self.n_segments,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "lookahead_s": self.lookahead_s,
        }


def _run_fold(segments: List[LabeledSegment], folds: FoldAssignment, fold: int, k: int,
              adasyn_k: int, beta: float, seed: int, band: Optional[int]
              ) -> Tuple[int, np.ndarray, np.ndarray, Metrics, int]:
    test_idx = folds.test_indices(fold)
    train = [segments[i] for i in folds.train_indices(fold)]
    test = [segments[i] for i in test_idx]

    for name, part in (("test", test), ("training", train)):
        if len({s.label for s in part}) < 2:
            raise InsufficientDataError(
                f"fold {fold} {name} split lacks a class; try a different seed, fewer folds, or more data")

    augmented = adasyn(train, k_neighbors=adasyn_k, beta=beta, seed=substream_seed(seed, "adasyn", fold))
    if any(s.synthetic for s in test):
        raise DataError(f"synthetic segment in test fold {fold}")

    model = fit_knn([s.values for s in augmented], [s.label for s in augmented], k=k, band=band)
    scores = knn_scores(model, [s.values for s in test])
    predicted = (scores > 0.5).astype(int)
    metrics = confusion_metrics(predicted, [s.label for s in test])
    return fold, test_idx, scores, metrics, len(augmented) - len(train)


def run_cv(
    segments: Sequence[LabeledSegment],
    cfg: WindowConfig,
    k: int = DEFAULT_K,
    n_folds: int = DEFAULT_FOLDS,
    seed: int = 0,
    adasyn_k: int = 5,
    beta: float = 1.0,
    split_mode: str = "segment",
    band: Optional[int] = None,
    n_jobs: int = 1,
    rate_hz: float = FEATURE_RATE_HZ
) -> EvalReport:
    """
    Stratified k-fold cross-validation of DTW-KNN with train-only ADASYN.

    Args:
        segments: Real segments from one window configuration (no synthetic ones)
        cfg: The window configuration, echoed in the report
        k: Neighbours consulted by KNN
        n_folds: Number of folds
        seed: Run seed (split and adasyn substreams)
        adasyn_k: ADASYN neighbourhood size
        beta: ADASYN balance level
        split_mode: "segment" or "trial" (whole trials kept together)
        band: Optional Sakoe-Chiba half-width for DTW
        n_jobs: Worker cap; folds run in parallel

    Returns:
        EvalReport

    Raises:
        InsufficientDataError: A fold missing a class
        DataError: Synthetic input segments, or a leak/coverage violation
    """
    if split_mode not in SPLIT_MODES:
        raise ConfigError(f"split mode must be one of {SPLIT_MODES}, got {split_mode!r}")
    segments = list(segments)
    if any(s.synthetic for s in segments):
        raise DataError("run_cv expects real segments only; oversampling happens inside each fold")
    labels = np.array([s.label for s in segments], dtype=int)
    groups = [s.source_trial_id for s in segments] if split_mode == "trial" else None
    folds = stratified_kfold(labels, n_folds, seed, groups)

    results = Parallel(n_jobs=n_jobs)(
        delayed(_run_fold)(segments, folds, fold, k, adasyn_k, beta, seed, band)
        for fold in range(n_folds)
    )

    scores = np.full(len(segments), np.nan)
    covered = np.zeros(len(segments), dtype=int)
    fold_metrics: List[Optional[Metrics]] = [None] * n_folds
    synthetic_counts = [0] * n_folds
    for fold, test_idx, fold_scores, metrics, n_synthetic in results:
        scores[test_idx] = fold_scores
        covered[test_idx] += 1
        fold_metrics[fold] = metrics
        synthetic_counts[fold] = n_synthetic
    if np.any(covered != 1):
        raise DataError("out-of-fold scores do not cover every segment exactly once")

    roc = roc_auc(scores, labels)
    report = EvalReport(
        config=cfg,
        n_segments=len(segments),
        n_positive=int(labels.sum()),
        fold_metrics=fold_metrics,
        accuracy=float(np.mean([m.accuracy for m in fold_metrics])),
        precision=float(np.mean([m.precision for m in fold_metrics])),
        recall=float(np.mean([m.recall for m in fold_metrics])),
        f1=float(np.mean([m.f1 for m in fold_metrics])),
        roc=roc,
        scores=scores,
        labels=labels,
        split_mode=folds.mode,
        n_synthetic=tuple(synthetic_counts),
        rate_hz=rate_hz,
    )
    logger.info(f"CV {cfg.label} ({folds.mode} split): {len(segments)} segments, "
                f"accuracy {report.accuracy:.3f}, f1 {report.f1:.3f}, AUC {report.auc:.3f}")
    return report


# ============================================================================
# Label-shuffle control
# ============================================================================

@dataclass(frozen=True)
class ShuffleResult:
    """
    AUC on true labels and on labels permuted across the whole dataset.

    shuffled_auc is the mean over the permutations and shuffled_auc_sd their
    sample standard deviation (0 for a single permutation). shuffled holds the
    report of the first permutation.
    """
    original_auc: float
    shuffled_aucs: Tuple[float, ...]
    seed: int
    original: Optional[EvalReport] = field(default=None, compare=False)
    shuffled: Optional[EvalReport] = field(default=None, compare=False)

    @property
    def n_permutations(self) -> int:
        return len(self.shuffled_aucs)

    @property
    def shuffled_auc(self) -> float:
        return float(np.mean(self.shuffled_aucs))

    @property
    def shuffled_auc_sd(self) -> float:
        return float(np.std(self.shuffled_aucs, ddof=1)) if len(self.shuffled_aucs) > 1 else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "original_auc": self.original_auc,
            "shuffled_auc": self.shuffled_auc,
            "shuffled_auc_sd": self.shuffled_auc_sd,
            "n_permutations": self.n_permutations,
            "seed": self.seed,
        }


def label_shuffle_test(segments: Sequence[LabeledSegment], cfg: WindowConfig, seed: int = 0,
                       n_permutations: int = DEFAULT_PERMUTATIONS, **cv_options: Any) -> ShuffleResult:
    """
    Run cross-validation on true labels, then on seeded permutations of them.

    The shuffled AUC is the mean over n_permutations independent
    permutations. Folds are re-drawn from the same seed each time.

    Args:
        segments: Real segments
        cfg: Window configuration
        seed: Run seed; permutation i draws from the ("shuffle", i) substream
        n_permutations: Number of label permutations
        **cv_options: Passed to run_cv

    Returns:
        ShuffleResult

    Raises:
        ConfigError: n_permutations below 1
    """
    if n_permutations < 1:
        raise ConfigError(f"n_permutations must be >= 1, got {n_permutations}")
    segments = list(segments)
    labels = [s.label for s in segments]
    original = run_cv(segments, cfg, seed=seed, **cv_options)

    reports = []
    for i in range(n_permutations):
        permuted = substream(seed, "shuffle", i).permutation(labels)
        relabeled = [dataclasses.replace(s, label=int(label)) for s, label in zip(segments, permuted)]
        reports.append(run_cv(relabeled, cfg, seed=seed, **cv_options))

    result = ShuffleResult(original.auc, tuple(r.auc for r in reports), seed, original, reports[0])
    logger.info(f"Label shuffle {cfg.label}: AUC {original.auc:.3f} -> {result.shuffled_auc:.3f} "
                f"(sd {result.shuffled_auc_sd:.3f} over {n_permutations} permutations)")
    return result


def shuffle_rows(result: ShuffleResult) -> List[Dict[str, Any]]:
    return [{"permutation": i, "shuffled_auc": auc} for i, auc in enumerate(result.shuffled_aucs)]


# ============================================================================
# Sweep
# ============================================================================

@dataclass(frozen=True)
class SweepResult:
    """Reports sorted by AUC (descending) plus the configurations that failed."""
    reports: List[EvalReport]
    failures: List[Tuple[WindowConfig, str]] = field(default_factory=list)


def sweep(
    trials: Sequence[BandPowerTrial],
    configs: Sequence[WindowConfig],
    features: Sequence[ChannelBandKey] = (DEFAULT_FEATURE,),
    seed: int = 0,
    **cv_options: Any
) -> SweepResult:
    """
    Segment and cross-validate every window configuration.

    A configuration that fails (e.g. a window longer than the shortest trial)
    is recorded in failures and the sweep continues.

    Args:
        trials: Trials to segment
        configs: Window configurations, evaluated in order
        features: Feature(s) windowed
        seed: Run seed, shared by every configuration
        **cv_options: Passed to run_cv

    Returns:
        SweepResult
    """
    reports: List[EvalReport] = []
    failures: List[Tuple[WindowConfig, str]] = []
    for cfg in configs:
        try:
            segments = segment_trials(trials, cfg, features)
            reports.append(run_cv(segments, cfg, seed=seed, **cv_options))
        except CrossingIntentError as e:
            logger.warning(f"Config {cfg.label} failed: {e}")
            failures.append((cfg, str(e)))
    order = sorted(range(len(reports)), key=lambda i: -reports[i].auc)
    logger.info(f"Sweep: {len(reports)} configs evaluated, {len(failures)} failed")
    return SweepResult([reports[i] for i in order], failures)


def sweep_rows(reports: Sequence[EvalReport]) -> List[Dict[str, Any]]:
    return [r.to_row() for r in reports]


def failure_rows(failures: Sequence[Tuple[WindowConfig, str]]) -> List[Dict[str, Any]]:
    return [{"window_length": c.length_frames, "stride": c.stride_frames, "reason": reason}
            for c, reason in failures]


def roc_rows(roc: RocCurve) -> List[Dict[str, Any]]:
    return [{"fpr": f, "tpr": t} for f, t in roc.points()]


def fold_rows(report: EvalReport) -> List[Dict[str, Any]]:
    """Per-fold metrics with the window configuration and synthetic count."""
    rows = []
    for fold, metrics in enumerate(report.fold_metrics):
        row = {"window_length": report.config.length_frames, "stride": report.config.stride_frames,
               "fold": fold, "n_synthetic": report.n_synthetic[fold]}
        row.update(metrics.to_dict())
        rows.append(row)
    return rows
