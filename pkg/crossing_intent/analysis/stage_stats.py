"""
Statistics over stage-segmented band power and the response-time summary.

The battery runs per feature on a subjects x stages table of mean powers:
Shapiro-Wilk per stage column, Friedman across stages, and Conover's
pairwise comparisons with Cohen's d when Friedman is significant.

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from crossing_intent.analysis.preprocess import iqr_filter
from crossing_intent.analysis.stages import stage_label
from crossing_intent.core.errors import DataError, InsufficientDataError
from crossing_intent.core.schema import (
    N_FEATURES,
    N_STAGES,
    Band,
    BandPowerTrial,
    Channel,
    ChannelBandKey,
    Scenario,
    feature_key,
    feature_name
)

logger = logging.getLogger(__name__)

ALPHA = 0.05
SHAPIRO_MIN_N = 3
SHAPIRO_MAX_N = 5000

HIGHLIGHTED_FEATURES: Tuple[ChannelBandKey, ...] = (
    ChannelBandKey(Channel.F7, Band.THETA),
    ChannelBandKey(Channel.F4, Band.LOW_BETA),
    ChannelBandKey(Channel.F4, Band.HIGH_BETA),
    ChannelBandKey(Channel.F4, Band.GAMMA),
    ChannelBandKey(Channel.F8, Band.ALPHA),
)


# ============================================================================
# Tests
# ============================================================================

def shapiro_wilk(sample: Sequence[float]) -> Tuple[float, float]:
    """
    Shapiro-Wilk normality test (Royston's AS R94 approximation).

    Normality is rejected when p < 0.05.

    Args:
        sample: 3 to 5000 values, not all identical

    Returns:
        Tuple of (W, p)

    Raises:
        InsufficientDataError: Sample size out of range
        DataError: Zero-variance sample

    Example:
        >>> w, p = shapiro_wilk([148, 154, 158, 160, 161, 162, 166, 170, 182, 195, 236])
        >>> round(w, 2), p < 0.01
        (0.79, True)
    """
    x = np.asarray(sample, dtype=float).ravel()
    if not SHAPIRO_MIN_N <= x.size <= SHAPIRO_MAX_N:
        raise InsufficientDataError(f"shapiro_wilk needs {SHAPIRO_MIN_N}..{SHAPIRO_MAX_N} values, got {x.size}")
    if np.ptp(x) == 0:
        raise DataError("shapiro_wilk is undefined for a sample with zero variance")
    result = stats.shapiro(x)
    return float(result.statistic), float(min(max(result.pvalue, 0.0), 1.0))


@dataclass(frozen=True)
class FriedmanResult:
    """Friedman test over complete rows of a blocks x treatments table."""
    chi2: float
    df: int
    p_value: float
    n_blocks: int
    dropped_rows: Tuple[int, ...] = ()
    rank_sums: Tuple[float, ...] = ()


def _complete_rows(table: np.ndarray) -> Tuple[np.ndarray, Tuple[int, ...]]:
    x = np.asarray(table, dtype=float)
    if x.ndim != 2:
        raise DataError(f"expected a blocks x treatments table, got shape {x.shape}")
    if x.shape[1] < 2:
        raise InsufficientDataError(f"need at least 2 treatments, got {x.shape[1]}")
    complete = np.all(np.isfinite(x), axis=1)
    dropped = tuple(int(i) for i in np.flatnonzero(~complete))
    kept = x[complete]
    if len(kept) < 2:
        raise InsufficientDataError(f"need at least 2 complete rows, got {len(kept)} "
                                    f"({len(dropped)} dropped for absent cells)")
    return kept, dropped


def friedman(table: np.ndarray) -> FriedmanResult:
    """
    Friedman rank test across treatments (columns) within blocks (rows).

    Rows containing an absent (NaN) cell are dropped and reported. Ranks use
    midranks for ties, and the statistic carries the standard tie correction.
    A table with every row fully tied gives chi2 = 0 and p = 1.

    Args:
        table: n_blocks x k_treatments matrix, NaN for absent cells

    Returns:
        FriedmanResult

    Raises:
        InsufficientDataError: Fewer than 2 complete rows or 2 treatments

    Example:
        >>> r = friedman(np.array([[1, 2, 3]] * 4, dtype=float))
        >>> r.chi2, r.df, round(r.p_value, 4)
        (8.0, 2, 0.0183)
    """
    kept, dropped = _complete_rows(table)
    if dropped:
        logger.warning(f"Friedman: dropped {len(dropped)} row(s) with absent cells")
    n, k = kept.shape
    ranks = stats.rankdata(kept, axis=1)
    rank_sums = ranks.sum(axis=0)

    ties = 0.0
    for row in kept:
        _, counts = np.unique(row, return_counts=True)
        ties += float(np.sum(counts ** 3 - counts))
    correction = 1.0 - ties / (n * k * (k * k - 1))

    if correction <= 1e-12:
        chi2 = 0.0
    else:
        chi2 = (12.0 / (n * k * (k + 1)) * float(np.sum(rank_sums ** 2)) - 3.0 * n * (k + 1)) / correction
        chi2 = max(chi2, 0.0)
    p_value = float(stats.chi2.sf(chi2, k - 1)) if chi2 > 0 else 1.0
    return FriedmanResult(chi2=float(chi2), df=k - 1, p_value=p_value, n_blocks=n,
                          dropped_rows=dropped, rank_sums=tuple(float(r) for r in rank_sums))


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """
    Cohen's d with the pooled (N-1) standard deviation.

    Raises:
        InsufficientDataError: Either sample shorter than 2
        DataError: Zero pooled variance

    Example:
        >>> round(cohens_d([1, 2, 3], [2, 4, 6]), 4)
        -1.2649
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size < 2 or b.size < 2:
        raise InsufficientDataError("cohens_d needs at least 2 values per sample")
    if np.array_equal(a, b):
        return 0.0
    pooled = ((a.size - 1) * a.var(ddof=1) + (b.size - 1) * b.var(ddof=1)) / (a.size + b.size - 2)
    if pooled <= 0:
        raise DataError("cohens_d is undefined for zero pooled variance")
    return float((a.mean() - b.mean()) / math.sqrt(pooled))


@dataclass(frozen=True)
class PosthocResult:
    """One pairwise comparison; swapping the pair negates statistic and d."""
    stage_a: int
    stage_b: int
    test_statistic: float
    p_value: float
    effect_size_d: float
    df: int

    @property
    def comparison(self) -> str:
        return f"{stage_label(self.stage_a)} vs {stage_label(self.stage_b)}"

    def swapped(self) -> "PosthocResult":
        return PosthocResult(self.stage_b, self.stage_a, -self.test_statistic, self.p_value,
                             -self.effect_size_d, self.df)


def conover_posthoc(table: np.ndarray) -> List[PosthocResult]:
    """
    Conover's pairwise comparisons on Friedman ranks.

    t = (R_a - R_b) / sqrt(2 (n A1 - sum R_j^2) / ((n-1)(k-1))), with A1 the sum
    of squared within-row ranks, compared to a t distribution with (n-1)(k-1)
    degrees of freedom (two-sided, no multiplicity correction). When the pooled
    rank variance is zero (every block ranks identically) unequal rank sums
    give an infinite statistic with p = 0, and equal rank sums give 0 with p = 1.
    Effect sizes are Cohen's d on the raw cells of the pair (NaN when undefined).

    Args:
        table: n_blocks x k_treatments matrix, NaN for absent cells

    Returns:
        One PosthocResult per pair (a < b) in lexicographic order

    Raises:
        InsufficientDataError: As friedman
    """
    kept, _ = _complete_rows(table)
    n, k = kept.shape
    ranks = stats.rankdata(kept, axis=1)
    rank_sums = ranks.sum(axis=0)
    a1 = float(np.sum(ranks ** 2))
    df = (n - 1) * (k - 1)
    variance = 2.0 * (n * a1 - float(np.sum(rank_sums ** 2))) / df
    scale = math.sqrt(variance) if variance > 1e-12 else 0.0

    results = []
    for a, b in combinations(range(k), 2):
        diff = float(rank_sums[a] - rank_sums[b])
        if abs(diff) <= 1e-12:
            statistic, p_value = 0.0, 1.0
        elif scale == 0.0:
            statistic, p_value = math.copysign(math.inf, diff), 0.0
        else:
            statistic = diff / scale
            p_value = float(min(1.0, 2.0 * stats.t.sf(abs(statistic), df)))
        try:
            d = cohens_d(kept[:, a], kept[:, b])
        except DataError:
            d = math.nan
        results.append(PosthocResult(a, b, statistic, p_value, d, df))
    return results


# ============================================================================
# Stage feature tables
# ============================================================================

@dataclass(frozen=True, eq=False)
class StageFeatureTable:
    """
    Subjects x stages mean power of one feature; NaN marks a stage never visited.

    Attributes:
        feature: Channel/band the table describes
        subjects: Row labels
        values: len(subjects) x n_stages matrix
        scenario: Scenario the table is restricted to, None when pooled
    """
    feature: ChannelBandKey
    subjects: Tuple[str, ...]
    values: np.ndarray
    scenario: Optional[Scenario] = None

    @property
    def present(self) -> np.ndarray:
        return np.isfinite(self.values)


def _filtered_means(frames: np.ndarray) -> np.ndarray:
    """Per-column mean after iqr_filter drops that column's outliers."""
    if len(frames) < 4:
        return frames.mean(axis=0)
    return np.array([iqr_filter(column)[0].mean() for column in frames.T])


def stage_feature_tables(
    trials: Sequence[BandPowerTrial],
    stage_paths: Dict[str, np.ndarray],
    n_stages: int = N_STAGES,
    per_scenario: bool = False
) -> List[StageFeatureTable]:
    """
    Build the per-feature subjects x stages tables.

    A subject's frames in each stage are pooled over their trials (within a
    scenario when per_scenario is set), IQR-filtered per feature in one pass
    (skipped below 4 frames), and averaged.

    Args:
        trials: Trials with their frames
        stage_paths: Stage path per trial id, one label per frame
        n_stages: Number of stages (table columns)
        per_scenario: Build one table set per scenario instead of pooling scenarios

    Returns:
        70 tables (or 70 per scenario present), in feature order

    Raises:
        DataError: Missing path or path/frame length mismatch
    """
    groups: Dict[Tuple[Optional[Scenario], str], Dict[int, List[np.ndarray]]] = {}
    for trial in trials:
        if trial.trial_id not in stage_paths:
            raise DataError(f"no stage path for trial {trial.trial_id!r}")
        path = np.asarray(stage_paths[trial.trial_id], dtype=int)
        if path.shape != (trial.n_frames,):
            raise DataError(f"stage path of trial {trial.trial_id!r} has {path.size} labels "
                            f"for {trial.n_frames} frames")
        scenario = trial.scenario if per_scenario else None
        by_stage = groups.setdefault((scenario, trial.subject_id), {})
        for stage in range(n_stages):
            rows = trial.frames[path == stage]
            if len(rows):
                by_stage.setdefault(stage, []).append(rows)

    scenarios = sorted({s for s, _ in groups}, key=lambda s: -1 if s is None else list(Scenario).index(s))
    tables = []
    for scenario in scenarios:
        subjects = tuple(sorted(subject for s, subject in groups if s == scenario))
        cube = np.full((len(subjects), n_stages, N_FEATURES), np.nan)
        for i, subject in enumerate(subjects):
            for stage, chunks in groups[(scenario, subject)].items():
                cube[i, stage] = _filtered_means(np.vstack(chunks))
        for f in range(N_FEATURES):
            tables.append(StageFeatureTable(feature_key(f), subjects, cube[:, :, f], scenario))
    return tables


# ============================================================================
# Battery
# ============================================================================

@dataclass(frozen=True)
class FeatureStatistics:
    """Battery outcome for one feature table."""
    feature: ChannelBandKey
    scenario: Optional[Scenario]
    friedman: Optional[FriedmanResult]
    shapiro_p: Tuple[Optional[float], ...] = ()
    posthoc: List[PosthocResult] = field(default_factory=list)
    skipped_reason: str = ""

    @property
    def significant(self) -> bool:
        return self.friedman is not None and self.friedman.p_value < ALPHA


def feature_battery(table: StageFeatureTable, alpha: float = ALPHA) -> FeatureStatistics:
    """Shapiro-Wilk per stage, Friedman, and post-hoc only when Friedman p < alpha."""
    shapiro_p: List[Optional[float]] = []
    for column in table.values.T:
        column = column[np.isfinite(column)]
        try:
            shapiro_p.append(shapiro_wilk(column)[1])
        except DataError:
            shapiro_p.append(None)

    try:
        omnibus = friedman(table.values)
    except InsufficientDataError as e:
        return FeatureStatistics(table.feature, table.scenario, None, tuple(shapiro_p), [], str(e))

    posthoc = conover_posthoc(table.values) if omnibus.p_value < alpha else []
    return FeatureStatistics(table.feature, table.scenario, omnibus, tuple(shapiro_p), posthoc)


def run_stage_battery(tables: Sequence[StageFeatureTable], alpha: float = ALPHA,
                      n_jobs: int = 1) -> List[FeatureStatistics]:
    """
    Run the battery on every table.

    Example:
        >>> results = run_stage_battery(stage_feature_tables(trials, paths))
        >>> len(results)
        70
    """
    results = Parallel(n_jobs=n_jobs)(delayed(feature_battery)(t, alpha) for t in tables)
    significant = sum(r.significant for r in results)
    skipped = sum(r.friedman is None for r in results)
    logger.info(f"Stage battery: {len(results)} tables, {significant} significant at p < {alpha}, "
                f"{skipped} skipped")
    return list(results)


def omnibus_rows(results: Sequence[FeatureStatistics]) -> List[Dict[str, Any]]:
    rows = []
    for r in results:
        valid_shapiro = [p for p in r.shapiro_p if p is not None]
        rows.append({
            "scenario": r.scenario.value if r.scenario else "all",
            "feature": feature_name(r.feature),
            "chi2": r.friedman.chi2 if r.friedman else math.nan,
            "df": r.friedman.df if r.friedman else math.nan,
            "p_value": r.friedman.p_value if r.friedman else math.nan,
            "n_blocks": r.friedman.n_blocks if r.friedman else 0,
            "dropped_rows": len(r.friedman.dropped_rows) if r.friedman else 0,
            "min_shapiro_p": min(valid_shapiro) if valid_shapiro else math.nan,
            "skipped_reason": r.skipped_reason,
        })
    return rows


def comparison_rows(results: Sequence[FeatureStatistics],
                    features: Optional[Sequence[ChannelBandKey]] = None) -> List[Dict[str, Any]]:
    """
    Pairwise comparison rows: feature, comparison, test_statistic, p_value, effect_size.

    Restricted to the given features when provided (e.g. HIGHLIGHTED_FEATURES).
    """
    wanted = None if features is None else {feature_name(f) for f in features}
    rows = []
    for r in results:
        name = feature_name(r.feature)
        if wanted is not None and name not in wanted:
            continue
        for comparison in r.posthoc:
            rows.append({
                "scenario": r.scenario.value if r.scenario else "all",
                "feature": name,
                "comparison": comparison.comparison,
                "test_statistic": comparison.test_statistic,
                "p_value": comparison.p_value,
                "effect_size": comparison.effect_size_d,
            })
    return rows


def format_posthoc_matrix(posthoc: Sequence[PosthocResult], n_stages: int = N_STAGES) -> str:
    """
    Format pairwise Conover statistics as a markdown matrix (row stage minus column stage).

    Example:
        >>> print(format_posthoc_matrix(conover_posthoc(np.array([[1, 2, 3]] * 4, dtype=float)), 3))
        |       |  P 1  |  P 2  |  P 3  |
        |-------|--------|--------|--------|
        | P 1   |    -   |   -inf |   -inf |
        ...
    """
    matrix = np.full((n_stages, n_stages), np.nan)
    for r in posthoc:
        matrix[r.stage_a, r.stage_b] = r.test_statistic
        matrix[r.stage_b, r.stage_a] = -r.test_statistic

    header = "|       |"
    for i in range(n_stages):
        header += f"  P{i + 1:2d}  |"
    separator = "|-------|" + "--------|" * n_stages

    rows = [header, separator]
    for i in range(n_stages):
        row = f"| P{i + 1:2d}   |"
        for j in range(n_stages):
            row += "    -   |" if i == j or np.isnan(matrix[i, j]) else f" {matrix[i, j]:6.2f} |"
        rows.append(row)
    return "\n".join(rows)


# ============================================================================
# Response times
# ============================================================================

@dataclass(frozen=True)
class RtSummary:
    """Mean and highest-density interval of response times."""
    scenario: str
    n: int
    mean_s: float
    hdi_low_s: float
    hdi_high_s: float
    mass: float = 0.95

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "n": self.n,
            "mean": self.mean_s,
            "hdi_low": self.hdi_low_s,
            "hdi_high": self.hdi_high_s,
        }


def hdi_interval(values: Sequence[float], mass: float = 0.95) -> Tuple[float, float]:
    """
    Shortest interval of consecutive order statistics holding ceil(mass * n) points.

    Ties between equally short intervals go to the lowest start.

    Example:
        >>> hdi_interval([1, 1, 1, 1, 2, 2, 3, 50], mass=0.75)
        (1.0, 2.0)
    """
    x = np.sort(np.asarray(values, dtype=float).ravel())
    n = x.size
    if not 0 < mass <= 1:
        raise DataError(f"mass must be in (0, 1], got {mass}")
    m = min(n, max(1, math.ceil(mass * n - 1e-9)))
    widths = x[m - 1:] - x[:n - m + 1]
    start = int(np.argmin(widths))
    return float(x[start]), float(x[start + m - 1])


def rt_summary(times: Sequence[float], mass: float = 0.95, scenario: str = "all") -> RtSummary:
    """
    Mean response time with its highest-density interval.

    Raises:
        InsufficientDataError: Fewer than 3 times
    """
    x = np.asarray(times, dtype=float).ravel()
    if x.size < 3:
        raise InsufficientDataError(f"rt_summary needs at least 3 response times, got {x.size}")
    low, high = hdi_interval(x, mass)
    return RtSummary(scenario, int(x.size), float(x.mean()), low, high, mass)


def rt_summaries(trials: Sequence[BandPowerTrial], mass: float = 0.95) -> List[RtSummary]:
    """One summary per scenario in enum order (scenarios with < 3 trials skipped), then all trials."""
    summaries = []
    for scenario in Scenario:
        times = [t.response_time_s for t in trials if t.scenario == scenario]
        if len(times) < 3:
            if times:
                logger.warning(f"Skipping RT summary for {scenario.value}: only {len(times)} trial(s)")
            continue
        summaries.append(rt_summary(times, mass, scenario.value))
    summaries.append(rt_summary([t.response_time_s for t in trials], mass, "all"))
    return summaries
