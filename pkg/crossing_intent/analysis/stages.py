"""
Latent-stage inference: standardize -> PCA -> Gaussian HMM -> Viterbi path.

Fit scope is explicit. PCA and HMM are each fitted either per trial (one model
for every trial sequence) or pooled over all trials. A pooled HMM needs one
shared score space, so it requires pooled PCA. Fitted HMMs are stored with
their states already permuted into stage order (mean first-occurrence frame),
so decoding a trial yields stage labels 0..3 directly.

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from crossing_intent.analysis.hmm import (
    FitReport,
    HmmModel,
    hmm_decode,
    hmm_fit,
    order_states_by_onset,
    stage_runs
)
from crossing_intent.analysis.preprocess import (
    PcaModel,
    Standardizer,
    pca_fit,
    pca_transform,
    standardize_apply,
    standardize_fit
)
from crossing_intent.core.errors import ConfigError, DataError
from crossing_intent.core.schema import BandPowerTrial, Stage
from crossing_intent.utils.seeding import substream_seed

logger = logging.getLogger(__name__)

POOLED = "pooled"
SCOPES = ("per-trial", POOLED)


@dataclass(frozen=True)
class Projection:
    """Standardizer and PCA fitted together on one frame set."""
    standardizer: Standardizer
    pca: PcaModel

    def scores(self, frames: np.ndarray) -> np.ndarray:
        return pca_transform(self.pca, standardize_apply(self.standardizer, frames))

    def to_dict(self) -> Dict[str, Any]:
        return {"standardizer": self.standardizer.to_dict(), "pca": self.pca.to_dict()}

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "Projection":
        return cls(Standardizer.from_dict(document["standardizer"]), PcaModel.from_dict(document["pca"]))


@dataclass(frozen=True)
class StageFit:
    """HMM in stage order plus the raw-state order it was permuted with."""
    model: HmmModel
    order: Tuple[int, ...]
    report: Optional[FitReport] = None

    def to_dict(self) -> Dict[str, Any]:
        document = {"hmm": self.model.to_dict(), "order": list(self.order)}
        if self.report is not None:
            document["fit_report"] = self.report.to_dict()
        return document

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "StageFit":
        return cls(HmmModel.from_dict(document["hmm"]), tuple(int(k) for k in document["order"]))


@dataclass(frozen=True)
class StageBundle:
    """
    Everything needed to decode trials into stages.

    Attributes:
        pca_scope: "per-trial" or "pooled"
        hmm_scope: "per-trial" or "pooled"
        projections: Keyed by trial id, or "pooled"
        fits: Keyed by trial id, or "pooled"
    """
    pca_scope: str
    hmm_scope: str
    projections: Dict[str, Projection] = field(default_factory=dict)
    fits: Dict[str, StageFit] = field(default_factory=dict)

    def _lookup(self, table: Dict[str, Any], scope: str, trial_id: str, what: str) -> Any:
        key = POOLED if scope == POOLED else trial_id
        if key not in table:
            raise DataError(f"no {what} for trial {trial_id!r}; per-trial bundles only decode the trials "
                            f"they were fitted on (refit, or use the pooled scope)")
        return table[key]

    def projection_for(self, trial_id: str) -> Projection:
        return self._lookup(self.projections, self.pca_scope, trial_id, "PCA model")

    def fit_for(self, trial_id: str) -> StageFit:
        return self._lookup(self.fits, self.hmm_scope, trial_id, "HMM")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pca_scope": self.pca_scope,
            "hmm_scope": self.hmm_scope,
            "projections": {k: v.to_dict() for k, v in self.projections.items()},
            "fits": {k: v.to_dict() for k, v in self.fits.items()},
        }

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "StageBundle":
        try:
            return cls(
                pca_scope=document["pca_scope"],
                hmm_scope=document["hmm_scope"],
                projections={k: Projection.from_dict(v) for k, v in document["projections"].items()},
                fits={k: StageFit.from_dict(v) for k, v in document["fits"].items()},
            )
        except KeyError as e:
            raise DataError(f"malformed stage model bundle, missing {e}") from e


@dataclass(frozen=True)
class StageInference:
    """Result of infer_stages: the bundle plus per-trial scores and stage paths."""
    bundle: StageBundle
    scores: Dict[str, np.ndarray]
    paths: Dict[str, np.ndarray]


def _check_scopes(pca_scope: str, hmm_scope: str) -> None:
    for name, scope in (("pca.scope", pca_scope), ("hmm.scope", hmm_scope)):
        if scope not in SCOPES:
            raise ConfigError(f"{name} must be one of {SCOPES}, got {scope!r}")
    if hmm_scope == POOLED and pca_scope != POOLED:
        raise ConfigError("a pooled HMM needs pooled PCA (per-trial components do not share a score space)")


def fit_projection(frames: np.ndarray, n_components: int = 5) -> Projection:
    standardizer = standardize_fit(frames)
    return Projection(standardizer, pca_fit(standardize_apply(standardizer, frames), n_components))


def _fit_stage_model(sequences: List[np.ndarray], n_states: int, seed: int,
                     hmm_options: Dict[str, Any]) -> Tuple[StageFit, List[np.ndarray]]:
    raw, report = hmm_fit(sequences, n_states=n_states, seed=seed, **hmm_options)
    raw_paths = [hmm_decode(raw, s) for s in sequences]
    order = order_states_by_onset(raw_paths, n_states)
    model = raw.permuted(order)
    return StageFit(model, order, report), [hmm_decode(model, s) for s in sequences]


def _fit_trial(trial: BandPowerTrial, projection: Optional[Projection], n_components: int,
               n_states: int, seed: int, hmm_options: Dict[str, Any]
               ) -> Tuple[str, Optional[Projection], np.ndarray, StageFit, np.ndarray]:
    own = None
    if projection is None:
        own = projection = fit_projection(trial.frames, n_components)
    scores = projection.scores(trial.frames)
    stage_fit, (path,) = _fit_stage_model([scores], n_states,
                                          substream_seed(seed, "hmm", trial.trial_id), hmm_options)
    return trial.trial_id, own, scores, stage_fit, path


def infer_stages(
    trials: Sequence[BandPowerTrial],
    n_components: int = 5,
    n_states: int = 4,
    pca_scope: str = "per-trial",
    hmm_scope: str = "per-trial",
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 200,
    covariance_type: str = "diag",
    n_jobs: int = 1
) -> StageInference:
    """
    Fit stage models and decode every trial into a stage path.

    Args:
        trials: Trials to fit and decode
        n_components: Principal components kept (5)
        n_states: HMM states (4 latent stages)
        pca_scope: "per-trial" or "pooled"
        hmm_scope: "per-trial" or "pooled"; pooled requires pooled PCA
        seed: Run seed; HMM initializations draw from the "hmm" substream
        tol: EM convergence threshold
        max_iter: EM iteration cap
        covariance_type: "diag" or "full"
        n_jobs: Worker cap for per-trial fits

    Returns:
        StageInference with the bundle, PCA scores and stage paths per trial id

    Raises:
        ConfigError: Invalid scope combination
        InsufficientDataError: A trial too short for PCA or the HMM
    """
    _check_scopes(pca_scope, hmm_scope)
    if not trials:
        raise DataError("infer_stages needs at least one trial")
    ids = [t.trial_id for t in trials]
    if len(set(ids)) != len(ids):
        raise DataError("trial ids must be unique")
    hmm_options = {"tol": tol, "max_iter": max_iter, "covariance_type": covariance_type}

    projections: Dict[str, Projection] = {}
    fits: Dict[str, StageFit] = {}
    scores: Dict[str, np.ndarray] = {}
    paths: Dict[str, np.ndarray] = {}

    shared = None
    if pca_scope == POOLED:
        shared = fit_projection(np.vstack([t.frames for t in trials]), n_components)
        projections[POOLED] = shared
        logger.info(f"Pooled PCA over {len(trials)} trials: "
                    f"cumulative ratio {shared.pca.cumulative_ratio:.4f}")

    if hmm_scope == POOLED:
        sequences = [shared.scores(t.frames) for t in trials]
        stage_fit, decoded = _fit_stage_model(sequences, n_states, substream_seed(seed, "hmm"), hmm_options)
        fits[POOLED] = stage_fit
        for trial, seq, path in zip(trials, sequences, decoded):
            scores[trial.trial_id] = seq
            paths[trial.trial_id] = path
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_fit_trial)(trial, shared, n_components, n_states, seed, hmm_options)
            for trial in trials
        )
        for trial_id, own, seq, stage_fit, path in results:
            if own is not None:
                projections[trial_id] = own
            fits[trial_id] = stage_fit
            scores[trial_id] = seq
            paths[trial_id] = path

    logger.info(f"Decoded stages for {len(trials)} trials (pca={pca_scope}, hmm={hmm_scope})")
    return StageInference(StageBundle(pca_scope, hmm_scope, projections, fits), scores, paths)


def _decode_trial(bundle: StageBundle, trial: BandPowerTrial) -> np.ndarray:
    projection = bundle.projection_for(trial.trial_id)
    return hmm_decode(bundle.fit_for(trial.trial_id).model, projection.scores(trial.frames))


def decode_stages(bundle: StageBundle, trials: Sequence[BandPowerTrial],
                  n_jobs: int = 1) -> Dict[str, np.ndarray]:
    """Decode trials with a previously fitted bundle; returns stage paths by trial id."""
    paths = Parallel(n_jobs=n_jobs)(delayed(_decode_trial)(bundle, t) for t in trials)
    return {t.trial_id: p for t, p in zip(trials, paths)}


# ============================================================================
# Tables
# ============================================================================

def explained_variance_rows(bundle: StageBundle) -> List[Dict[str, Any]]:
    """One row per (fit group, component): variance, ratio, cumulative ratio."""
    rows = []
    for group, projection in bundle.projections.items():
        cumulative = np.cumsum(projection.pca.explained_variance_ratio)
        for i, (var, ratio) in enumerate(zip(projection.pca.explained_variance,
                                             projection.pca.explained_variance_ratio)):
            rows.append({
                "group": group,
                "component": i + 1,
                "explained_variance": float(var),
                "explained_variance_ratio": float(ratio),
                "cumulative_ratio": float(cumulative[i]),
            })
    return rows


def stage_label(state: int) -> str:
    try:
        return Stage(state).name.lower()
    except ValueError:
        return f"state_{state}"


def stage_path_rows(trials: Sequence[BandPowerTrial], paths: Dict[str, np.ndarray]) -> List[Dict[str, Any]]:
    """Frame-level stage labels: trial_id, frame, t, stage, stage_name."""
    rows = []
    for trial in trials:
        path = paths[trial.trial_id]
        for frame, state in enumerate(path):
            rows.append({
                "trial_id": trial.trial_id,
                "frame": frame,
                "t": frame / trial.feature_rate_hz,
                "stage": int(state),
                "stage_name": stage_label(int(state)),
            })
    return rows


def stage_run_rows(trials: Sequence[BandPowerTrial], paths: Dict[str, np.ndarray]) -> List[Dict[str, Any]]:
    """Maximal stage runs per trial with start and end in frames and seconds."""
    rows = []
    for trial in trials:
        for run in stage_runs(paths[trial.trial_id]):
            rows.append({
                "trial_id": trial.trial_id,
                "stage": run.state,
                "stage_name": stage_label(run.state),
                "start_frame": run.start_frame,
                "end_frame": run.end_frame,
                "start_s": run.start_frame / trial.feature_rate_hz,
                "end_s": (run.end_frame + 1) / trial.feature_rate_hz,
            })
    return rows


def stage_occupancy_rows(trials: Sequence[BandPowerTrial], paths: Dict[str, np.ndarray],
                         n_states: int = 4) -> List[Dict[str, Any]]:
    """Frames and seconds each trial spends in each stage."""
    rows = []
    for trial in trials:
        counts = np.bincount(np.asarray(paths[trial.trial_id], dtype=int), minlength=n_states)
        for state, count in enumerate(counts):
            rows.append({
                "trial_id": trial.trial_id,
                "subject_id": trial.subject_id,
                "scenario": trial.scenario.value,
                "stage": state,
                "stage_name": stage_label(state),
                "frames": int(count),
                "seconds": count / trial.feature_rate_hz,
            })
    return rows
