"""
Run settings: flat dotted-key JSON, defaults in code, command-line overrides.

A settings file is a JSON object such as

    {"seed": 7, "hmm.n_states": 4, "windowing.configs": "reference"}

Any subset of DEFAULT_SETTINGS may be given; unknown keys are rejected.
Values are coerced to the type of their default. The resolved settings are
parsed into a RunConfig of frozen dataclasses.

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

from crossing_intent.analysis.stages import SCOPES
from crossing_intent.core.errors import ConfigError
from crossing_intent.core.schema import ChannelBandKey
from crossing_intent.prediction.evaluation import SPLIT_MODES
from crossing_intent.prediction.windowing import WindowConfig, parse_features, resolve_config_set

logger = logging.getLogger(__name__)

SETTINGS_FILE = "crossing_settings.json"

DEFAULT_SETTINGS: Dict[str, Any] = {
    "seed": 0,
    "jobs": 1,
    "paths.manifest": "data/manifest.jsonl",
    "paths.output_dir": "out",
    "paths.model": "",
    "synth.n_subjects": 12,
    "synth.trials_per_subject": 5,
    "synth.mean_duration_s": 4.0,
    "synth.duration_jitter_s": 1.5,
    "synth.noise_sigma": 0.5,
    "synth.forced_execution_frames": 4,
    "synth.ramp_amplitude": 24.0,
    "synth.ramp_frames": 6,
    "pca.n_components": 5,
    "pca.scope": "per-trial",
    "hmm.n_states": 4,
    "hmm.tol": 1e-6,
    "hmm.max_iter": 200,
    "hmm.scope": "per-trial",
    "hmm.covariance_type": "diag",
    "stats.per_scenario": False,
    "stats.alpha": 0.05,
    "stats.rt_mass": 0.95,
    "windowing.features": "F4.high_beta",
    "windowing.configs": "all",
    "windowing.grid_stride": 3,
    "windowing.length": 9,
    "windowing.stride": 3,
    "windowing.adasyn_k": 5,
    "windowing.beta": 1.0,
    "classifier.k": 5,
    "classifier.band": None,
    "eval.n_folds": 5,
    "eval.split_mode": "segment",
    "eval.n_permutations": 10,
}

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _coerce(key: str, value: Any) -> Any:
    default = DEFAULT_SETTINGS[key]
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        if default is None:
            if value is None or str(value).strip().lower() in {"", "none", "null", "off"}:
                return None
            return int(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"setting {key!r} expects a {type(default).__name__ if default is not None else 'integer or none'}, "
                          f"got {value!r}") from None


def merge_settings(base: Dict[str, Any], updates: Dict[str, Any], source: str) -> Dict[str, Any]:
    """Return base updated with coerced values; unknown keys raise ConfigError."""
    unknown = sorted(set(updates) - set(DEFAULT_SETTINGS))
    if unknown:
        raise ConfigError(f"unknown setting(s) in {source}: {', '.join(unknown)}")
    merged = dict(base)
    for key, value in updates.items():
        merged[key] = _coerce(key, value)
    return merged


def load_settings(settings_file: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """
    Defaults updated from a settings file.

    With no file given, SETTINGS_FILE in the working directory is used when it
    exists. An explicitly named file must exist.

    Raises:
        ConfigError: Missing explicit file, invalid JSON, unknown key or bad value
    """
    settings = dict(DEFAULT_SETTINGS)
    if settings_file is None:
        path = Path(SETTINGS_FILE)
        if not path.exists():
            return settings
    else:
        path = Path(settings_file)
        if not path.exists():
            raise ConfigError(f"settings file not found: {path}")

    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"settings file {path} is not valid JSON: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"settings file {path} must hold a JSON object")
    logger.debug(f"Loaded settings from {path}")
    return merge_settings(settings, document, str(path))


def parse_overrides(pairs: Sequence[str]) -> Dict[str, str]:
    """Parse --set key=value arguments."""
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        overrides[key.strip()] = value.strip()
    return overrides


# ============================================================================
# Typed configuration
# ============================================================================

@dataclass(frozen=True)
class PathSettings:
    manifest: str
    output_dir: str
    model: str


@dataclass(frozen=True)
class SynthSettings:
    n_subjects: int
    trials_per_subject: int
    mean_duration_s: float
    duration_jitter_s: float
    noise_sigma: float
    forced_execution_frames: int
    ramp_amplitude: float
    ramp_frames: int


@dataclass(frozen=True)
class PcaSettings:
    n_components: int = 5
    scope: str = "per-trial"


@dataclass(frozen=True)
class HmmSettings:
    n_states: int = 4
    tol: float = 1e-6
    max_iter: int = 200
    scope: str = "per-trial"
    covariance_type: str = "diag"


@dataclass(frozen=True)
class StatsSettings:
    per_scenario: bool = False
    alpha: float = 0.05
    rt_mass: float = 0.95


@dataclass(frozen=True)
class WindowingSettings:
    features: Tuple[ChannelBandKey, ...]
    configs: Tuple[WindowConfig, ...]
    window: WindowConfig
    adasyn_k: int = 5
    beta: float = 1.0


@dataclass(frozen=True)
class ClassifierSettings:
    k: int = 5
    band: Optional[int] = None


@dataclass(frozen=True)
class EvalSettings:
    n_folds: int = 5
    split_mode: str = "segment"
    n_permutations: int = 10


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; defaults are 5 PCs, 4 states, k = 5, 5 folds."""
    seed: int
    jobs: int
    paths: PathSettings
    synth: SynthSettings
    pca: PcaSettings
    hmm: HmmSettings
    stats: StatsSettings
    windowing: WindowingSettings
    classifier: ClassifierSettings
    eval: EvalSettings

    def cv_options(self) -> Dict[str, Any]:
        """Keyword arguments shared by run_cv, label_shuffle_test and sweep."""
        return {
            "k": self.classifier.k,
            "n_folds": self.eval.n_folds,
            "adasyn_k": self.windowing.adasyn_k,
            "beta": self.windowing.beta,
            "split_mode": self.eval.split_mode,
            "band": self.classifier.band,
            "n_jobs": self.jobs,
        }


def _section(settings: Dict[str, Any], prefix: str) -> Dict[str, Any]:
    return {k[len(prefix) + 1:]: v for k, v in settings.items() if k.startswith(prefix + ".")}


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def build_run_config(settings: Dict[str, Any]) -> RunConfig:
    """
    Validate resolved settings and build the typed RunConfig.

    Raises:
        ConfigError: On any out-of-range or inconsistent value
    """
    settings = merge_settings(dict(DEFAULT_SETTINGS), settings, "settings")

    _require(settings["seed"] >= 0, "seed must be a non-negative integer")
    _require(settings["jobs"] != 0, "jobs must be non-zero (-1 for all cores)")

    synth = SynthSettings(**_section(settings, "synth"))

    pca = PcaSettings(**_section(settings, "pca"))
    _require(pca.n_components >= 1, "pca.n_components must be >= 1")
    _require(pca.scope in SCOPES, f"pca.scope must be one of {SCOPES}")

    hmm = HmmSettings(**_section(settings, "hmm"))
    _require(hmm.n_states >= 1, "hmm.n_states must be >= 1")
    _require(hmm.tol > 0 and hmm.max_iter >= 1, "hmm.tol must be > 0 and hmm.max_iter >= 1")
    _require(hmm.scope in SCOPES, f"hmm.scope must be one of {SCOPES}")
    _require(hmm.covariance_type in ("diag", "full"), "hmm.covariance_type must be diag or full")
    _require(not (hmm.scope == "pooled" and pca.scope != "pooled"),
             "hmm.scope = pooled requires pca.scope = pooled")

    stats = StatsSettings(**_section(settings, "stats"))
    _require(0 < stats.alpha < 1, "stats.alpha must be in (0, 1)")
    _require(0 < stats.rt_mass <= 1, "stats.rt_mass must be in (0, 1]")

    raw_windowing = _section(settings, "windowing")
    feature_names = [n for n in raw_windowing["features"].split(",") if n.strip()]
    _require(bool(feature_names), "windowing.features must name at least one feature")
    _require(raw_windowing["grid_stride"] >= 1, "windowing.grid_stride must be >= 1")
    windowing = WindowingSettings(
        features=tuple(parse_features([n.strip() for n in feature_names])),
        configs=tuple(resolve_config_set(raw_windowing["configs"], raw_windowing["grid_stride"])),
        window=WindowConfig(raw_windowing["length"], raw_windowing["stride"]),
        adasyn_k=raw_windowing["adasyn_k"],
        beta=raw_windowing["beta"],
    )
    _require(windowing.adasyn_k >= 1, "windowing.adasyn_k must be >= 1")
    _require(windowing.beta >= 0, "windowing.beta must be >= 0")

    classifier = ClassifierSettings(**_section(settings, "classifier"))
    _require(classifier.k >= 1, "classifier.k must be >= 1")
    _require(classifier.band is None or classifier.band >= 0, "classifier.band must be >= 0 or none")

    evaluation = EvalSettings(**_section(settings, "eval"))
    _require(evaluation.n_folds >= 2, "eval.n_folds must be >= 2")
    _require(evaluation.split_mode in SPLIT_MODES, f"eval.split_mode must be one of {SPLIT_MODES}")
    _require(evaluation.n_permutations >= 1, "eval.n_permutations must be >= 1")

    return RunConfig(
        seed=settings["seed"],
        jobs=settings["jobs"],
        paths=PathSettings(**_section(settings, "paths")),
        synth=synth,
        pca=pca,
        hmm=hmm,
        stats=stats,
        windowing=windowing,
        classifier=classifier,
        eval=evaluation,
    )


def settings_document(settings: Dict[str, Any]) -> Dict[str, Any]:
    """Settings in key order, as recorded in run manifests."""
    return {k: settings[k] for k in sorted(settings)}
