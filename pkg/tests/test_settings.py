import json
from pathlib import Path

import pytest

from crossing_intent.core.errors import ConfigError
from crossing_intent.core.schema import DEFAULT_FEATURE
from crossing_intent.prediction.windowing import REFERENCE_CONFIGS, WindowConfig
from crossing_intent.utils.settings import (
    DEFAULT_SETTINGS,
    build_run_config,
    load_settings,
    merge_settings,
    parse_overrides,
    settings_document
)

REPO_ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(autouse=True)
def isolated_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _write(path, document):
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def test_defaults_without_a_settings_file():
    assert load_settings() == DEFAULT_SETTINGS


def test_settings_file_in_working_directory_is_picked_up(isolated_cwd):
    _write(isolated_cwd / "crossing_settings.json", {"seed": 9})
    assert load_settings()["seed"] == 9


def test_shipped_settings_file_is_valid():
    config = build_run_config(load_settings(REPO_ROOT / "crossing_settings.json"))
    assert config.hmm.n_states == 4
    assert config.windowing.configs[:4] == REFERENCE_CONFIGS
    assert len(config.windowing.configs) == 18


def test_named_settings_file_must_exist():
    with pytest.raises(ConfigError, match="not found"):
        load_settings("absent.json")


@pytest.mark.parametrize("content", ("{not json", "[1, 2]"))
def test_malformed_settings_file(isolated_cwd, content):
    path = isolated_cwd / "bad.json"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_settings(path)


def test_unknown_key_is_named(isolated_cwd):
    path = _write(isolated_cwd / "s.json", {"hmm.n_state": 4})
    with pytest.raises(ConfigError, match="hmm.n_state"):
        load_settings(path)


def test_values_are_coerced_to_default_types():
    merged = merge_settings(DEFAULT_SETTINGS, {
        "stats.per_scenario": "yes",
        "classifier.band": "none",
        "hmm.max_iter": "50",
        "hmm.tol": "1e-4",
        "windowing.beta": 1,
    }, "test")
    assert merged["stats.per_scenario"] is True
    assert merged["classifier.band"] is None
    assert merged["hmm.max_iter"] == 50
    assert merged["hmm.tol"] == pytest.approx(1e-4)
    assert isinstance(merged["windowing.beta"], float)
    assert merge_settings(DEFAULT_SETTINGS, {"classifier.band": "2"}, "test")["classifier.band"] == 2


@pytest.mark.parametrize("key, value", (("hmm.max_iter", 2.5), ("stats.per_scenario", "maybe"),
                                        ("seed", "seven"), ("classifier.band", "wide")))
def test_uncoercible_values(key, value):
    with pytest.raises(ConfigError, match=key):
        merge_settings(DEFAULT_SETTINGS, {key: value}, "test")


def test_overrides():
    assert parse_overrides(["hmm.scope = pooled", "seed=3"]) == {"hmm.scope": "pooled", "seed": "3"}
    with pytest.raises(ConfigError):
        parse_overrides(["seed"])
    with pytest.raises(ConfigError):
        parse_overrides(["=3"])


def test_default_run_config():
    config = build_run_config(DEFAULT_SETTINGS)
    assert config.pca.n_components == 5
    assert config.hmm.n_states == 4
    assert config.windowing.features == (DEFAULT_FEATURE,)
    assert config.windowing.configs[:4] == REFERENCE_CONFIGS
    assert len(config.windowing.configs) == 18
    assert config.windowing.window == WindowConfig(9, 3)
    assert config.eval.n_permutations == 10
    assert config.cv_options() == {"k": 5, "n_folds": 5, "adasyn_k": 5, "beta": 1.0,
                                   "split_mode": "segment", "band": None, "n_jobs": 1}


def test_several_features_and_config_sets():
    config = build_run_config({"windowing.features": "F4.high_beta, F7.theta", "windowing.configs": "all"})
    assert len(config.windowing.features) == 2
    assert len(config.windowing.configs) == 18


def test_reference_configs_can_be_selected():
    config = build_run_config({"windowing.configs": "reference"})
    assert config.windowing.configs == REFERENCE_CONFIGS


@pytest.mark.parametrize(
    "overrides",
    (
        {"hmm.n_states": 0},
        {"hmm.scope": "pooled"},
        {"pca.scope": "global"},
        {"eval.n_folds": 1},
        {"eval.split_mode": "subject"},
        {"eval.n_permutations": 0},
        {"windowing.features": "F4.delta"},
        {"windowing.features": " , "},
        {"windowing.configs": "bogus"},
        {"windowing.length": 1},
        {"classifier.k": 0},
        {"classifier.band": -1},
        {"stats.alpha": 1.5},
        {"jobs": 0},
        {"seed": -1},
    ),
)
def test_invalid_run_config(overrides):
    with pytest.raises(ConfigError):
        build_run_config(overrides)


def test_pooled_hmm_with_pooled_pca_is_accepted():
    config = build_run_config({"hmm.scope": "pooled", "pca.scope": "pooled"})
    assert config.hmm.scope == "pooled"


def test_settings_document_is_key_sorted():
    document = settings_document(DEFAULT_SETTINGS)
    assert list(document) == sorted(DEFAULT_SETTINGS)
