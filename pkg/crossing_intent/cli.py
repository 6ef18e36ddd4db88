"""
Command-line front end.

    crossing-intent synth        generate a synthetic dataset with ground truth
    crossing-intent fit-hmm      fit stage models and decode every trial
    crossing-intent decode       decode trials with a saved stage model
    crossing-intent stage-stats  Friedman / Conover battery over stage means
    crossing-intent segment      dump labeled windows
    crossing-intent cv           cross-validate one window configuration
    crossing-intent sweep        cross-validate a set of window configurations
    crossing-intent shuffle-test AUC on true vs permuted labels
    crossing-intent rt-summary   response-time mean and HDI per scenario

Every run writes run_manifest.json (inputs, seed, settings, artifact hashes)
to the output directory. Failures print a JSON error record to stderr, write
error.json, and exit with 2 (configuration), 3 (data) or 4 (numerical).

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from crossing_intent.analysis.stage_stats import (
    HIGHLIGHTED_FEATURES,
    comparison_rows,
    format_posthoc_matrix,
    omnibus_rows,
    rt_summaries,
    run_stage_battery,
    stage_feature_tables
)
from crossing_intent.analysis.stages import (
    StageBundle,
    decode_stages,
    explained_variance_rows,
    infer_stages,
    stage_occupancy_rows,
    stage_path_rows,
    stage_run_rows
)
from crossing_intent.core.errors import CrossingIntentError, error_record
from crossing_intent.core.schema import BandPowerTrial, feature_name
from crossing_intent.ingest.loader import load_trials, read_manifest, write_trials
from crossing_intent.ingest.synth import study_config, synth_generate
from crossing_intent.prediction.evaluation import (
    EvalReport,
    failure_rows,
    fold_rows,
    label_shuffle_test,
    roc_rows,
    run_cv,
    shuffle_rows,
    sweep,
    sweep_rows
)
from crossing_intent.prediction.windowing import (
    REFERENCE_CONFIGS,
    adasyn,
    segment_rows,
    segment_trials
)
from crossing_intent.utils.file_utils import load_json, save_csv, save_json, write_run_manifest
from crossing_intent.utils.seeding import substream_seed
from crossing_intent.utils.settings import (
    RunConfig,
    build_run_config,
    load_settings,
    merge_settings,
    parse_overrides,
    settings_document
)

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

SWEEP_COLUMNS = ["window_length", "stride", "n_segments", "accuracy", "precision",
                 "recall", "f1", "auc", "lookahead_s"]
COMPARISON_COLUMNS = ["scenario", "feature", "comparison", "test_statistic", "p_value", "effect_size"]
OMNIBUS_COLUMNS = ["scenario", "feature", "chi2", "df", "p_value", "n_blocks", "dropped_rows",
                   "min_shapiro_p", "skipped_reason"]
RT_COLUMNS = ["scenario", "mean", "hdi_low", "hdi_high", "n"]
SHUFFLE_COLUMNS = ["window_length", "stride", "original_auc", "shuffled_auc", "shuffled_auc_sd",
                   "n_permutations", "seed"]

# handler(config, args) -> (input files, artifact files)
Handler = Callable[[RunConfig, argparse.Namespace], Tuple[List[Path], List[Path]]]


def _out(config: RunConfig) -> Path:
    out = Path(config.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(config: RunConfig) -> Tuple[List[BandPowerTrial], List[Path]]:
    manifest = Path(config.paths.manifest)
    trials = load_trials(manifest)
    inputs = [manifest] + [manifest.parent / e.data_path for e in read_manifest(manifest)]
    return trials, inputs


def _model_path(config: RunConfig) -> Path:
    return Path(config.paths.model) if config.paths.model else _out(config) / "stage_model.json"


def _stage_options(config: RunConfig) -> Dict[str, Any]:
    return {
        "n_components": config.pca.n_components,
        "n_states": config.hmm.n_states,
        "pca_scope": config.pca.scope,
        "hmm_scope": config.hmm.scope,
        "seed": config.seed,
        "tol": config.hmm.tol,
        "max_iter": config.hmm.max_iter,
        "covariance_type": config.hmm.covariance_type,
        "n_jobs": config.jobs,
    }


def _write_stage_tables(out: Path, trials: Sequence[BandPowerTrial],
                        paths: Dict[str, Any], n_states: int) -> List[Path]:
    return [
        save_csv(stage_path_rows(trials, paths), out / "stage_paths.csv",
                 ["trial_id", "frame", "t", "stage", "stage_name"]),
        save_csv(stage_run_rows(trials, paths), out / "stage_runs.csv",
                 ["trial_id", "stage", "stage_name", "start_frame", "end_frame", "start_s", "end_s"]),
        save_csv(stage_occupancy_rows(trials, paths, n_states), out / "stage_occupancy.csv",
                 ["trial_id", "subject_id", "scenario", "stage", "stage_name", "frames", "seconds"]),
    ]


def _write_roc(report: EvalReport, path: Path) -> Path:
    return save_csv(roc_rows(report.roc), path, ["fpr", "tpr"])


# ============================================================================
# Subcommands
# ============================================================================

def cmd_synth(config: RunConfig, args: argparse.Namespace) -> Tuple[List[Path], List[Path]]:
    out = _out(config)
    s = config.synth
    synth_config = study_config(
        seed=config.seed,
        n_subjects=s.n_subjects,
        trials_per_subject=s.trials_per_subject,
        mean_duration_s=s.mean_duration_s,
        duration_jitter_s=s.duration_jitter_s,
        noise_sigma=s.noise_sigma,
        forced_execution_frames=s.forced_execution_frames,
        ramp_feature=config.windowing.features[0],
        ramp_amplitude=s.ramp_amplitude,
        ramp_frames=s.ramp_frames,
    )
    dataset = synth_generate(synth_config)
    manifest = write_trials(dataset.trials, out)
    truth = save_json(dataset.ground_truth(synth_config), out / "ground_truth.json")
    frames = sorted((out / "frames").glob("*.csv"))
    print(f"Wrote {len(dataset.trials)} trials to {manifest}")
    return [], [manifest, truth] + frames


def cmd_fit_hmm(config: RunConfig, args: argparse.Namespace) -> Tuple[List[Path], List[Path]]:
    trials, inputs = _load(config)
    out = _out(config)
    inference = infer_stages(trials, **_stage_options(config))
    bundle = inference.bundle

    fit_rows = []
    for group, fit in bundle.fits.items():
        report = fit.report
        fit_rows.append({
            "group": group,
            "iterations": report.iterations,
            "converged": int(report.converged),
            "log_likelihood": report.log_likelihood_trace[-1] if report.log_likelihood_trace else float("nan"),
            "underdetermined": int(report.underdetermined),
            "variance_clamped": int(report.variance_clamped),
            "monotonic": int(report.monotonic),
        })

    artifacts = [
        save_json(bundle.to_dict(), _model_path(config)),
        save_csv(explained_variance_rows(bundle), out / "explained_variance.csv",
                 ["group", "component", "explained_variance", "explained_variance_ratio", "cumulative_ratio"]),
        save_csv(fit_rows, out / "fit_reports.csv",
                 ["group", "iterations", "converged", "log_likelihood", "underdetermined",
                  "variance_clamped", "monotonic"]),
    ]
    artifacts += _write_stage_tables(out, trials, inference.paths, config.hmm.n_states)

    ratios = [p.pca.cumulative_ratio for p in bundle.projections.values()]
    converged = sum(f.report.converged for f in bundle.fits.values())
    print(f"Fitted {len(bundle.fits)} HMM(s), {converged} converged; "
          f"variance explained by {config.pca.n_components} PCs: "
          f"mean {sum(ratios) / len(ratios):.1%} over {len(ratios)} PCA fit(s)")
    return inputs, artifacts


def cmd_decode(config: RunConfig, args: argparse.Namespace) -> Tuple[List[Path], List[Path]]:
    trials, inputs = _load(config)
    model_path = _model_path(config)
    bundle = StageBundle.from_dict(load_json(model_path))
    paths = decode_stages(bundle, trials, config.jobs)
    artifacts = _write_stage_tables(_out(config), trials, paths, config.hmm.n_states)
    return inputs + [model_path], artifacts


def cmd_stage_stats(config: RunConfig, args: argparse.Namespace) -> Tuple[List[Path], List[Path]]:
    trials, inputs = _load(config)
    out = _out(config)
    model_path = _model_path(config)
    if model_path.exists():
        logger.info(f"Decoding with saved stage model {model_path}")
        paths = decode_stages(StageBundle.from_dict(load_json(model_path)), trials, config.jobs)
        inputs.append(model_path)
    else:
        paths = infer_stages(trials, **_stage_options(config)).paths

    tables = stage_feature_tables(trials, paths, config.hmm.n_states, config.stats.per_scenario)
    results = run_stage_battery(tables, config.stats.alpha, config.jobs)

    artifacts = [
        save_csv(omnibus_rows(results), out / "stage_omnibus.csv", OMNIBUS_COLUMNS),
        save_csv(comparison_rows(results), out / "stage_comparisons.csv", COMPARISON_COLUMNS),
        save_csv(comparison_rows(results, HIGHLIGHTED_FEATURES), out / "stage_comparisons_highlighted.csv",
                 COMPARISON_COLUMNS),
    ]

    highlighted = {feature_name(f) for f in HIGHLIGHTED_FEATURES}
    for r in results:
        if feature_name(r.feature) in highlighted and r.posthoc:
            scope = r.scenario.value if r.scenario else "all scenarios"
            print(f"\n{feature_name(r.feature)} ({scope}): chi2 = {r.friedman.chi2:.3f}, "
                  f"p = {r.friedman.p_value:.4g}")
            print(format_posthoc_matrix(r.posthoc, config.hmm.n_states))
    return inputs, artifacts


def cmd_segment(config: RunConfig, args: argparse.Namespace) -> Tuple[List[Path], List[Path]]:
    trials, inputs = _load(config)
    out = _out(config)
    cfg = config.windowing.window
    segments = segment_trials(trials, cfg, config.windowing.features)
    artifacts = [save_csv(segment_rows(segments), out / f"segments_{cfg.label}.csv")]
    if args.oversample:
        augmented = adasyn(segments, config.windowing.adasyn_k, config.windowing.beta,
                           seed=substream_seed(config.seed, "adasyn"))
        artifacts.append(save_csv(segment_rows(augmented), out / f"segments_{cfg.label}_oversampled.csv"))
    positives = sum(s.label for s in segments)
    print(f"{cfg.label}: {len(segments)} segments ({positives} positive) from {len(trials)} trials")
    return inputs, artifacts


def cmd_cv(config: RunConfig, args: argparse.Namespace) -> Tuple[List[Path], List[Path]]:
    trials, inputs = _load(config)
    out = _out(config)
    cfg = config.windowing.window
    segments = segment_trials(trials, cfg, config.windowing.features)
    report = run_cv(segments, cfg, seed=config.seed, **config.cv_options())

    scores = [{"trial_id": s.source_trial_id, "start_frame": s.start_frame, "label": s.label, "score": sc}
              for s, sc in zip(segments, report.scores)]
    artifacts = [
        save_csv(sweep_rows([report]), out / "cv_report.csv", SWEEP_COLUMNS),
        save_csv(fold_rows(report), out / "cv_folds.csv"),
        save_csv(scores, out / "cv_scores.csv", ["trial_id", "start_frame", "label", "score"]),
        _write_roc(report, out / f"roc_{cfg.label}.csv"),
    ]
    print(pd.DataFrame(sweep_rows([report]), columns=SWEEP_COLUMNS).to_string(index=False))
    return inputs, artifacts


def cmd_sweep(config: RunConfig, args: argparse.Namespace) -> Tuple[List[Path], List[Path]]:
    trials, inputs = _load(config)
    out = _out(config)
    result = sweep(trials, config.windowing.configs, config.windowing.features,
                   seed=config.seed, **config.cv_options())

    folds = [row for report in result.reports for row in fold_rows(report)]
    artifacts = [
        save_csv(sweep_rows(result.reports), out / "sweep_report.csv", SWEEP_COLUMNS),
        save_csv(folds, out / "sweep_folds.csv"),
        save_csv(failure_rows(result.failures), out / "sweep_failures.csv",
                 ["window_length", "stride", "reason"]),
    ]
    for report in result.reports:
        artifacts.append(_write_roc(report, out / "roc" / f"roc_{report.config.label}.csv"))

    table = pd.DataFrame(sweep_rows(result.reports), columns=SWEEP_COLUMNS)
    table["reference"] = [("*" if r.config in REFERENCE_CONFIGS else "") for r in result.reports]
    print(table.to_string(index=False))
    if result.failures:
        print(f"\n{len(result.failures)} configuration(s) failed; see sweep_failures.csv")
    return inputs, artifacts


def cmd_shuffle_test(config: RunConfig, args: argparse.Namespace) -> Tuple[List[Path], List[Path]]:
    trials, inputs = _load(config)
    out = _out(config)
    cfg = config.windowing.window
    segments = segment_trials(trials, cfg, config.windowing.features)
    result = label_shuffle_test(segments, cfg, seed=config.seed,
                                n_permutations=config.eval.n_permutations, **config.cv_options())

    row = {"window_length": cfg.length_frames, "stride": cfg.stride_frames, **result.to_dict()}
    artifacts = [
        save_csv([row], out / "shuffle_test.csv", SHUFFLE_COLUMNS),
        save_csv(shuffle_rows(result), out / "shuffle_permutations.csv", ["permutation", "shuffled_auc"]),
        _write_roc(result.original, out / "roc_original.csv"),
        _write_roc(result.shuffled, out / "roc_shuffled.csv"),
    ]
    print(f"{cfg.label}: AUC {result.original_auc:.3f} on true labels, "
          f"{result.shuffled_auc:.3f} (sd {result.shuffled_auc_sd:.3f}) on {result.n_permutations} label permutations")
    return inputs, artifacts


def cmd_rt_summary(config: RunConfig, args: argparse.Namespace) -> Tuple[List[Path], List[Path]]:
    trials, inputs = _load(config)
    summaries = rt_summaries(trials, config.stats.rt_mass)
    rows = [s.to_dict() for s in summaries]
    artifacts = [save_csv(rows, _out(config) / "rt_summary.csv", RT_COLUMNS)]
    print(pd.DataFrame(rows, columns=RT_COLUMNS).to_string(index=False))
    return inputs, artifacts


COMMANDS: Dict[str, Tuple[Handler, str]] = {
    "synth": (cmd_synth, "Generate a synthetic dataset with ground truth"),
    "fit-hmm": (cmd_fit_hmm, "Fit stage models (standardize, PCA, HMM) and decode every trial"),
    "decode": (cmd_decode, "Decode trials into stages with a saved stage model"),
    "stage-stats": (cmd_stage_stats, "Shapiro-Wilk, Friedman and Conover post-hoc over stage means"),
    "segment": (cmd_segment, "Cut trials into labeled windows"),
    "cv": (cmd_cv, "Cross-validate DTW-KNN on one window configuration"),
    "sweep": (cmd_sweep, "Cross-validate DTW-KNN over a set of window configurations"),
    "shuffle-test": (cmd_shuffle_test, "Compare AUC on true and permuted labels"),
    "rt-summary": (cmd_rt_summary, "Response-time mean and highest-density interval per scenario"),
}


# ============================================================================
# Entry point
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--settings", help="JSON settings file (default: ./crossing_settings.json if present)")
    common.add_argument("--seed", type=int, help="Run seed")
    common.add_argument("--manifest", help="Trial manifest (JSON lines)")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--jobs", type=int, help="Worker cap for parallel sections (-1 for all cores)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override any setting, e.g. --set hmm.scope=pooled")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")

    parser = argparse.ArgumentParser(
        prog="crossing-intent",
        description="Latent-stage analysis and crossing-intent prediction from EEG band power",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        command = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name == "segment":
            command.add_argument("--oversample", action="store_true",
                                 help="Also write the ADASYN-oversampled segment set")
    return parser


def resolve_settings(args: argparse.Namespace) -> Dict[str, Any]:
    """Defaults <- settings file <- --set overrides <- dedicated flags."""
    settings = load_settings(args.settings)
    settings = merge_settings(settings, parse_overrides(args.overrides), "--set")
    flags = {
        "seed": args.seed,
        "paths.manifest": args.manifest,
        "paths.output_dir": args.out,
        "jobs": args.jobs,
    }
    return merge_settings(settings, {k: v for k, v in flags.items() if v is not None}, "command line")


def _report_error(error: BaseException, output_dir: Optional[str], exit_code: int) -> None:
    record = error_record(error, exit_code)
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    if output_dir:
        try:
            save_json(record, Path(output_dir) / "error.json")
        except CrossingIntentError:
            logger.error("Could not write error.json")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)

    output_dir = args.out
    try:
        settings = resolve_settings(args)
        config = build_run_config(settings)
        output_dir = config.paths.output_dir
        handler, _ = COMMANDS[args.command]
        inputs, artifacts = handler(config, args)
        write_run_manifest(output_dir, args.command, config.seed, settings_document(settings),
                           inputs, artifacts)
        return 0
    except CrossingIntentError as e:
        logger.error(f"{args.command} failed: {e}")
        _report_error(e, output_dir, e.exit_code)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in {args.command}: {e}", exc_info=True)
        _report_error(e, output_dir, 1)
        return 1


if __name__ == "__main__":
    sys.exit(main())
