"""
Trial manifests and CSV frame files.

A manifest is JSON-lines, one object per trial with the fields trial_id,
subject_id, scenario, response_time_s and data_path (relative to the manifest).
Each frame file is a UTF-8 CSV with header `t,AF3.theta,...,AF4.gamma`
(71 columns) and one row per 8 Hz frame.

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from crossing_intent.core.errors import LoadError, ParseError, TrialValidationError
from crossing_intent.core.schema import (
    FEATURE_NAMES,
    BandPowerTrial,
    Scenario,
    validate_trial
)
from crossing_intent.utils.file_utils import sanitize_filename

logger = logging.getLogger(__name__)

FRAME_HEADER = ("t",) + FEATURE_NAMES
MANIFEST_FIELDS = ("trial_id", "subject_id", "scenario", "response_time_s", "data_path")


@dataclass(frozen=True)
class TrialManifestEntry:
    """One manifest line."""
    trial_id: str
    subject_id: str
    scenario: Scenario
    response_time_s: float
    data_path: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "trial_id": self.trial_id,
            "subject_id": self.subject_id,
            "scenario": self.scenario.value,
            "response_time_s": self.response_time_s,
            "data_path": self.data_path,
        }


def read_manifest(manifest_path: Union[str, Path]) -> List[TrialManifestEntry]:
    """
    Parse a JSON-lines trial manifest.

    Blank lines are skipped. An empty manifest yields an empty list.

    Args:
        manifest_path: Path to the manifest

    Returns:
        Entries in file order

    Raises:
        LoadError: If the manifest does not exist
        ParseError: If a line is not a valid entry
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise LoadError(manifest_path)

    entries = []
    with open(manifest_path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(manifest_path, line_no, f"invalid JSON ({e.msg})") from e
            if not isinstance(record, dict):
                raise ParseError(manifest_path, line_no, "manifest line must be a JSON object")
            missing = [k for k in MANIFEST_FIELDS if k not in record]
            if missing:
                raise ParseError(manifest_path, line_no, f"missing fields: {', '.join(missing)}")
            try:
                scenario = Scenario(record["scenario"])
            except ValueError:
                raise ParseError(manifest_path, line_no, f"unknown scenario {record['scenario']!r}") from None
            try:
                response_time = float(record["response_time_s"])
            except (TypeError, ValueError):
                raise ParseError(manifest_path, line_no, "response_time_s is not a number") from None
            entries.append(TrialManifestEntry(
                trial_id=str(record["trial_id"]),
                subject_id=str(record["subject_id"]),
                scenario=scenario,
                response_time_s=response_time,
                data_path=str(record["data_path"]),
            ))
    return entries


def read_frame_file(path: Union[str, Path]) -> np.ndarray:
    """
    Read a CSV frame file into a T x 70 matrix (the t column is dropped).

    Raises:
        LoadError: If the file does not exist
        ParseError: On a header or row that does not have the 71 expected columns,
                    or a cell that is not a number
    """
    path = Path(path)
    if not path.exists():
        raise LoadError(path)

    rows: List[List[float]] = []
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ParseError(path, 1, "empty frame file (missing header)")
        if len(header) != len(FRAME_HEADER):
            raise ParseError(path, 1, f"expected {len(FRAME_HEADER)} columns, got {len(header)}")
        if tuple(h.strip() for h in header) != FRAME_HEADER:
            raise ParseError(path, 1, "header does not match the channel/band column order")
        for row in reader:
            line_no = reader.line_num
            if not row:
                continue
            if len(row) != len(FRAME_HEADER):
                raise ParseError(path, line_no, f"expected {len(FRAME_HEADER)} columns, got {len(row)}")
            try:
                rows.append([float(cell) for cell in row[1:]])
            except ValueError as e:
                raise ParseError(path, line_no, f"non-numeric cell ({e})") from e

    return np.array(rows, dtype=float).reshape(len(rows), len(FEATURE_NAMES))


def load_trials(manifest_path: Union[str, Path]) -> List[BandPowerTrial]:
    """
    Load and validate every trial named in a manifest, in manifest order.

    Args:
        manifest_path: JSON-lines manifest

    Returns:
        One BandPowerTrial per entry

    Raises:
        LoadError: Missing manifest or frame file (the path is named)
        ParseError: Malformed manifest line or frame row (line number given)
        TrialValidationError: A trial violates its invariants

    Example:
        >>> trials = load_trials("data/manifest.jsonl")
        >>> trials[0].frames.shape[1]
        70
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    trials = []
    for entry in read_manifest(manifest_path):
        frames = read_frame_file(base / entry.data_path)
        trial = BandPowerTrial(
            trial_id=entry.trial_id,
            subject_id=entry.subject_id,
            scenario=entry.scenario,
            frames=frames,
            response_time_s=entry.response_time_s,
        )
        result = validate_trial(trial)
        if not result.ok:
            raise TrialValidationError(entry.trial_id, list(result.violations))
        trials.append(trial)

    logger.info(f"Loaded {len(trials)} trials from {manifest_path}")
    return trials


def write_trials(
    trials: Sequence[BandPowerTrial],
    output_dir: Union[str, Path],
    manifest_name: str = "manifest.jsonl",
    frames_dir: str = "frames"
) -> Path:
    """
    Write trials as a manifest plus one CSV frame file each.

    Args:
        trials: Trials to write
        output_dir: Destination directory
        manifest_name: Manifest filename inside output_dir
        frames_dir: Sub-directory for frame files

    Returns:
        Path to the manifest
    """
    output_dir = Path(output_dir)
    (output_dir / frames_dir).mkdir(parents=True, exist_ok=True)
    manifest_path = output_dir / manifest_name

    with open(manifest_path, 'w', encoding='utf-8') as manifest:
        for trial in trials:
            relative = f"{frames_dir}/{sanitize_filename(trial.trial_id)}.csv"
            table = pd.DataFrame(trial.frames, columns=list(FEATURE_NAMES))
            table.insert(0, "t", np.arange(trial.n_frames) / trial.feature_rate_hz)
            table.to_csv(output_dir / relative, index=False, lineterminator="\n")
            entry = TrialManifestEntry(trial.trial_id, trial.subject_id, trial.scenario,
                                       float(trial.response_time_s), relative)
            manifest.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")

    logger.info(f"Wrote {len(trials)} trials to {manifest_path}")
    return manifest_path
