"""
File utilities for the crossing-intent pipeline.

This module handles output I/O, including:
- Writing CSV reports and JSON documents deterministically
- Hashing artifacts
- Writing the per-run manifest of inputs, seed and artifact hashes

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

import hashlib
import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd

from crossing_intent.core.errors import CrossingIntentError, LoadError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Fixed float format for every report CSV
REPORT_FLOAT_FORMAT = "%.6g"


class OutputError(CrossingIntentError):
    """An artifact could not be written."""

    exit_code = 3


def _to_jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return obj.as_posix()
    return obj


def save_json(document: Any, filepath: PathLike) -> Path:
    """
    Save a JSON document with sorted keys and a trailing newline.

    Numpy arrays and scalars are converted to plain lists and numbers;
    matrices therefore serialize row-major.

    Args:
        document: Dictionary or list to save
        filepath: Destination path (parent directories are created)

    Returns:
        Path to the saved file

    Raises:
        OutputError: If the file cannot be written
    """
    filepath = Path(filepath)
    try:
        filepath.parent.mkdir(parents=True, exist_ok=True)
        with open(filepath, 'w', encoding='utf-8') as f:
            json.dump(_to_jsonable(document), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        logger.error(f"Failed to save {filepath}: {e}", exc_info=True)
        raise OutputError(f"cannot write {filepath}: {e}") from e

    logger.info(f"Saved {filepath}")
    return filepath


def load_json(filepath: PathLike) -> Any:
    """
    Load a JSON document.

    Raises:
        LoadError: If the file doesn't exist or is not valid JSON
    """
    filepath = Path(filepath)
    if not filepath.exists():
        raise LoadError(filepath)
    try:
        with open(filepath, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise LoadError(filepath, f"invalid JSON ({e})") from e


def save_csv(
    rows: Union[pd.DataFrame, List[Dict[str, Any]]],
    filepath: PathLike,
    columns: Optional[List[str]] = None
) -> Path:
    """
    Save a report table as CSV.

    Args:
        rows: DataFrame, or list of row dictionaries
        filepath: Destination path (parent directories are created)
        columns: Column order; required when rows may be empty

    Returns:
        Path to the saved file

    Raises:
        OutputError: If the file cannot be written
    """
    filepath = Path(filepath)
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=columns)
    if columns is not None:
        frame = frame.loc[:, columns]
    try:
        filepath.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(filepath, index=False, float_format=REPORT_FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        logger.error(f"Failed to save {filepath}: {e}", exc_info=True)
        raise OutputError(f"cannot write {filepath}: {e}") from e

    logger.info(f"Saved {len(frame)} rows to {filepath}")
    return filepath


def file_sha256(filepath: PathLike) -> str:
    """Hex SHA-256 digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(filepath, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_run_manifest(
    output_dir: PathLike,
    command: str,
    seed: int,
    settings: Dict[str, Any],
    inputs: Iterable[PathLike],
    artifacts: Iterable[PathLike]
) -> Path:
    """
    Record what a run read, how it was configured, and what it wrote.

    Paths are stored relative to the output directory when possible so the
    manifest itself is reproducible across checkouts.

    Args:
        output_dir: Run output directory; the manifest is run_manifest.json inside it
        command: Subcommand name
        seed: Run seed
        settings: Resolved flat settings
        inputs: Files the run read
        artifacts: Files the run wrote

    Returns:
        Path to the manifest
    """
    output_dir = Path(output_dir)

    def describe(path: PathLike) -> Dict[str, str]:
        path = Path(path)
        try:
            shown = path.resolve().relative_to(output_dir.resolve()).as_posix()
        except ValueError:
            shown = path.as_posix()
        return {"path": shown, "sha256": file_sha256(path)}

    manifest = {
        "command": command,
        "seed": int(seed),
        "settings": settings,
        "inputs": [describe(p) for p in inputs if Path(p).is_file()],
        "artifacts": [describe(p) for p in artifacts],
    }
    return save_json(manifest, output_dir / "run_manifest.json")


def sanitize_filename(filename: str) -> str:
    """
    Sanitize a filename by removing/replacing invalid characters.

    Args:
        filename: Original filename

    Returns:
        Sanitized filename safe for all platforms

    Example:
        >>> sanitize_filename("subject 01: trial?")
        'subject_01_trial'
    """
    sanitized = re.sub(r'[<>:"/\\|?*\s]', '_', filename)
    sanitized = sanitized.strip('._ ')
    sanitized = re.sub(r'_+', '_', sanitized)
    return sanitized
