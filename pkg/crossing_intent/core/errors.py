"""
Exception hierarchy for the crossing-intent pipeline.

Every error raised by the package derives from CrossingIntentError and carries
the command-line exit code of its category.

Copyright (C) 2025  Crossing Intent Project

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published
by the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.
"""

from typing import Any, Dict, List, Optional


class CrossingIntentError(Exception):
    """Base class for all pipeline errors."""

    exit_code: int = 1

    def to_record(self) -> Dict[str, Any]:
        """
        Describe the error as a JSON-serializable record.

        Returns:
            Dictionary with the error class, message and exit code
        """
        return {
            "error": type(self).__name__,
            "message": str(self),
            "exit_code": self.exit_code,
        }


class ConfigError(CrossingIntentError):
    """Invalid settings, window configuration or generator configuration."""

    exit_code = 2


class DataError(CrossingIntentError, ValueError):
    """Input data is missing, malformed, or cannot support the requested operation."""

    exit_code = 3


class LoadError(DataError):
    """A file named by the caller or a manifest could not be read."""

    def __init__(self, path: Any, reason: str = "file not found"):
        self.path = str(path)
        super().__init__(f"{reason}: {self.path}")


class ParseError(DataError):
    """A data file is syntactically invalid at a given line."""

    def __init__(self, path: Any, line: int, reason: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}, line {line}: {reason}")

    def to_record(self) -> Dict[str, Any]:
        record = super().to_record()
        record.update({"path": self.path, "line": self.line})
        return record


class TrialValidationError(DataError):
    """A trial violates one or more BandPowerTrial invariants."""

    def __init__(self, trial_id: str, violations: List[Any]):
        self.trial_id = trial_id
        self.violations = list(violations)
        shown = "; ".join(str(v) for v in self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"trial {trial_id} failed validation: {shown}{more}")

    def to_record(self) -> Dict[str, Any]:
        record = super().to_record()
        record["violations"] = [str(v) for v in self.violations]
        return record


class InsufficientDataError(DataError):
    """Too few samples, frames, rows or class members for the operation."""


class NumericalError(CrossingIntentError):
    """A numerical procedure broke down (non-finite likelihood, singular fit)."""

    exit_code = 4


def error_record(error: BaseException, exit_code: Optional[int] = None) -> Dict[str, Any]:
    """
    Build an error record for any exception, including ones from outside the package.

    Args:
        error: The exception to describe
        exit_code: Exit code to report for foreign exceptions (default: 1)

    Returns:
        JSON-serializable error record
    """
    if isinstance(error, CrossingIntentError):
        return error.to_record()
    return {
        "error": type(error).__name__,
        "message": str(error),
        "exit_code": 1 if exit_code is None else exit_code,
    }
