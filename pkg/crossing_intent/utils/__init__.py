"""
Utility functions for crossing_intent.

This package contains:
    - file_utils: CSV/JSON report writers, hashes, run manifests
    - seeding: named random substreams derived from the run seed
    - settings: run settings and the typed RunConfig (imported directly)
"""

from crossing_intent.utils.file_utils import (
    OutputError,
    REPORT_FLOAT_FORMAT,
    save_json,
    load_json,
    save_csv,
    file_sha256,
    write_run_manifest,
    sanitize_filename
)

from crossing_intent.utils.seeding import (
    substream_seed,
    substream
)

__all__ = [
    # File utilities
    'OutputError',
    'REPORT_FLOAT_FORMAT',
    'save_json',
    'load_json',
    'save_csv',
    'file_sha256',
    'write_run_manifest',
    'sanitize_filename',

    # Seeding
    'substream_seed',
    'substream',
]
