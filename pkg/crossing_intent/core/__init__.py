"""
Schema, domain types and errors shared by every pipeline stage.

This package contains:
    - schema: channel/band constants, feature indexing, trials and validation
    - errors: exception hierarchy with CLI exit codes
"""

from crossing_intent.core.errors import (
    CrossingIntentError,
    ConfigError,
    DataError,
    LoadError,
    ParseError,
    TrialValidationError,
    InsufficientDataError,
    NumericalError,
    error_record
)

from crossing_intent.core.schema import (
    Channel,
    Band,
    Scenario,
    Stage,
    BandDefinition,
    ChannelBandKey,
    BandPowerTrial,
    Violation,
    ValidationResult,
    CHANNELS,
    BANDS,
    BAND_DEFINITIONS,
    FEATURE_NAMES,
    DEFAULT_FEATURE,
    FEATURE_RATE_HZ,
    RAW_SAMPLE_RATE_HZ,
    N_FEATURES,
    N_STAGES,
    feature_index,
    feature_key,
    feature_name,
    parse_feature_name,
    validate_trial
)

__all__ = [
    # Errors
    'CrossingIntentError',
    'ConfigError',
    'DataError',
    'LoadError',
    'ParseError',
    'TrialValidationError',
    'InsufficientDataError',
    'NumericalError',
    'error_record',

    # Schema
    'Channel',
    'Band',
    'Scenario',
    'Stage',
    'BandDefinition',
    'ChannelBandKey',
    'BandPowerTrial',
    'Violation',
    'ValidationResult',
    'CHANNELS',
    'BANDS',
    'BAND_DEFINITIONS',
    'FEATURE_NAMES',
    'DEFAULT_FEATURE',
    'FEATURE_RATE_HZ',
    'RAW_SAMPLE_RATE_HZ',
    'N_FEATURES',
    'N_STAGES',
    'feature_index',
    'feature_key',
    'feature_name',
    'parse_feature_name',
    'validate_trial',
]
