"""
Latent-stage analysis of band-power trials.

This package contains:
    - preprocess: standardization, PCA and IQR outlier removal
    - hmm: Gaussian hidden Markov model fitting and decoding
    - stages: the standardize -> PCA -> HMM stage pipeline and its tables
    - stage_stats: Shapiro-Wilk, Friedman, Conover post-hoc, Cohen's d, RT summary
"""

from crossing_intent.analysis.preprocess import (
    Standardizer,
    PcaModel,
    standardize_fit,
    standardize_apply,
    standardize_invert,
    pca_fit,
    pca_transform,
    pca_reconstruct,
    iqr_fences,
    iqr_filter
)

from crossing_intent.analysis.hmm import (
    HmmModel,
    FitReport,
    StageRun,
    hmm_fit,
    hmm_decode,
    hmm_loglik,
    stage_runs,
    order_states_by_onset,
    relabel_path,
    free_parameter_count
)

from crossing_intent.analysis.stages import (
    Projection,
    StageFit,
    StageBundle,
    StageInference,
    infer_stages,
    decode_stages,
    explained_variance_rows,
    stage_path_rows,
    stage_run_rows,
    stage_occupancy_rows
)

from crossing_intent.analysis.stage_stats import (
    FriedmanResult,
    PosthocResult,
    StageFeatureTable,
    FeatureStatistics,
    RtSummary,
    HIGHLIGHTED_FEATURES,
    shapiro_wilk,
    friedman,
    conover_posthoc,
    cohens_d,
    stage_feature_tables,
    feature_battery,
    run_stage_battery,
    omnibus_rows,
    comparison_rows,
    format_posthoc_matrix,
    hdi_interval,
    rt_summary,
    rt_summaries
)

__all__ = [
    # Preprocessing
    'Standardizer',
    'PcaModel',
    'standardize_fit',
    'standardize_apply',
    'standardize_invert',
    'pca_fit',
    'pca_transform',
    'pca_reconstruct',
    'iqr_fences',
    'iqr_filter',

    # HMM
    'HmmModel',
    'FitReport',
    'StageRun',
    'hmm_fit',
    'hmm_decode',
    'hmm_loglik',
    'stage_runs',
    'order_states_by_onset',
    'relabel_path',
    'free_parameter_count',

    # Stage pipeline
    'Projection',
    'StageFit',
    'StageBundle',
    'StageInference',
    'infer_stages',
    'decode_stages',
    'explained_variance_rows',
    'stage_path_rows',
    'stage_run_rows',
    'stage_occupancy_rows',

    # Statistics
    'FriedmanResult',
    'PosthocResult',
    'StageFeatureTable',
    'FeatureStatistics',
    'RtSummary',
    'HIGHLIGHTED_FEATURES',
    'shapiro_wilk',
    'friedman',
    'conover_posthoc',
    'cohens_d',
    'stage_feature_tables',
    'feature_battery',
    'run_stage_battery',
    'omnibus_rows',
    'comparison_rows',
    'format_posthoc_matrix',
    'hdi_interval',
    'rt_summary',
    'rt_summaries',
]
