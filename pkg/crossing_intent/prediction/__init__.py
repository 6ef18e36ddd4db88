"""
Crossing-intent prediction from windowed band power.

This package contains:
    - windowing: sliding windows with end-anchored labels, the length grid, ADASYN
    - dtw_knn: dynamic time warping and the KNN classifier over it
    - evaluation: stratified cross-validation, metrics, ROC/AUC, shuffle test, sweep
"""

from crossing_intent.prediction.windowing import (
    WindowConfig,
    LabeledSegment,
    REFERENCE_CONFIGS,
    window_starts,
    slide,
    segment_trials,
    window_grid,
    grid_configs,
    resolve_config_set,
    parse_features,
    adasyn,
    segment_rows
)

from crossing_intent.prediction.dtw_knn import (
    DtwAlignment,
    KnnModel,
    accumulated_cost_matrix,
    dtw_distance,
    dtw_distance_many,
    dtw_path,
    fit_knn,
    nearest_neighbours,
    knn_predict,
    knn_score,
    knn_scores
)

from crossing_intent.prediction.evaluation import (
    FoldAssignment,
    Metrics,
    RocCurve,
    EvalReport,
    ShuffleResult,
    SweepResult,
    stratified_kfold,
    confusion_metrics,
    roc_auc,
    mann_whitney_auc,
    run_cv,
    label_shuffle_test,
    shuffle_rows,
    sweep,
    sweep_rows,
    failure_rows,
    roc_rows,
    fold_rows
)

__all__ = [
    # Windowing
    'WindowConfig',
    'LabeledSegment',
    'REFERENCE_CONFIGS',
    'window_starts',
    'slide',
    'segment_trials',
    'window_grid',
    'grid_configs',
    'resolve_config_set',
    'parse_features',
    'adasyn',
    'segment_rows',

    # DTW and KNN
    'DtwAlignment',
    'KnnModel',
    'accumulated_cost_matrix',
    'dtw_distance',
    'dtw_distance_many',
    'dtw_path',
    'fit_knn',
    'nearest_neighbours',
    'knn_predict',
    'knn_score',
    'knn_scores',

    # Evaluation
    'FoldAssignment',
    'Metrics',
    'RocCurve',
    'EvalReport',
    'ShuffleResult',
    'SweepResult',
    'stratified_kfold',
    'confusion_metrics',
    'roc_auc',
    'mann_whitney_auc',
    'run_cv',
    'label_shuffle_test',
    'shuffle_rows',
    'sweep',
    'sweep_rows',
    'failure_rows',
    'roc_rows',
    'fold_rows',
]
