# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

"""Reinforced teacher selection for multi-teacher knowledge distillation.

Contains the MLP students and teachers, the fixed teacher ensembles, the
per-instance teacher selector with its policy-gradient training and the
experiment harness used to compare them.
"""

from rlkd._datasets import (
    Batch,
    Dataset,
    Instance,
    SplitSpec,
    generate_quadrant_benchmark,
    load_jsonl,
    load_teacher_logits,
    quadrant_class_centers,
    save_jsonl,
    save_teacher_logits,
    split,
    standardize,
)
from rlkd._distillation import (
    EnsembleStrategy,
    KdBatchLoss,
    KdConfig,
    KdTrace,
    StrategyKind,
    dev_accuracy_weights,
    distillation_loss,
    ensemble_soft_label,
    ensemble_soft_labels,
    evaluate_ensemble_accuracy,
    fit_lr_ensemble,
    ground_truth_loss,
    kd_loss,
    kd_objective,
    rand_single_pick,
    selected_soft_labels,
    selection_mask,
    vanilla_kd_train,
)
from rlkd._exceptions import (
    ConfigurationError,
    CoverageError,
    DatasetParseError,
    DatasetSchemaError,
    ExperimentRunError,
    IncompatibleReportsError,
    InvalidArgumentError,
    NumericDivergenceError,
    NumericError,
    RLKDError,
    TeacherRowValidationError,
    TraceFileError,
)
from rlkd._experiment import (
    DESK_LEARNING_RATES,
    TRANSFORMER_GRID,
    BenchmarkSpec,
    ExperimentConfig,
    Hyperparameters,
    Method,
    TeacherPoolSpec,
    compare,
    emit_plot_data,
    generate_data,
    load_experiment_config,
    load_report,
    parse_experiment_config,
    run_experiment,
    validate_report,
)
from rlkd._models import (
    STUDENT_ARCHITECTURES,
    MlpClassifier,
    OptimizerKind,
    OptimizerSpec,
    OptimizerState,
    TeacherCorruptionSpec,
    build_classifier,
    compute_teacher_predictions,
    evaluate_accuracy,
    forward_logits,
    hard_label_loss,
    hidden_representation,
    load_model,
    make_teacher_pool,
    predict_proba,
    save_model,
    train_classifier,
)
from rlkd._numerics import SeededRng, check_gradient, softmax
from rlkd._policy import (
    EpisodeHistory,
    GradientMode,
    PolicyState,
    RewardBaseline,
    RewardConfig,
    RewardVariant,
    SelectionProfile,
    TeacherSelectorParams,
    action_prob,
    build_state,
    build_states,
    compute_reward,
    load_policy,
    policy_update,
    sample_actions,
    sample_batch_actions,
    save_policy,
    selection_profile,
    state_dim,
)
from rlkd._predictions import TeacherPredictions
from rlkd._stats import Summary, TTestResult, summarize, welch_ttest
from rlkd._trainer import (
    RlkdConfig,
    RlkdResult,
    RunTrace,
    Schedule,
    SelectorPretrainReward,
    joint_train,
    pretrain_selector,
    pretrain_student,
    run_rlkd,
)

__all__ = [
    "Batch",
    "BenchmarkSpec",
    "ConfigurationError",
    "CoverageError",
    "DESK_LEARNING_RATES",
    "Dataset",
    "DatasetParseError",
    "DatasetSchemaError",
    "EnsembleStrategy",
    "EpisodeHistory",
    "ExperimentConfig",
    "ExperimentRunError",
    "GradientMode",
    "Hyperparameters",
    "IncompatibleReportsError",
    "Instance",
    "InvalidArgumentError",
    "KdBatchLoss",
    "KdConfig",
    "KdTrace",
    "Method",
    "MlpClassifier",
    "NumericDivergenceError",
    "NumericError",
    "OptimizerKind",
    "OptimizerSpec",
    "OptimizerState",
    "PolicyState",
    "RLKDError",
    "RewardBaseline",
    "RewardConfig",
    "RewardVariant",
    "RlkdConfig",
    "RlkdResult",
    "RunTrace",
    "STUDENT_ARCHITECTURES",
    "Schedule",
    "SeededRng",
    "SelectionProfile",
    "SelectorPretrainReward",
    "SplitSpec",
    "StrategyKind",
    "Summary",
    "TRANSFORMER_GRID",
    "TTestResult",
    "TeacherCorruptionSpec",
    "TeacherPoolSpec",
    "TeacherPredictions",
    "TeacherRowValidationError",
    "TeacherSelectorParams",
    "TraceFileError",
    "action_prob",
    "build_classifier",
    "build_state",
    "build_states",
    "check_gradient",
    "compare",
    "compute_reward",
    "compute_teacher_predictions",
    "dev_accuracy_weights",
    "distillation_loss",
    "emit_plot_data",
    "ensemble_soft_label",
    "ensemble_soft_labels",
    "evaluate_accuracy",
    "evaluate_ensemble_accuracy",
    "fit_lr_ensemble",
    "forward_logits",
    "generate_data",
    "generate_quadrant_benchmark",
    "ground_truth_loss",
    "hard_label_loss",
    "hidden_representation",
    "joint_train",
    "kd_loss",
    "kd_objective",
    "load_experiment_config",
    "load_jsonl",
    "load_model",
    "load_policy",
    "load_report",
    "load_teacher_logits",
    "make_teacher_pool",
    "parse_experiment_config",
    "policy_update",
    "predict_proba",
    "pretrain_selector",
    "pretrain_student",
    "quadrant_class_centers",
    "rand_single_pick",
    "run_experiment",
    "run_rlkd",
    "sample_actions",
    "sample_batch_actions",
    "save_jsonl",
    "save_model",
    "save_policy",
    "save_teacher_logits",
    "selected_soft_labels",
    "selection_mask",
    "selection_profile",
    "softmax",
    "split",
    "standardize",
    "state_dim",
    "summarize",
    "train_classifier",
    "validate_report",
    "vanilla_kd_train",
    "welch_ttest",
]
