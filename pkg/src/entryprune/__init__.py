"""Supervised feature selection via input-layer pruning of a dense MLP."""

from .data import Dataset, Split, ToySpec, load_csv, load_idx, make_split, make_toy, standardize, toy_groups
from .errors import ConfigError, DataError
from .evaluate import (
    EvalReport,
    FeatureSet,
    GroupStats,
    ProbeReport,
    gradient_probe,
    jaccard,
    knn_accuracy,
    linear_classifier_accuracy,
    network_accuracy,
    random_baseline,
    stability,
)
from .flex import FlexState, flex_final_scaling, flex_update
from .mlp import MlpArchitecture, MlpState, OptimizerConfig
from .rng import SeededRng
from .selector import (
    EntryMode,
    Metric,
    RunObserver,
    SelectionConfig,
    SelectionResult,
    SelectionState,
    run_entryprune,
)
from .stopping import RetrainPlan, RotationRecord, StopKind, StoppingConfig, plan_final_retrain, should_stop

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "EntryMode",
    "EvalReport",
    "FeatureSet",
    "FlexState",
    "GroupStats",
    "Metric",
    "MlpArchitecture",
    "MlpState",
    "OptimizerConfig",
    "ProbeReport",
    "RetrainPlan",
    "RotationRecord",
    "RunObserver",
    "SeededRng",
    "SelectionConfig",
    "SelectionResult",
    "SelectionState",
    "Split",
    "StopKind",
    "StoppingConfig",
    "ToySpec",
    "flex_final_scaling",
    "flex_update",
    "gradient_probe",
    "jaccard",
    "knn_accuracy",
    "linear_classifier_accuracy",
    "load_csv",
    "load_idx",
    "make_split",
    "make_toy",
    "network_accuracy",
    "plan_final_retrain",
    "random_baseline",
    "run_entryprune",
    "should_stop",
    "stability",
    "standardize",
    "toy_groups",
]

__version__ = "0.1.0"
