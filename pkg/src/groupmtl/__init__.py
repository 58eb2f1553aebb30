"""Multi-task kernel learning with automatic task-group discovery."""

from .active_set import ActiveSetResult, certificate_violators, solve_active_set
from .data import (
    DataError,
    DatasetBundle,
    SyntheticSpec,
    accuracy,
    auc,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split,
    standardize,
)
from .inner import Hyperparams, compute_lambda, kernel_weight_update, solve_inner
from .kernels import GramCache, KernelSpec, linear_feature_specs
from .lattice import GroupWeightScheme, LatticeOrder, TaskGroup, hull
from .model import (
    ModelFormatError,
    TrainedModel,
    baseline_single_group_mtl,
    baseline_stl,
    decision_function,
    deserialize,
    extract_linear_weights,
    fit,
    predict,
    serialize,
)
from .outer import DualState, solve_outer

__version__ = "0.1.0"

__all__ = [
    "ActiveSetResult",
    "DataError",
    "DatasetBundle",
    "DualState",
    "GramCache",
    "GroupWeightScheme",
    "Hyperparams",
    "KernelSpec",
    "LatticeOrder",
    "ModelFormatError",
    "SyntheticSpec",
    "TaskGroup",
    "TrainedModel",
    "accuracy",
    "auc",
    "baseline_single_group_mtl",
    "baseline_stl",
    "certificate_violators",
    "compute_lambda",
    "decision_function",
    "deserialize",
    "extract_linear_weights",
    "fit",
    "generate_synthetic",
    "hull",
    "kernel_weight_update",
    "linear_feature_specs",
    "load_dataset",
    "predict",
    "save_dataset",
    "serialize",
    "solve_active_set",
    "solve_inner",
    "solve_outer",
    "split",
    "standardize",
]
