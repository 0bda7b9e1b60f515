"""Tree-based linear extreme multi-label classification with model-size accounting."""
from .analysis import (
    AlphaStats,
    BalancedTreeParams,
    CostParams,
    SizeEstimate,
    alpha_stats,
    balanced_ratio,
    balanced_tree_nnz,
    estimate_tree_size,
    max_depth_D,
    sub_dense_alpha_bound,
    depth_decrease_claim,
    alpha_feasible,
    training_cost_estimate,
)
from .data import (
    MultiLabelDataset,
    ParseError,
    SparseVector,
    compact_features,
    instances_with_labels,
    parse_libsvm_multilabel,
    used_features,
    write_libsvm_multilabel,
)
from .estimator import LabelTreeClassifier, LinearOVRClassifier
from .predict import Prediction, precision_at_k, predict_ovr, predict_tree
from .serialize import load_model, save_model
from .solver import (
    LossSpec,
    OvrModel,
    TreeModel,
    model_bytes,
    model_nnz,
    prune_weights,
    solve_binary,
    train_ovr,
    train_tree,
)
from .tree import LabelTree, build_label_tree, label_representations, spherical_kmeans, tree_summary

__version__ = "0.1.0"

__all__ = [
    "AlphaStats",
    "BalancedTreeParams",
    "CostParams",
    "SizeEstimate",
    "alpha_stats",
    "balanced_ratio",
    "balanced_tree_nnz",
    "estimate_tree_size",
    "max_depth_D",
    "sub_dense_alpha_bound",
    "depth_decrease_claim",
    "alpha_feasible",
    "training_cost_estimate",
    "MultiLabelDataset",
    "ParseError",
    "SparseVector",
    "compact_features",
    "instances_with_labels",
    "parse_libsvm_multilabel",
    "used_features",
    "write_libsvm_multilabel",
    "LabelTreeClassifier",
    "LinearOVRClassifier",
    "Prediction",
    "precision_at_k",
    "predict_ovr",
    "predict_tree",
    "load_model",
    "save_model",
    "LossSpec",
    "OvrModel",
    "TreeModel",
    "model_bytes",
    "model_nnz",
    "prune_weights",
    "solve_binary",
    "train_ovr",
    "train_tree",
    "LabelTree",
    "build_label_tree",
    "label_representations",
    "spherical_kmeans",
    "tree_summary",
]
