"""Clustering-based decision trees with a simulated quantum-accessible memory."""
from .baseline import AxisTree, fit_axis, predict_axis
from .cluster import AssignmentRule, ClusterConfig, Init, cluster_node
from .dataset import Dataset, Task, fit_standardizer, load_benchmark, load_csv, make_folds
from .errors import ConfigError, DataError, DesqError, InvariantError
from .kptree import KpBinaryTree, KpForest, append_rows, build
from .qestimate import EstimatorConfig, Method, QueryLedger
from .tree import DesqTree, fit, predict, retrain
from .weights import FeatureWeights, compute_weights, pearson_exact, pearson_quantum

__all__ = [
    "AssignmentRule", "AxisTree", "ClusterConfig", "ConfigError", "DataError", "Dataset",
    "DesqError", "DesqTree", "EstimatorConfig", "FeatureWeights", "Init", "InvariantError",
    "KpBinaryTree", "KpForest", "Method", "QueryLedger", "Task", "append_rows", "build",
    "cluster_node", "compute_weights", "fit", "fit_axis", "fit_standardizer", "load_benchmark",
    "load_csv", "make_folds", "pearson_exact", "pearson_quantum", "predict", "predict_axis",
    "retrain",
]
