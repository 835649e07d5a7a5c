"""Graph neural network training on partition mini-batches with historical embeddings."""
from .exceptions import InputError, NumericalError, ParseError, SchemaError, StateError
from .graph import Dataset, Graph, LabelSet, build_graph, degree, gcn_norm, make_batch_plan
from .partition import Partitioning, cluster_partition, inter_intra_ratio, random_partition
from .history import HistoryStore, measure_staleness
from .layers import KINDS, LayerConfig, make_layer
from .model import GNNModel, ModelSpec
from .trainer import Trainer, full_forward, gas_epoch, gas_pass
from .estimator import GASClassifier

__version__ = "0.1.0"

__all__ = [
    "InputError", "NumericalError", "ParseError", "SchemaError", "StateError",
    "Dataset", "Graph", "LabelSet", "build_graph", "degree", "gcn_norm", "make_batch_plan",
    "Partitioning", "cluster_partition", "inter_intra_ratio", "random_partition",
    "HistoryStore", "measure_staleness", "KINDS", "LayerConfig", "make_layer",
    "GNNModel", "ModelSpec", "Trainer", "full_forward", "gas_epoch", "gas_pass",
    "GASClassifier",
]
