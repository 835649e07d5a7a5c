"""Executable checks: error bounds, WL refinement, sampling and expressiveness."""
from .bounds import (
    SAFETY,
    ErrorReport,
    bound_case,
    layer_lipschitz,
    lemma1_bound,
    lemma1_case,
    measure_errors,
    random_small_graph,
    recursive_bound,
    theorem1_bound,
)
from .expressiveness import ExpressivenessVerdict, expressiveness_check, train_wl_gin, wl_corpus
from .gradient import GradientReport, batch_gradients, gradient_case, gradient_error_check
from .sampling import Witness, gas_witness_outputs, prop3_counterexample_search, sampled_adjacency, sum_aggregate
from .wl import WLColoring, num_classes, wl_refine

__all__ = [
    "SAFETY", "ErrorReport", "bound_case", "layer_lipschitz", "lemma1_bound", "lemma1_case",
    "measure_errors", "random_small_graph", "recursive_bound", "theorem1_bound",
    "ExpressivenessVerdict", "expressiveness_check", "train_wl_gin", "wl_corpus",
    "GradientReport", "batch_gradients", "gradient_case", "gradient_error_check",
    "Witness", "gas_witness_outputs", "prop3_counterexample_search", "sampled_adjacency", "sum_aggregate",
    "WLColoring", "num_classes", "wl_refine",
]
