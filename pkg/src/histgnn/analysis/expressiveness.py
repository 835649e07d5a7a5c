"""Separation of WL classes by embeddings computed with historical halos."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.spatial.distance import cdist, pdist

from ..graph import Dataset, Graph, LabelSet, build_graph
from ..history import HistoryStore
from ..model import GNNModel, ModelSpec
from ..partition import random_partition
from ..trainer import Trainer, full_forward, gas_pass, prepare_batches
from .wl import wl_refine

log = logging.getLogger(__name__)

__all__ = ["wl_corpus", "ExpressivenessVerdict", "expressiveness_check", "train_wl_gin"]


def wl_corpus(max_nodes: int = 6):
    """Disjoint union of all connected graphs with ``1 .. max_nodes`` nodes.

    Returns the union graph and the source-graph index of every node.
    """
    edges, owner = [], []
    offset = 0
    for nxg in nx.graph_atlas_g():
        n = nxg.number_of_nodes()
        if n == 0 or n > max_nodes or not nx.is_connected(nxg):
            continue
        e = np.array(list(nxg.edges()), dtype=np.int64).reshape(-1, 2)
        edges.append(e + offset)
        owner.append(np.full(n, len(owner)))
        offset += n
    g = build_graph(np.concatenate(edges), offset)
    return g, np.concatenate(owner)


@dataclass
class ExpressivenessVerdict:
    num_pairs: int
    separated: int
    tau: float
    delta: float
    phi_accuracy: float
    trained: bool
    min_rate: float = 0.99

    @property
    def pass_rate(self) -> float:
        return 1.0 if self.num_pairs == 0 else self.separated / self.num_pairs

    @property
    def passed(self) -> bool:
        if self.num_pairs == 0:
            return True  # nothing to separate
        return self.pass_rate >= self.min_rate and self.tau > 0


def _pair_index(n):
    i, j = np.triu_indices(n, 1)
    return i, j


def expressiveness_check(model: GNNModel, store: HistoryStore, g: Graph, features, rounds: int,
                         props=None, init_colors=None, trained: bool = True,
                         min_rate: float = 0.99, rel_tol: float = 1e-6) -> ExpressivenessVerdict:
    """Check that WL-distinct nodes get embeddings further apart than the approximation error.

    The embeddings come from one evaluation pass with the current histories.
    A pair with different colors counts as separated when its distance
    exceeds ``2 * delta + rel_tol * scale`` (``delta`` = largest deviation
    from the exact forward pass, ``scale`` = largest exact output norm), so
    no ball of radius ``delta`` around an exact output can contain both.
    ``tau`` is the smallest such distance.  A nearest-class (Voronoi) map
    built from exact outputs gives ``phi_accuracy``.
    """
    if not trained:
        log.warning("expressiveness check on an untrained model")
    n = g.num_nodes
    colors = wl_refine(g, init_colors, rounds).final()
    flags = np.zeros(n, dtype=bool)
    labels = LabelSet(colors, int(colors.max()) + 1, flags, flags.copy(), flags.copy())
    ds = Dataset(g, np.asarray(features), labels)
    if props is None:
        props = prepare_batches(g, random_partition(g, 1), model.dtype)
    approx = gas_pass(model, ds, props, store).astype(np.float64)
    exact, _ = full_forward(model, ds)
    exact = exact.astype(np.float64)
    delta = float(np.linalg.norm(approx - exact, axis=1).max())
    i, j = _pair_index(n)
    distinct = colors[i] != colors[j]
    dist = pdist(approx)[distinct]
    scale = float(np.linalg.norm(exact, axis=1).max()) if n else 0.0
    sep = dist > 2.0 * delta + rel_tol * scale
    tau = float(dist[sep].min()) if sep.any() else 0.0
    classes = np.unique(colors)
    reps = np.stack([exact[colors == c].mean(axis=0) for c in classes])
    phi = classes[cdist(approx, reps).argmin(axis=1)]
    return ExpressivenessVerdict(int(distinct.sum()), int(sep.sum()), tau, delta,
                                 float(np.mean(phi == colors)), trained, min_rate)


def train_wl_gin(g: Graph, rounds: int = 3, hidden: int = 32, epochs: int = 100, num_parts: int = 4,
                 lipschitz_weight: float = 0.01, delta: float = 0.01, lr: float = 0.01, seed: int = 0):
    """GIN trained with histories to predict round-``rounds`` WL colors from uniform features."""
    colors = wl_refine(g, None, rounds).final()
    k = int(colors.max()) + 1
    n = g.num_nodes
    x = np.ones((n, 1))
    ones = np.ones(n, dtype=bool)
    none = np.zeros(n, dtype=bool)
    ds = Dataset(g, x, LabelSet(colors, k, ones, none, none.copy()))
    spec = ModelSpec(kind="gin", in_dim=1, hidden=hidden, num_classes=k, num_layers=rounds,
                     dropout=0.0, l2=0.0, lipschitz_weight=lipschitz_weight, delta=delta,
                     max_norm=5.0, lr=lr, seed=seed, dtype="float64")
    model = GNNModel(spec)
    part = random_partition(g, num_parts, seed)
    trainer = Trainer(model, ds, part)
    # cosine decay: the last epochs barely move the weights, so the
    # histories end up close to the embeddings of the final parameters
    for e in range(epochs):
        trainer.opt.state.lr = lr * 0.5 * (1.0 + np.cos(np.pi * e / epochs))
        trainer.run_epoch()
    return model, trainer.store, trainer.props, x
