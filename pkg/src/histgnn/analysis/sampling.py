"""Neighbour sampling and a brute-force search for WL-inconsistent sampled outputs."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import networkx as nx
import numpy as np
import scipy.sparse as sp

from ..exceptions import InputError
from ..graph import Graph, build_graph
from .wl import wl_refine

__all__ = ["sampled_adjacency", "sum_aggregate", "Witness", "prop3_counterexample_search",
           "gas_witness_outputs"]


def sampled_adjacency(g: Graph, sample_size: int, seed=0) -> sp.csr_matrix:
    """Row ``v`` keeps ``min(sample_size, deg v)`` uniform neighbours, each weighted ``|N(v)| / |Ñ(v)|``."""
    if sample_size < 1:
        raise InputError("sample_size must be at least 1")
    rng = np.random.default_rng(seed)
    rows, cols, vals = [], [], []
    for v in range(g.num_nodes):
        nb = g.neighbors(v)
        d = len(nb)
        if d == 0:
            continue
        k = min(sample_size, d)
        pick = nb if k == d else np.sort(rng.choice(nb, size=k, replace=False))
        rows.append(np.full(k, v))
        cols.append(pick)
        vals.append(np.full(k, d / k))
    if not rows:
        return sp.csr_matrix((g.num_nodes, g.num_nodes))
    m = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(g.num_nodes, g.num_nodes))
    m.sort_indices()
    return m


def sum_aggregate(adj, x) -> np.ndarray:
    """One sum-aggregation layer with identity update: ``x_v + sum_w a_vw x_w``."""
    return np.asarray(x) + adj @ np.asarray(x)


@dataclass
class Witness:
    graph: Graph
    colors: np.ndarray
    v: int
    w: int
    seed: int
    sample_size: int
    outputs: np.ndarray  # sampled-aggregation outputs of all nodes

    def features(self) -> np.ndarray:
        k = int(self.colors.max()) + 1
        return np.eye(k)[self.colors]


def _atlas_graphs(max_nodes: int):
    for nxg in nx.graph_atlas_g():
        n = nxg.number_of_nodes()
        if n == 0 or n > max_nodes:
            continue
        if not nx.is_connected(nxg):
            continue
        yield build_graph(np.array(list(nxg.edges()), dtype=np.int64).reshape(-1, 2), n)


def prop3_counterexample_search(max_nodes: int = 6, sample_size: int = 1, seeds=range(16),
                                max_colors: int = 2) -> Witness | None:
    """Smallest colored connected graph on which sampled sum aggregation splits a WL class.

    Graphs are enumerated by size, then every coloring with ``max_colors``
    colors, then sampling seeds.  Returns ``None`` if nothing is found.
    """
    if max_nodes > 8:
        raise InputError("exhaustive search is limited to 8 nodes")
    graphs = sorted(_atlas_graphs(max_nodes), key=lambda g: (g.num_nodes, g.num_edges))
    for g in graphs:
        n = g.num_nodes
        for colors in itertools.product(range(max_colors), repeat=n):
            colors = np.array(colors)
            if colors[0] != 0:
                continue  # color relabelings are redundant
            wl = wl_refine(g, colors, until_stable=True).final()
            x = np.eye(max_colors)[colors]
            pairs = [(a, b) for a in range(n) for b in range(a + 1, n) if wl[a] == wl[b]]
            if not pairs:
                continue
            for seed in seeds:
                out = sum_aggregate(sampled_adjacency(g, sample_size, seed), x)
                for a, b in pairs:
                    if not np.allclose(out[a], out[b]):
                        return Witness(g, colors, a, b, int(seed), sample_size, out)
    return None


def gas_witness_outputs(witness: Witness, num_layers: int = 2, hidden: int = 8, seed: int = 0,
                        num_parts: int = 2):
    """Frozen random GIN trained with histories over all edges; returns final outputs after ``L`` passes."""
    from ..graph import Dataset, LabelSet
    from ..history import HistoryStore
    from ..model import GNNModel, ModelSpec
    from ..partition import random_partition
    from ..trainer import gas_pass, prepare_batches

    g = witness.graph
    x = witness.features()
    n = g.num_nodes
    flags = np.zeros(n, dtype=bool)
    ds = Dataset(g, x, LabelSet(witness.colors, x.shape[1], flags, flags.copy(), flags.copy()))
    spec = ModelSpec(kind="gin", in_dim=x.shape[1], hidden=hidden, num_classes=hidden,
                     num_layers=num_layers, dropout=0.0, dtype="float64", seed=seed)
    model = GNNModel(spec)
    part = random_partition(g, min(num_parts, n), seed)
    props = prepare_batches(g, part, np.float64)
    store = HistoryStore(n, model.history_dims, dtype=np.float64)
    out = None
    for _ in range(num_layers):
        out = gas_pass(model, ds, props, store)
    return out
