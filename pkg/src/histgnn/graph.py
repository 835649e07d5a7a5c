"""Immutable CSR graphs, degree normalisation and batch-local subgraphs.

Edges are stored directed: row ``v`` of the CSR structure lists the sources
``w`` of all edges ``w -> v``, i.e. the neighbourhood ``N(v)`` that ``v``
aggregates from.  Undirected input is symmetrised at build time.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import InputError

logger = logging.getLogger(__name__)

__all__ = [
    "Graph",
    "LabelSet",
    "Dataset",
    "BatchPlan",
    "build_graph",
    "degree",
    "gcn_norm",
    "make_batch_plan",
]


@dataclass(frozen=True, eq=False)
class Graph:
    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    is_symmetric: bool = False

    def __post_init__(self):
        self.row_offsets.setflags(write=False)
        self.col_indices.setflags(write=False)

    @property
    def num_edges(self) -> int:
        return int(self.col_indices.shape[0])

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def neighbors(self, v: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[v]:self.row_offsets[v + 1]]

    def edges(self) -> np.ndarray:
        """Return an ``(E, 2)`` array of ``(source, destination)`` pairs."""
        dst = np.repeat(np.arange(self.num_nodes), self.degrees())
        return np.stack([self.col_indices, dst], axis=1)

    def adjacency(self, dtype=np.float64) -> sp.csr_matrix:
        """Sparse matrix ``A`` with ``A[v, w] = 1`` iff ``w in N(v)``."""
        data = np.ones(self.num_edges, dtype=dtype)
        return sp.csr_matrix(
            (data, self.col_indices, self.row_offsets),
            shape=(self.num_nodes, self.num_nodes),
        )

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
        )

    def __hash__(self):
        return hash((self.num_nodes, self.num_edges))

    def __repr__(self):
        return f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges})"


@dataclass(frozen=True)
class LabelSet:
    labels: np.ndarray
    num_classes: int
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray

    def __post_init__(self):
        masks = [self.train_mask, self.val_mask, self.test_mask]
        n = self.labels.shape[0]
        for m in masks:
            if m.shape != (n,):
                raise InputError("mask length must equal the number of labels")
        if np.any(self.train_mask & self.val_mask) or np.any(
            self.train_mask & self.test_mask
        ) or np.any(self.val_mask & self.test_mask):
            raise InputError("train/val/test masks must be disjoint")
        used = self.train_mask | self.val_mask | self.test_mask
        if np.any((self.labels[used] < 0) | (self.labels[used] >= self.num_classes)):
            raise InputError("labels on masked nodes must lie in [0, num_classes)")


@dataclass(frozen=True)
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: LabelSet

    def __post_init__(self):
        n = self.graph.num_nodes
        if self.features.shape[0] != n or self.labels.labels.shape[0] != n:
            raise InputError("graph, features and labels disagree on node count")
        if self.features.ndim != 2 or not np.all(np.isfinite(self.features)):
            raise InputError("features must be a finite 2-D matrix")


def build_graph(edges, num_nodes: int, symmetrize: bool = True) -> Graph:
    """Build a CSR graph from ``(source, destination)`` pairs.

    Duplicate edges are dropped; self-loops are kept as given.
    """
    num_nodes = int(num_nodes)
    if num_nodes < 0:
        raise InputError("num_nodes must be non-negative")
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError("edges must be a list of (u, v) pairs")
    if arr.size and (arr.min() < 0 or arr.max() >= num_nodes):
        raise InputError(f"edge endpoint out of range for num_nodes={num_nodes}")
    src, dst = arr[:, 0], arr[:, 1]
    if symmetrize:
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
    key = np.unique(dst * max(num_nodes, 1) + src)
    if len(key) < len(src):
        logger.debug("dropped %d duplicate directed edges", len(src) - len(key))
    dst_u = key // max(num_nodes, 1)
    src_u = key % max(num_nodes, 1)
    counts = np.bincount(dst_u, minlength=num_nodes)
    row_offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=row_offsets[1:])
    g = Graph(num_nodes, row_offsets, src_u.astype(np.int64), bool(symmetrize))
    if not symmetrize:
        object.__setattr__(g, "is_symmetric", _check_symmetric(g))
    return g


def _check_symmetric(g: Graph) -> bool:
    a = g.adjacency()
    return (a != a.T).nnz == 0


def degree(g: Graph, v: int) -> int:
    if not 0 <= v < g.num_nodes:
        raise InputError(f"node {v} out of range")
    return int(g.row_offsets[v + 1] - g.row_offsets[v])


def gcn_norm(g: Graph, w: int, v: int) -> float:
    """Symmetric normalisation ``1 / (sqrt(deg(w)+1) * sqrt(deg(v)+1))``."""
    return 1.0 / (np.sqrt(degree(g, w) + 1.0) * np.sqrt(degree(g, v) + 1.0))


@dataclass(frozen=True, eq=False)
class BatchPlan:
    """Batch nodes, their 1-hop extension and the batch-local subgraph.

    Local indices are positions in ``extended_nodes``.  ``local_graph`` only
    contains edges whose destination is a batch node.
    """

    batch_nodes: np.ndarray
    extended_nodes: np.ndarray
    local_graph: Graph
    is_halo: np.ndarray
    global_degrees: np.ndarray = field(repr=False)

    @property
    def batch_pos(self) -> np.ndarray:
        return np.flatnonzero(~self.is_halo)

    @property
    def halo_pos(self) -> np.ndarray:
        return np.flatnonzero(self.is_halo)

    @property
    def halo_nodes(self) -> np.ndarray:
        return self.extended_nodes[self.is_halo]

    @property
    def num_halo(self) -> int:
        return int(self.is_halo.sum())

    def global_to_local(self, nodes) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=np.int64)
        pos = np.searchsorted(self.extended_nodes, nodes)
        pos = np.clip(pos, 0, len(self.extended_nodes) - 1)
        if not np.array_equal(self.extended_nodes[pos], nodes):
            raise InputError("node is not part of the extended batch")
        return pos


def make_batch_plan(g: Graph, batch_nodes) -> BatchPlan:
    batch = np.asarray(batch_nodes, dtype=np.int64)
    if batch.size == 0:
        raise InputError("batch must contain at least one node")
    if np.any(np.diff(batch) <= 0):
        raise InputError("batch nodes must be sorted and unique")
    if batch[0] < 0 or batch[-1] >= g.num_nodes:
        raise InputError("batch node out of range")

    starts, ends = g.row_offsets[batch], g.row_offsets[batch + 1]
    counts = ends - starts
    idx = np.repeat(starts - np.cumsum(np.concatenate([[0], counts[:-1]])), counts)
    idx = idx + np.arange(counts.sum())
    srcs = g.col_indices[idx]
    extended = np.union1d(batch, srcs)
    is_halo = ~np.isin(extended, batch, assume_unique=True)

    local_src = np.searchsorted(extended, srcs)
    batch_local = np.searchsorted(extended, batch)
    local_counts = np.zeros(len(extended), dtype=np.int64)
    local_counts[batch_local] = counts
    row_offsets = np.zeros(len(extended) + 1, dtype=np.int64)
    np.cumsum(local_counts, out=row_offsets[1:])
    # srcs are already grouped by destination in batch order, and batch order
    # equals local order because both arrays are sorted
    local = Graph(len(extended), row_offsets, local_src.astype(np.int64), False)
    return BatchPlan(batch, extended, local, is_halo, g.degrees()[extended])
