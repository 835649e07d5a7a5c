"""Synthetic graph generators: planted-block SBMs and clustered runtime graphs."""
from __future__ import annotations

import math

import numpy as np

from .exceptions import InputError
from .graph import Dataset, LabelSet, build_graph

__all__ = [
    "gen_sbm",
    "gen_clustered",
    "clustered_expected_ratio",
    "inter_nodes_for_ratio",
    "make_features",
    "make_splits",
]


def _tri_pairs(k: np.ndarray):
    """Map linear indices of the strict upper triangle to ``(i, j)`` with ``i < j``."""
    j = np.floor((1 + np.sqrt(1 + 8 * k.astype(np.float64))) / 2).astype(np.int64)
    j = np.where(j * (j - 1) // 2 > k, j - 1, j)
    j = np.where((j + 1) * j // 2 <= k, j + 1, j)
    i = k - j * (j - 1) // 2
    return i, j


def make_features(labels, num_classes, mode, rng, noise=1.0, dim=None) -> np.ndarray:
    n = len(labels)
    if mode == "one-hot-noisy":
        dim = num_classes if dim is None else max(dim, num_classes)
        x = noise * rng.standard_normal((n, dim))
        x[np.arange(n), labels] += 1.0
    elif mode == "random":
        x = rng.standard_normal((n, 16 if dim is None else dim))
    else:
        raise InputError(f"unknown feature mode {mode!r}")
    return x.astype(np.float32)


def make_splits(labels, num_classes, rng, train_per_class=20, val_per_class=30):
    n = len(labels)
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    for c in range(num_classes):
        idx = rng.permutation(np.flatnonzero(labels == c))
        train[idx[:train_per_class]] = True
        val[idx[train_per_class:train_per_class + val_per_class]] = True
    test = ~(train | val)
    return train, val, test


def gen_sbm(blocks: int, nodes_per_block: int, p_in: float, p_out: float,
            feature_mode: str = "one-hot-noisy", seed: int = 0, noise: float = 1.0,
            feature_dim: int | None = None, train_per_class: int = 20,
            val_per_class: int = 30) -> Dataset:
    """Planted-partition stochastic block model; labels are block ids."""
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise InputError("probabilities must lie in [0, 1]")
    if blocks < 1 or nodes_per_block < 1:
        raise InputError("blocks and nodes_per_block must be positive")
    rng = np.random.default_rng(seed)
    m = nodes_per_block
    edges = []
    for a in range(blocks):
        for b in range(a, blocks):
            if a == b:
                total, p = m * (m - 1) // 2, p_in
            else:
                total, p = m * m, p_out
            if total == 0:
                continue
            cnt = rng.binomial(total, p)
            if cnt == 0:
                continue
            pick = np.sort(rng.choice(total, size=cnt, replace=False))
            if a == b:
                i, j = _tri_pairs(pick)
            else:
                i, j = pick // m, pick % m
            edges.append(np.stack([a * m + i, b * m + j], axis=1))
    n = blocks * m
    e = np.concatenate(edges) if edges else np.zeros((0, 2), dtype=np.int64)
    g = build_graph(e, n, symmetrize=True)
    labels = np.repeat(np.arange(blocks), m)
    x = make_features(labels, blocks, feature_mode, rng, noise, feature_dim)
    tr, va, te = make_splits(labels, blocks, rng, train_per_class, val_per_class)
    return Dataset(g, x, LabelSet(labels, blocks, tr, va, te))


def gen_clustered(parts: int, size: int, intra_deg: int, inter_nodes: int, inter_deg: int,
                  seed: int = 0, feature_mode: str = "one-hot-noisy", noise: float = 1.0,
                  feature_dim: int | None = None) -> Dataset:
    """Clusters of ``size`` nodes with controllable inter-cluster connectivity.

    Every node links to ``intra_deg`` random nodes of its own cluster.  For each
    cluster, ``inter_nodes`` nodes from other clusters each link to
    ``inter_deg`` random nodes inside it.
    """
    if intra_deg > size - 1 or inter_deg > size:
        raise InputError("degrees must not exceed cluster sizes")
    n = parts * size
    if inter_nodes > n - size:
        raise InputError("not enough nodes outside a cluster for inter_nodes")
    rng = np.random.default_rng(seed)
    src, dst = [], []
    for c in range(parts):
        base = c * size
        if intra_deg > 0:
            for u in range(size):
                nb = rng.choice(size - 1, size=intra_deg, replace=False)
                nb = nb + (nb >= u)
                src.append(np.full(intra_deg, base + u))
                dst.append(base + nb)
        if inter_nodes > 0 and inter_deg > 0:
            outside = rng.choice(n - size, size=inter_nodes, replace=False)
            outside = outside + size * (outside >= base)
            for x in outside.tolist():
                nb = rng.choice(size, size=inter_deg, replace=False)
                src.append(np.full(inter_deg, x))
                dst.append(base + nb)
    if src:
        e = np.stack([np.concatenate(src), np.concatenate(dst)], axis=1)
    else:
        e = np.zeros((0, 2), dtype=np.int64)
    g = build_graph(e, n, symmetrize=True)
    labels = np.repeat(np.arange(parts), size)
    x = make_features(labels, parts, feature_mode, rng, noise, feature_dim)
    tr, va, te = make_splits(labels, parts, rng)
    return Dataset(g, x, LabelSet(labels, parts, tr, va, te))


def clustered_expected_ratio(size: int, intra_deg: int, inter_nodes: int, inter_deg: int) -> float:
    """Expected inter/intra edge ratio of :func:`gen_clustered` (ignoring rare coincidences)."""
    q = 1.0 - (1.0 - intra_deg / (size - 1)) ** 2
    intra = size * (size - 1) / 2 * q
    return inter_nodes * inter_deg / intra if intra > 0 else math.inf


def inter_nodes_for_ratio(ratio: float, size: int, intra_deg: int, inter_deg: int) -> int:
    per_node = clustered_expected_ratio(size, intra_deg, 1, inter_deg)
    return int(round(ratio / per_node))
