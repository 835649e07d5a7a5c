"""Node partitioning for mini-batch selection.

``cluster_partition`` is a multilevel scheme in the spirit of METIS:

1. coarsen by repeated heavy-edge matching,
2. grow ``B`` regions greedily on the coarsest graph (best of several trials),
3. project back level by level, running a boundary refinement pass at each level.

Refinement is greedy and deterministic: boundary nodes are visited in
ascending id order and moved to the neighbouring part with the largest
positive cut reduction, subject to the balance bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import InputError
from .graph import Graph

__all__ = [
    "Partitioning",
    "random_partition",
    "cluster_partition",
    "inter_intra_ratio",
    "edge_cut",
    "read_partition",
    "write_partition",
]

BALANCE_TOLERANCE = 0.10


@dataclass(frozen=True, eq=False)
class Partitioning:
    num_parts: int
    assignment: np.ndarray
    parts: tuple

    @classmethod
    def from_assignment(cls, assignment, num_parts: int | None = None) -> "Partitioning":
        assignment = np.asarray(assignment, dtype=np.int64)
        if num_parts is None:
            num_parts = int(assignment.max()) + 1 if assignment.size else 0
        if assignment.size and (assignment.min() < 0 or assignment.max() >= num_parts):
            raise InputError("part id out of range")
        order = np.argsort(assignment, kind="stable")
        bounds = np.searchsorted(assignment[order], np.arange(num_parts + 1))
        parts = tuple(np.sort(order[bounds[i]:bounds[i + 1]]) for i in range(num_parts))
        if any(len(p) == 0 for p in parts):
            raise InputError("every part must be non-empty")
        return cls(int(num_parts), assignment, parts)

    def sizes(self) -> np.ndarray:
        return np.array([len(p) for p in self.parts])


def _check_parts(g: Graph, num_parts: int):
    if num_parts < 1:
        raise InputError("num_parts must be at least 1")
    if num_parts > g.num_nodes:
        raise InputError(f"num_parts={num_parts} exceeds num_nodes={g.num_nodes}")


def random_partition(g: Graph, num_parts: int, seed: int = 0) -> Partitioning:
    """Uniformly random balanced partition (sizes differ by at most one)."""
    _check_parts(g, num_parts)
    perm = np.random.default_rng(seed).permutation(g.num_nodes)
    assignment = np.empty(g.num_nodes, dtype=np.int64)
    assignment[perm] = np.arange(g.num_nodes) % num_parts
    return Partitioning.from_assignment(assignment, num_parts)


def inter_intra_ratio(g: Graph, p: Partitioning) -> float:
    """Edges crossing parts divided by edges inside parts (``inf`` if no intra edges)."""
    e = g.edges()
    same = p.assignment[e[:, 0]] == p.assignment[e[:, 1]]
    intra = int(same.sum())
    inter = int(len(same) - intra)
    if intra == 0:
        return math.inf if inter else 0.0
    return inter / intra


def edge_cut(g: Graph, p: Partitioning) -> int:
    """Number of undirected edges whose endpoints lie in different parts."""
    e = g.edges()
    e = e[e[:, 0] < e[:, 1]] if g.is_symmetric else e
    return int(np.sum(p.assignment[e[:, 0]] != p.assignment[e[:, 1]]))


# --------------------------------------------------------------------------
# multilevel machinery

class _Level:
    """Weighted undirected graph without self-loops, adjacency as Python lists."""

    def __init__(self, adj: sp.csr_matrix, vwgt: np.ndarray):
        self.adj = adj
        self.vwgt = vwgt
        self.n = adj.shape[0]
        ptr, idx, dat = adj.indptr, adj.indices, adj.data
        self.nbrs = [idx[ptr[i]:ptr[i + 1]].tolist() for i in range(self.n)]
        self.wts = [dat[ptr[i]:ptr[i + 1]].tolist() for i in range(self.n)]


def _undirected(g: Graph) -> sp.csr_matrix:
    a = g.adjacency(np.float64)
    a = ((a + a.T) > 0).astype(np.float64)
    a.setdiag(0)
    a.eliminate_zeros()
    a.sort_indices()
    return a.tocsr()


def _heavy_edge_matching(lv: _Level, rng, max_vwgt: float):
    match = np.full(lv.n, -1, dtype=np.int64)
    vw = lv.vwgt
    for u in rng.permutation(lv.n).tolist():
        if match[u] >= 0:
            continue
        best, best_w = u, -1.0
        for w, wt in zip(lv.nbrs[u], lv.wts[u]):
            # ascending neighbour ids, strict > keeps the lowest id on ties
            if match[w] < 0 and w != u and wt > best_w and vw[u] + vw[w] <= max_vwgt:
                best, best_w = w, wt
        match[u] = best
        match[best] = u
    cmap = np.full(lv.n, -1, dtype=np.int64)
    nc = 0
    for u in range(lv.n):
        if cmap[u] < 0:
            cmap[u] = nc
            cmap[match[u]] = nc
            nc += 1
    return cmap, nc


def _contract(lv: _Level, cmap: np.ndarray, nc: int) -> _Level:
    p = sp.csr_matrix((np.ones(lv.n), (np.arange(lv.n), cmap)), shape=(lv.n, nc))
    adj = (p.T @ lv.adj @ p).tocsr()
    adj.setdiag(0)
    adj.eliminate_zeros()
    adj.sort_indices()
    vw = np.asarray(p.T @ lv.vwgt).ravel()
    return _Level(adj, vw)


def _cut(lv: _Level, part: np.ndarray) -> float:
    coo = lv.adj.tocoo()
    return float(coo.data[part[coo.row] != part[coo.col]].sum()) / 2.0


def _grow(lv: _Level, k: int, rng) -> np.ndarray:
    """Greedy region growing: each part absorbs its most strongly attached frontier node."""
    part = np.full(lv.n, -1, dtype=np.int64)
    remaining = float(lv.vwgt.sum())
    for p in range(k - 1):
        target = remaining / (k - p)
        free = np.flatnonzero(part < 0)
        seed = int(free[rng.integers(len(free))])
        conn = {seed: 0.0}
        weight = 0.0
        while weight < target and conn:
            u = max(conn, key=lambda x: (conn[x], -x))
            del conn[u]
            if weight > 0 and weight + lv.vwgt[u] > target * 1.05:
                continue
            part[u] = p
            weight += lv.vwgt[u]
            for w, wt in zip(lv.nbrs[u], lv.wts[u]):
                if part[w] < 0:
                    conn[w] = conn.get(w, 0.0) + wt
            if not conn and weight < target:
                free = np.flatnonzero(part < 0)
                if len(free) > 1:
                    nxt = int(free[rng.integers(len(free))])
                    conn[nxt] = 0.0
        remaining -= weight
    part[part < 0] = k - 1
    return part


def _refine(lv: _Level, part: np.ndarray, k: int, max_pw: float, passes: int = 8) -> np.ndarray:
    pw = np.bincount(part, weights=lv.vwgt, minlength=k)
    counts = np.bincount(part, minlength=k)
    for _ in range(passes):
        moved = 0
        for u in range(lv.n):
            own = int(part[u])
            if counts[own] <= 1:
                continue
            ext = {}
            for w, wt in zip(lv.nbrs[u], lv.wts[u]):
                q = int(part[w])
                ext[q] = ext.get(q, 0.0) + wt
            if not ext or (len(ext) == 1 and own in ext):
                continue
            internal = ext.get(own, 0.0)
            vu = lv.vwgt[u]
            best_q, best_gain = -1, 0.0
            for q in sorted(ext):
                if q == own or pw[q] + vu > max_pw:
                    continue
                gain = ext[q] - internal
                better_balance = gain == 0.0 and pw[q] + vu < pw[own]
                if gain > best_gain or (best_q < 0 and better_balance):
                    best_q, best_gain = q, gain
            if best_q >= 0:
                part[u] = best_q
                pw[own] -= vu
                pw[best_q] += vu
                counts[own] -= 1
                counts[best_q] += 1
                moved += 1
        if moved == 0:
            break
    return part


def _rebalance(lv: _Level, part: np.ndarray, k: int, max_pw: float) -> np.ndarray:
    """Move nodes out of overweight parts and into empty parts."""
    pw = np.bincount(part, weights=lv.vwgt, minlength=k)
    counts = np.bincount(part, minlength=k)
    for _ in range(lv.n * 2):
        over = np.flatnonzero(pw > max_pw + 1e-9)
        empty = np.flatnonzero(counts == 0)
        if len(over) == 0 and len(empty) == 0:
            break
        src = int(over[0]) if len(over) else int(np.argmax(counts))
        members = np.flatnonzero(part == src)
        best = None
        for u in members.tolist():
            ext = {}
            for w, wt in zip(lv.nbrs[u], lv.wts[u]):
                q = int(part[w])
                ext[q] = ext.get(q, 0.0) + wt
            internal = ext.get(src, 0.0)
            targets = empty.tolist() if len(empty) else [
                q for q in range(k) if q != src and pw[q] + lv.vwgt[u] <= max_pw
            ]
            for q in targets:
                gain = ext.get(q, 0.0) - internal
                cand = (gain, -pw[q], -u)
                if best is None or cand > best[0]:
                    best = (cand, u, q)
        if best is None:
            break
        _, u, q = best
        part[u] = q
        pw[src] -= lv.vwgt[u]
        pw[q] += lv.vwgt[u]
        counts[src] -= 1
        counts[q] += 1
    return part


def cluster_partition(g: Graph, num_parts: int, seed: int = 0, trials: int = 8) -> Partitioning:
    """Partition minimising the number of inter-part edges.

    Balance: every part holds at most ``1.1 * ceil(n / num_parts)`` nodes.
    """
    _check_parts(g, num_parts)
    n, k = g.num_nodes, num_parts
    if k == 1:
        return Partitioning.from_assignment(np.zeros(n, dtype=np.int64), 1)
    rng = np.random.default_rng(seed)
    max_pw = math.floor((1.0 + BALANCE_TOLERANCE) * math.ceil(n / k))

    levels = [_Level(_undirected(g), np.ones(n))]
    maps = []
    coarsen_to = max(20 * k, 60)
    max_vwgt = max(1.5 * n / coarsen_to, 1.0)
    while levels[-1].n > coarsen_to:
        cmap, nc = _heavy_edge_matching(levels[-1], rng, max_vwgt)
        if nc > 0.95 * levels[-1].n:
            break
        maps.append(cmap)
        levels.append(_contract(levels[-1], cmap, nc))

    coarse = levels[-1]
    best, best_key = None, None
    for _ in range(trials):
        part = _grow(coarse, k, rng)
        part = _refine(coarse, part, k, max_pw)
        part = _rebalance(coarse, part, k, max_pw)
        pw = np.bincount(part, weights=coarse.vwgt, minlength=k)
        key = (bool(pw.max() > max_pw), _cut(coarse, part))
        if best_key is None or key < best_key:
            best, best_key = part.copy(), key

    part = best
    for lv, cmap in zip(reversed(levels[:-1]), reversed(maps)):
        part = part[cmap]
        part = _refine(lv, part, k, max_pw)
    part = _rebalance(levels[0], part, k, max_pw)
    return Partitioning.from_assignment(part, k)


def write_partition(path, p: Partitioning) -> None:
    with open(path, "w") as fh:
        for v, q in enumerate(p.assignment.tolist()):
            fh.write(f"{v} {q}\n")


def read_partition(path, num_nodes: int | None = None) -> Partitioning:
    from .exceptions import ParseError

    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if len(tok) != 2:
                raise ParseError("expected 'node_id part_id'", path, lineno)
            try:
                pairs.append((int(tok[0]), int(tok[1])))
            except ValueError:
                raise ParseError("non-integer field", path, lineno) from None
    n = num_nodes if num_nodes is not None else len(pairs)
    assignment = np.full(n, -1, dtype=np.int64)
    for v, q in pairs:
        if not 0 <= v < n:
            raise ParseError(f"node id {v} out of range", path)
        assignment[v] = q
    if np.any(assignment < 0):
        raise InputError("partition file does not cover every node")
    return Partitioning.from_assignment(assignment)
