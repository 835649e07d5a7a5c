"""On-disk formats.

* ``edges.txt`` -- one ``u v`` pair per line, ``#`` comments allowed.
* ``features.bin`` -- ``b"GASF"``, u32 num_nodes, u32 dim, then float32 row-major (little-endian).
* ``labels.txt`` -- ``node_id label split`` per line, split in {train, val, test, none}.
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .exceptions import ParseError, SchemaError
from .graph import Dataset, Graph, LabelSet, build_graph

FEATURE_MAGIC = b"GASF"
SPLITS = ("train", "val", "test", "none")

__all__ = [
    "read_edge_list",
    "write_edge_list",
    "read_features",
    "write_features",
    "read_labels",
    "write_labels",
    "load_dataset",
    "save_dataset",
]


def read_edge_list(path):
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if len(tok) != 2:
                raise ParseError("expected two node ids", path, lineno)
            try:
                u, v = int(tok[0]), int(tok[1])
            except ValueError:
                raise ParseError("node ids must be integers", path, lineno) from None
            if u < 0 or v < 0:
                raise ParseError("node ids must be non-negative", path, lineno)
            edges.append((u, v))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def write_edge_list(path, g: Graph) -> None:
    e = g.edges()
    if g.is_symmetric:
        e = e[e[:, 0] <= e[:, 1]]
    with open(path, "w") as fh:
        fh.write(f"# nodes {g.num_nodes}\n")
        for u, v in e.tolist():
            fh.write(f"{u} {v}\n")


def write_features(path, x: np.ndarray) -> None:
    x = np.ascontiguousarray(x, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", x.shape[0], x.shape[1]))
        fh.write(x.tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != FEATURE_MAGIC:
        raise ParseError("missing GASF header", path)
    n, d = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * n * d
    if len(raw) != expected:
        raise ParseError(f"expected {expected} bytes for {n}x{d} features, found {len(raw)}", path)
    return np.frombuffer(raw, dtype="<f4", offset=12).reshape(n, d).astype(np.float32)


def read_labels(path, num_nodes: int) -> LabelSet:
    labels = np.full(num_nodes, -1, dtype=np.int64)
    masks = {s: np.zeros(num_nodes, dtype=bool) for s in SPLITS}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if len(tok) != 3:
                raise ParseError("expected 'node_id label split'", path, lineno)
            try:
                v, y = int(tok[0]), int(tok[1])
            except ValueError:
                raise ParseError("node id and label must be integers", path, lineno) from None
            if tok[2] not in SPLITS:
                raise ParseError(f"unknown split {tok[2]!r}", path, lineno)
            if not 0 <= v < num_nodes:
                raise SchemaError(f"{path}:{lineno}: node id {v} >= num_nodes {num_nodes}")
            labels[v] = y
            masks[tok[2]][v] = True
    known = labels >= 0
    num_classes = int(labels[known].max()) + 1 if known.any() else 0
    return LabelSet(labels, num_classes, masks["train"], masks["val"], masks["test"])


def write_labels(path, labels: LabelSet) -> None:
    with open(path, "w") as fh:
        for v, y in enumerate(labels.labels.tolist()):
            if labels.train_mask[v]:
                split = "train"
            elif labels.val_mask[v]:
                split = "val"
            elif labels.test_mask[v]:
                split = "test"
            else:
                split = "none"
            fh.write(f"{v} {y} {split}\n")


def save_dataset(directory, ds: Dataset) -> None:
    os.makedirs(directory, exist_ok=True)
    write_edge_list(os.path.join(directory, "edges.txt"), ds.graph)
    write_features(os.path.join(directory, "features.bin"), ds.features)
    write_labels(os.path.join(directory, "labels.txt"), ds.labels)


def load_dataset(directory) -> Dataset:
    """Load ``edges.txt``, ``features.bin`` and ``labels.txt`` from a directory."""
    x = read_features(os.path.join(directory, "features.bin"))
    n = x.shape[0]
    edges = read_edge_list(os.path.join(directory, "edges.txt"))
    if edges.size and edges.max() >= n:
        raise SchemaError(f"edge list references node {int(edges.max())} but features have {n} rows")
    g = build_graph(edges, n, symmetrize=True)
    labels = read_labels(os.path.join(directory, "labels.txt"), n)
    return Dataset(g, x, labels)
