"""Host-resident historical embeddings with push/pull and asynchronous prefetch."""
from __future__ import annotations

import struct
import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, ParseError, StateError

HISTORY_MAGIC = b"GASH"

__all__ = ["HistoryStore", "PrefetchHandle", "StalenessReport", "measure_staleness"]


@dataclass
class StalenessReport:
    eps_max: list
    eps_mean: list
    age_max: list
    age_mean: list


class PrefetchHandle:
    def __init__(self, futures: dict):
        self._futures = futures

    @property
    def layers(self):
        return sorted(self._futures)

    def done(self) -> bool:
        return all(f.done() for f in self._futures.values())


class HistoryStore:
    """One ``num_nodes x dim`` matrix per hidden layer ``1 .. L-1``.

    Rows start at zero.  Reads and writes of a row are serialised by a lock,
    so a pull sees either the old or the new row, never a mix.
    """

    def __init__(self, num_nodes: int, dims, dtype=np.float32):
        self.num_nodes = int(num_nodes)
        self.dims = [int(d) for d in dims]
        self.dtype = np.dtype(dtype)
        self._emb = [np.zeros((self.num_nodes, d), dtype=self.dtype) for d in self.dims]
        self._last_push = [np.full(self.num_nodes, -1, dtype=np.int64) for _ in self.dims]
        self.step = 0
        self.num_pushes = 0
        self._lock = threading.Lock()
        self._executor = None

    @property
    def num_layers(self) -> int:
        return len(self.dims)

    def _check_layer(self, layer: int):
        if not 1 <= layer <= self.num_layers:
            raise InputError(f"history layer {layer} outside [1, {self.num_layers}]")

    def push(self, layer: int, node_ids, embeddings) -> None:
        self._check_layer(layer)
        ids = np.asarray(node_ids, dtype=np.int64)
        emb = np.asarray(embeddings)
        if emb.shape != (len(ids), self.dims[layer - 1]):
            raise InputError(f"push of shape {emb.shape} into layer of width {self.dims[layer - 1]}")
        if not np.all(np.isfinite(emb)):
            raise InputError("refusing to store non-finite embeddings")
        with self._lock:
            self._emb[layer - 1][ids] = emb
            self._last_push[layer - 1][ids] = self.step
            self.num_pushes += 1

    def pull(self, layer: int, node_ids) -> np.ndarray:
        self._check_layer(layer)
        ids = np.asarray(node_ids, dtype=np.int64)
        with self._lock:
            return self._emb[layer - 1][ids]

    def advance(self) -> int:
        self.step += 1
        return self.step

    def matrix(self, layer: int) -> np.ndarray:
        """Copy of a full history matrix."""
        self._check_layer(layer)
        with self._lock:
            return self._emb[layer - 1].copy()

    def last_push_step(self, layer: int) -> np.ndarray:
        self._check_layer(layer)
        return self._last_push[layer - 1].copy()

    def fill(self, layer: int, values) -> None:
        self.push(layer, np.arange(self.num_nodes), values)

    def reset(self) -> None:
        with self._lock:
            for m in self._emb:
                m[:] = 0
            for a in self._last_push:
                a[:] = -1
            self.step = 0

    # -- asynchronous access -------------------------------------------------

    def _worker(self) -> ThreadPoolExecutor:
        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=1, thread_name_prefix="history-prefetch")
        return self._executor

    def prefetch_begin(self, plan, layers=None) -> PrefetchHandle:
        """Start pulling the halo rows of ``plan`` for every history layer.

        Results equal a synchronous pull at the point where the batch reads
        them, provided no push in between touches the batch's halo rows.
        Under a disjoint partition schedule a batch only pushes its own rows.
        """
        layers = list(range(1, self.num_layers + 1)) if layers is None else list(layers)
        for layer in layers:
            self._check_layer(layer)
        futures = {layer: Future() for layer in layers}
        halos = plan.halo_nodes
        if len(halos) == 0:
            for layer, fut in futures.items():
                fut.set_result(np.zeros((0, self.dims[layer - 1]), dtype=self.dtype))
            return PrefetchHandle(futures)

        def job():
            for layer, fut in futures.items():
                try:
                    fut.set_result(self.pull(layer, halos))
                except BaseException as exc:  # surfaced in prefetch_wait
                    fut.set_exception(exc)

        self._worker().submit(job)
        return PrefetchHandle(futures)

    def prefetch_wait(self, handle: PrefetchHandle, layer: int) -> np.ndarray:
        fut = handle._futures.get(layer)
        if fut is None:
            raise StateError(f"layer {layer} was not requested by this prefetch")
        return fut.result()

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __del__(self):
        ex = getattr(self, "_executor", None)
        if ex is not None:
            ex.shutdown(wait=False)

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        if len(set(self.dims)) > 1:
            raise InputError("checkpoint format requires equal widths for all layers")
        dim = self.dims[0] if self.dims else 0
        with open(path, "wb") as fh:
            fh.write(HISTORY_MAGIC)
            fh.write(struct.pack("<III", self.num_layers, self.num_nodes, dim))
            with self._lock:
                for m in self._emb:
                    fh.write(np.ascontiguousarray(m, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path, dtype=np.float32) -> "HistoryStore":
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) < 16 or raw[:4] != HISTORY_MAGIC:
            raise ParseError("missing GASH header", path)
        layers, nodes, dim = struct.unpack("<III", raw[4:16])
        expected = 16 + 4 * layers * nodes * dim
        if len(raw) != expected:
            raise ParseError(f"expected {expected} bytes, found {len(raw)}", path)
        store = cls(nodes, [dim] * layers, dtype)
        data = np.frombuffer(raw, dtype="<f4", offset=16).reshape(layers, nodes, dim)
        for i in range(layers):
            store._emb[i][:] = data[i]
        return store


def measure_staleness(store: HistoryStore, exact, node_ids=None) -> StalenessReport:
    """Row-norm distance between stored and exact embeddings, per layer.

    ``exact`` holds one ``num_nodes x dim`` matrix per history layer, computed
    with the current parameters.
    """
    if len(exact) != store.num_layers:
        raise InputError("need one exact matrix per history layer")
    ids = np.arange(store.num_nodes) if node_ids is None else np.asarray(node_ids, dtype=np.int64)
    eps_max, eps_mean, age_max, age_mean = [], [], [], []
    for layer, ref in enumerate(exact, 1):
        ref = np.asarray(ref)
        if ref.shape != (store.num_nodes, store.dims[layer - 1]):
            raise InputError(f"exact embeddings for layer {layer} have shape {ref.shape}")
        if len(ids) == 0:
            eps_max.append(0.0)
            eps_mean.append(0.0)
            age_max.append(0)
            age_mean.append(0.0)
            continue
        diff = store.pull(layer, ids).astype(np.float64) - ref[ids].astype(np.float64)
        norms = np.linalg.norm(diff, axis=1)
        ages = store.step - store.last_push_step(layer)[ids]
        eps_max.append(float(norms.max()))
        eps_mean.append(float(norms.mean()))
        age_max.append(int(ages.max()))
        age_mean.append(float(ages.mean()))
    return StalenessReport(eps_max, eps_mean, age_max, age_mean)
