"""Mini-batch execution with historical embeddings, and the exact full-batch reference."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError, StateError
from .graph import Dataset, Graph, make_batch_plan
from .history import HistoryStore, measure_staleness
from .layers import Propagation
from .model import GNNModel
from .nn import (
    Adam,
    Tape,
    Tensor,
    accuracy,
    add,
    backward,
    clip_grad_norm,
    l2_penalty,
    scale,
    scatter_rows,
    softmax_cross_entropy,
)
from .partition import Partitioning

log = logging.getLogger(__name__)

__all__ = [
    "EpochStats",
    "TrainReport",
    "Trainer",
    "Predictions",
    "prepare_batches",
    "full_batch_epoch",
    "gas_epoch",
    "gas_pass",
    "fixed_exchange",
    "full_forward",
    "infer_from_history",
    "warmup_histories",
    "memory_probe",
    "evaluate",
]


@dataclass
class EpochStats:
    """Instrumentation of one epoch."""

    loss: float = 0.0
    peak_floats: list = field(default_factory=list)
    optimizer_steps: int = 0
    edges_per_layer: list = field(default_factory=list)
    batch_order: list = field(default_factory=list)
    wall_time: float = 0.0


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)

    def append(self, row: dict) -> None:
        self.rows.append(row)

    def column(self, name):
        return [r[name] for r in self.rows]

    def to_csv(self, path, num_history_layers: int) -> None:
        cols = ["epoch", "train_acc", "val_acc", "test_acc", "loss", "peak_floats"]
        cols += [f"eps_max_l{i}" for i in range(1, num_history_layers + 1)]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for r in self.rows:
                vals = [str(r["epoch"])]
                vals += [f"{r[c]:.6f}" for c in ("train_acc", "val_acc", "test_acc", "loss")]
                vals.append(str(int(r["peak_floats"])))
                eps = r.get("eps_max") or [float("nan")] * num_history_layers
                vals += [f"{e:.6g}" for e in eps]
                fh.write(",".join(vals) + "\n")


@dataclass
class Predictions:
    logits: np.ndarray
    stale: bool

    @property
    def labels(self) -> np.ndarray:
        return self.logits.argmax(axis=1)


def prepare_batches(graph: Graph, partitioning: Partitioning, dtype=np.float32) -> list:
    return [Propagation(make_batch_plan(graph, part), dtype) for part in partitioning.parts]


def _full_prop(graph: Graph, dtype) -> Propagation:
    return Propagation(make_batch_plan(graph, np.arange(graph.num_nodes)), dtype)


def _loss(model: GNNModel, res, labels, mask) -> Tensor:
    spec = model.spec
    terms = []
    if mask.any():
        terms.append(softmax_cross_entropy(res.logits, labels, mask))
    if spec.l2 > 0:
        terms.append(l2_penalty(model.parameters(), spec.l2))
    for t in res.reg_terms:
        terms.append(scale(t, spec.lipschitz_weight))
    if not terms:
        return Tensor(np.array(0.0))
    total = terms[0]
    for t in terms[1:]:
        total = add(total, t)
    return total


def _step(model: GNNModel, opt: Adam, tape: Tape, loss: Tensor) -> None:
    opt.zero_grad()
    backward(tape, loss)
    if model.spec.max_norm is not None:
        clip_grad_norm(opt.params, model.spec.max_norm)
    opt.step()


def full_batch_epoch(model: GNNModel, dataset: Dataset, opt: Adam, epoch: int = 0,
                     prop: Propagation | None = None, stats: EpochStats | None = None) -> float:
    """One optimizer step on all training nodes with exact layers.  Returns the loss."""
    g, labels = dataset.graph, dataset.labels
    prop = prop or _full_prop(g, model.dtype)
    t0 = time.perf_counter()
    with Tape() as tape:
        res = model.forward(dataset.features, prop, training=True, key=(model.spec.seed, epoch),
                            reg_seed=(model.spec.seed, epoch, 0))
        loss = _loss(model, res, labels, labels.train_mask)
    _step(model, opt, tape, loss)
    if stats is not None:
        stats.loss = float(loss.item())
        stats.peak_floats.append(tape.peak_floats)
        stats.optimizer_steps += 1
        stats.edges_per_layer = [prop.num_messages] * model.num_layers
        stats.batch_order = [0]
        stats.wall_time = time.perf_counter() - t0
    return float(loss.item())


def _make_exchange(store: HistoryStore, prop: Propagation, handle=None):
    plan = prop.plan
    halo_pos = plan.halo_pos
    halos = plan.halo_nodes

    def exchange(layer: int, out: Tensor) -> Tensor:
        store.push(layer, plan.batch_nodes, out.value)
        if handle is not None:
            pulled = store.prefetch_wait(handle, layer)
        else:
            pulled = store.pull(layer, halos)
        pieces = [(prop.batch_pos, out)]
        if len(halos):
            pieces.append((halo_pos, Tensor(pulled.astype(out.dtype, copy=False))))
        return scatter_rows(prop.num_ext, pieces)

    return exchange


def fixed_exchange(prop: Propagation, halo_values):
    """Exchange that serves halo rows from ``halo_values[layer]`` (full ``n x d`` matrices) without pushing."""
    halos, halo_pos = prop.plan.halo_nodes, prop.plan.halo_pos

    def exchange(layer: int, out: Tensor) -> Tensor:
        pieces = [(prop.batch_pos, out)]
        if len(halos):
            rows = np.asarray(halo_values[layer - 1])[halos]
            pieces.append((halo_pos, Tensor(rows.astype(out.dtype, copy=False))))
        return scatter_rows(prop.num_ext, pieces)

    return exchange


def _check_store(model: GNNModel, store: HistoryStore):
    if store.num_layers != model.num_layers - 1 or store.dims != model.history_dims:
        raise StateError(
            f"history store has layers {store.dims}, model needs {model.history_dims}"
        )


def gas_epoch(model: GNNModel, dataset: Dataset, partitioning: Partitioning, store: HistoryStore,
              opt: Adam, epoch: int = 0, props: list | None = None, prefetch: bool = False,
              stats: EpochStats | None = None, shuffle: bool = True) -> float:
    """One pass over all partitions, one optimizer step per batch.  Returns the mean batch loss."""
    _check_store(model, store)
    g, labels = dataset.graph, dataset.labels
    props = props or prepare_batches(g, partitioning, model.dtype)
    if len(props) != partitioning.num_parts:
        raise InputError("need one batch plan per partition")
    order = np.arange(len(props))
    if shuffle and len(props) > 1:
        order = np.random.default_rng([model.spec.seed, epoch]).permutation(len(props))
    t0 = time.perf_counter()
    edges = np.zeros(model.num_layers, dtype=np.int64)
    losses = []
    handles = {}
    if prefetch and store.num_layers:
        handles[int(order[0])] = store.prefetch_begin(props[order[0]].plan)
    for pos, b in enumerate(order.tolist()):
        prop = props[b]
        handle = handles.pop(b, None)
        exchange = _make_exchange(store, prop, handle)
        ext = prop.plan.extended_nodes
        mask = labels.train_mask[prop.plan.batch_nodes]
        with Tape() as tape:
            res = model.forward(dataset.features[ext], prop, exchange, training=True,
                                key=(model.spec.seed, epoch), reg_seed=(model.spec.seed, epoch, b))
            loss = _loss(model, res, labels.labels[prop.plan.batch_nodes], mask)
        # every push of this batch happened during the forward pass, so the
        # next batch's halo transfer can overlap backward and the update
        if prefetch and store.num_layers and pos + 1 < len(order):
            nb = int(order[pos + 1])
            handles[nb] = store.prefetch_begin(props[nb].plan)
        _step(model, opt, tape, loss)
        store.advance()
        edges += prop.num_messages
        losses.append(float(loss.item()))
        if stats is not None:
            stats.peak_floats.append(tape.peak_floats)
    if stats is not None:
        stats.loss = float(np.mean(losses))
        stats.optimizer_steps += len(order)
        stats.edges_per_layer = edges.tolist()
        stats.batch_order = order.tolist()
        stats.wall_time = time.perf_counter() - t0
    return float(np.mean(losses))


def gas_pass(model: GNNModel, dataset: Dataset, props: list, store: HistoryStore) -> np.ndarray:
    """Evaluation-mode pass over all batches in order: pushes histories, no optimizer step.

    Returns the output rows of every node.
    """
    _check_store(model, store)
    n = dataset.graph.num_nodes
    out = None
    for prop in props:
        ext = prop.plan.extended_nodes
        res = model.forward(dataset.features[ext], prop, _make_exchange(store, prop))
        if out is None:
            out = np.zeros((n, res.logits.shape[1]), dtype=res.logits.dtype)
        out[prop.plan.batch_nodes] = res.logits.value
        store.advance()
    return out


def full_forward(model: GNNModel, dataset: Dataset, prop: Propagation | None = None):
    """Exact evaluation-mode forward.  Returns ``(logits, [layer outputs 1..L])``."""
    prop = prop or _full_prop(dataset.graph, model.dtype)
    res = model.forward(dataset.features, prop)
    return res.logits.value, [h.value for h in res.hidden]


def warmup_histories(model: GNNModel, dataset: Dataset, store: HistoryStore) -> None:
    """Fill every history with exact embeddings of the current parameters."""
    _check_store(model, store)
    _, hidden = full_forward(model, dataset)
    for layer in range(1, store.num_layers + 1):
        store.fill(layer, hidden[layer - 1])


def infer_from_history(model: GNNModel, store: HistoryStore, graph: Graph, features) -> Predictions:
    """Predictions from layer ``L`` applied to the stored layer ``L-1`` embeddings."""
    if store.num_layers == 0:
        raise InputError("history store is empty; single-layer models have no histories")
    _check_store(model, store)
    stale = store.num_pushes == 0
    if stale:
        log.warning("inferring from a history store that was never written")
    prop = _full_prop(graph, model.dtype)
    h_prev = Tensor(store.matrix(store.num_layers).astype(model.dtype, copy=False))
    logits = model.last_layer(h_prev, prop, features)
    return Predictions(logits.value, stale)


def evaluate(model: GNNModel, dataset: Dataset, logits=None) -> dict:
    if logits is None:
        logits, _ = full_forward(model, dataset)
    lab = dataset.labels
    res = {}
    for name, mask in (("train", lab.train_mask), ("val", lab.val_mask), ("test", lab.test_mask)):
        res[f"{name}_acc"] = accuracy(logits, lab.labels, mask) if mask.any() else 0.0
    return res


def memory_probe(model: GNNModel, dataset: Dataset, partitioning: Partitioning, epoch: int = 0) -> list:
    """Per-batch peak of simultaneously live activation floats for one GAS epoch.

    Histories live outside the tape and are not counted.
    """
    store = HistoryStore(dataset.graph.num_nodes, model.history_dims, dtype=model.dtype)
    opt = Adam(model.parameters(), lr=0.0)
    stats = EpochStats()
    gas_epoch(model, dataset, partitioning, store, opt, epoch=epoch, stats=stats, shuffle=False)
    store.close()
    return stats.peak_floats


class Trainer:
    """Owns the optimizer, the history store and the cached batch plans of one run."""

    def __init__(self, model: GNNModel, dataset: Dataset, partitioning: Partitioning | None = None,
                 method: str = "gas", prefetch: bool = False, track_staleness: bool = False,
                 warmup: bool = False):
        if method not in ("gas", "full"):
            raise InputError(f"unknown training method {method!r}")
        if dataset.features.shape[1] != model.spec.in_dim:
            raise InputError(
                f"features have {dataset.features.shape[1]} columns, model expects {model.spec.in_dim}"
            )
        self.model = model
        self.dataset = dataset
        self.method = method
        self.prefetch = prefetch
        self.track_staleness = track_staleness
        self.opt = Adam(model.parameters(), lr=model.spec.lr)
        g = dataset.graph
        self.partitioning = partitioning or Partitioning.from_assignment(np.zeros(g.num_nodes, dtype=np.int64))
        self.full_prop = _full_prop(g, model.dtype)
        self.props = prepare_batches(g, self.partitioning, model.dtype) if method == "gas" else []
        self.store = HistoryStore(g.num_nodes, model.history_dims, dtype=model.dtype)
        self.epoch = 0
        self.report = TrainReport()
        self.last_stats = None
        if warmup and self.store.num_layers:
            warmup_histories(model, dataset, self.store)

    def run_epoch(self) -> dict:
        stats = EpochStats()
        if self.method == "full":
            full_batch_epoch(self.model, self.dataset, self.opt, self.epoch, self.full_prop, stats)
        else:
            gas_epoch(self.model, self.dataset, self.partitioning, self.store, self.opt, self.epoch,
                      self.props, prefetch=self.prefetch, stats=stats)
        logits, hidden = full_forward(self.model, self.dataset, self.full_prop)
        row = {"epoch": self.epoch, "loss": stats.loss, "peak_floats": max(stats.peak_floats)}
        row.update(evaluate(self.model, self.dataset, logits))
        if self.track_staleness and self.store.num_layers:
            row["eps_max"] = measure_staleness(self.store, hidden[:-1]).eps_max
        self.report.append(row)
        self.last_stats = stats
        self.epoch += 1
        return row

    def fit(self, epochs: int | None = None) -> TrainReport:
        epochs = self.model.spec.epochs if epochs is None else epochs
        for _ in range(epochs):
            row = self.run_epoch()
            log.info("epoch %d loss %.4f val %.4f", row["epoch"], row["loss"], row["val_acc"])
        return self.report

    def predict_from_history(self) -> Predictions:
        return infer_from_history(self.model, self.store, self.dataset.graph, self.dataset.features)

    def close(self) -> None:
        self.store.close()
