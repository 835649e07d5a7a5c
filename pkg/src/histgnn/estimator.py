"""Transductive node classifier with a scikit-learn interface."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InputError
from .graph import Dataset, Graph, LabelSet, build_graph
from .model import GNNModel, ModelSpec
from .partition import cluster_partition, random_partition
from .trainer import Trainer, full_forward

__all__ = ["GASClassifier", "check_graph"]


def check_graph(graph, num_nodes: int) -> Graph:
    """Accept a :class:`Graph` or an ``(E, 2)`` edge array."""
    if isinstance(graph, Graph):
        if graph.num_nodes != num_nodes:
            raise InputError(f"graph has {graph.num_nodes} nodes, X has {num_nodes} rows")
        return graph
    edges = np.asarray(graph)
    if edges.size == 0:
        edges = edges.reshape(0, 2)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise InputError("graph must be a Graph or an (E, 2) edge array")
    return build_graph(edges.astype(np.int64), num_nodes)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class GASClassifier(ClassifierMixin, BaseEstimator):
    """Node classifier trained with partition mini-batches and historical embeddings.

    ``fit(X, y, graph=...)`` is transductive: ``X`` holds the features of all
    nodes and ``y`` their labels, with ``-1`` (or ``train_mask``) marking
    nodes that are not trained on.  Prediction methods reuse the fitted graph
    and take features for the same node set.
    """

    def __init__(self, kind="gcn", num_layers=2, hidden=16, dropout=0.5, lr=0.01, epochs=200,
                 l2=5e-4, lipschitz_weight=0.0, delta=0.1, max_norm=None, alpha=0.1, beta=0.5,
                 num_parts=1, partitioner="cluster", method="gas", prefetch=False,
                 dtype="float32", random_state=0):
        self.kind = kind
        self.num_layers = num_layers
        self.hidden = hidden
        self.dropout = dropout
        self.lr = lr
        self.epochs = epochs
        self.l2 = l2
        self.lipschitz_weight = lipschitz_weight
        self.delta = delta
        self.max_norm = max_norm
        self.alpha = alpha
        self.beta = beta
        self.num_parts = num_parts
        self.partitioner = partitioner
        self.method = method
        self.prefetch = prefetch
        self.dtype = dtype
        self.random_state = random_state

    def _spec(self, in_dim, num_classes) -> ModelSpec:
        return ModelSpec(kind=self.kind, in_dim=in_dim, hidden=self.hidden, num_classes=num_classes,
                         num_layers=self.num_layers, dropout=self.dropout, alpha=self.alpha,
                         beta=self.beta, l2=self.l2, lipschitz_weight=self.lipschitz_weight,
                         delta=self.delta, max_norm=self.max_norm, lr=self.lr, epochs=self.epochs,
                         seed=int(self.random_state), dtype=self.dtype)

    def fit(self, X, y, graph=None, train_mask=None, val_mask=None):
        X = check_array(X, dtype=np.dtype(self.dtype))
        y = np.asarray(y)
        n = X.shape[0]
        if y.shape != (n,):
            raise InputError("y must have one entry per node")
        if graph is None:
            raise InputError("fit needs the graph (Graph or edge array)")
        g = check_graph(graph, n)
        train = y >= 0 if train_mask is None else np.asarray(train_mask, dtype=bool)
        if not train.any():
            raise InputError("no training nodes")
        val = np.zeros(n, dtype=bool) if val_mask is None else np.asarray(val_mask, dtype=bool) & ~train
        self.label_encoder_ = LabelEncoder().fit(y[train])
        self.classes_ = self.label_encoder_.classes_
        known = np.isin(y, self.classes_)
        enc = np.zeros(n, dtype=np.int64)
        enc[known] = self.label_encoder_.transform(y[known])
        val &= known
        labels = LabelSet(enc, len(self.classes_), train, val, np.zeros(n, dtype=bool))
        ds = Dataset(g, X, labels)
        if self.method == "gas" and self.num_parts > 1:
            fn = cluster_partition if self.partitioner == "cluster" else random_partition
            part = fn(g, self.num_parts, int(self.random_state))
        else:
            part = None
        self.model_ = GNNModel(self._spec(X.shape[1], len(self.classes_)))
        self.trainer_ = Trainer(self.model_, ds, part, method=self.method, prefetch=self.prefetch)
        try:
            self.report_ = self.trainer_.fit(self.epochs)
        finally:
            self.trainer_.close()
        self.graph_ = g
        self.n_features_in_ = X.shape[1]
        self._dataset = ds
        return self

    def _data(self, X) -> Dataset:
        check_is_fitted(self, "model_")
        if X is None:
            return self._dataset
        X = check_array(X, dtype=np.dtype(self.dtype))
        if X.shape != (self.graph_.num_nodes, self.n_features_in_):
            raise InputError(
                f"X must have shape ({self.graph_.num_nodes}, {self.n_features_in_}), got {X.shape}"
            )
        return Dataset(self.graph_, X, self._dataset.labels)

    def decision_function(self, X=None) -> np.ndarray:
        ds = self._data(X)
        logits, _ = full_forward(self.model_, ds, self.trainer_.full_prop)
        return logits.astype(np.float64)

    def predict_proba(self, X=None) -> np.ndarray:
        return _softmax(self.decision_function(X))

    def predict(self, X=None) -> np.ndarray:
        scores = self.decision_function(X)
        return self.classes_[scores.argmax(axis=1)]

    def transform(self, X=None) -> np.ndarray:
        """Node embeddings after layer ``L-1`` (the input features for a one-layer model)."""
        ds = self._data(X)
        _, hidden = full_forward(self.model_, ds, self.trainer_.full_prop)
        if len(hidden) < 2:
            return np.asarray(ds.features, dtype=np.float64)
        return hidden[-2].astype(np.float64)

    def predict_from_history(self) -> np.ndarray:
        """Labels from the last layer applied to stored layer ``L-1`` embeddings."""
        check_is_fitted(self, "model_")
        pred = self.trainer_.predict_from_history()
        return self.classes_[pred.labels]
