"""Distance between GAS and exact parameter gradients relative to history error."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..datasets import gen_sbm
from ..graph import Dataset
from ..history import HistoryStore
from ..model import GNNModel, ModelSpec
from ..nn import Adam, Tape, backward, softmax_cross_entropy
from ..partition import random_partition
from ..trainer import fixed_exchange, full_forward, gas_epoch, prepare_batches
from .bounds import SAFETY

__all__ = ["GradientReport", "batch_gradients", "gradient_error_check", "gradient_case"]


@dataclass
class GradientReport:
    history_error: float  # ||h_hist - h_exact|| over all halo rows and layers
    grad_error: list  # per parameter tensor
    lipschitz: list  # probed constant per parameter tensor (safety factor applied)

    @property
    def holds(self) -> bool:
        return all(d <= lam * self.history_error + 1e-12
                   for d, lam in zip(self.grad_error, self.lipschitz))


def batch_gradients(model: GNNModel, dataset: Dataset, prop, halo_values) -> list:
    """Parameter gradients of the batch loss when halos read ``halo_values``."""
    params = model.parameters()
    saved = [p.grad for p in params]
    for p in params:
        p.grad = None
    nodes = prop.plan.batch_nodes
    with Tape() as tape:
        res = model.forward(dataset.features[prop.plan.extended_nodes], prop,
                            fixed_exchange(prop, halo_values))
        loss = softmax_cross_entropy(res.logits, dataset.labels.labels[nodes],
                                     dataset.labels.train_mask[nodes])
    backward(tape, loss)
    grads = [np.zeros_like(p.value, dtype=np.float64) if p.grad is None else p.grad.astype(np.float64)
             for p in params]
    for p, g in zip(params, saved):
        p.grad = g
    return grads


def _jacobian_norms(model, dataset, prop, base, halos, step):
    """Per-tensor spectral norms of the finite-difference Jacobian d grad / d halo rows at ``base``."""
    cols = []
    for l, e in enumerate(base):
        for r in range(len(halos)):
            for c in range(e.shape[1]):
                plus = [m.copy() for m in base]
                minus = [m.copy() for m in base]
                plus[l][halos[r], c] += step
                minus[l][halos[r], c] -= step
                gp = batch_gradients(model, dataset, prop, plus)
                gm = batch_gradients(model, dataset, prop, minus)
                cols.append([(a - b).ravel() / (2 * step) for a, b in zip(gp, gm)])
    norms = []
    for i in range(len(cols[0])):
        jac = np.stack([col[i] for col in cols], axis=1)
        norms.append(float(np.linalg.norm(jac, 2)) if jac.size else 0.0)
    return np.array(norms)


def gradient_error_check(model: GNNModel, dataset: Dataset, props, store: HistoryStore,
                         batch: int = 0, lambda_est=None, points: int = 5,
                         step: float = 1e-5) -> GradientReport:
    """Compare ``||grad(h_hist) - grad(h_exact)||`` with ``lambda * ||h_hist - h_exact||``.

    Without ``lambda_est`` the constant is probed per parameter tensor: the
    Jacobian of the gradient map with respect to the halo inputs is built by
    central finite differences at ``points`` evenly spaced states between the
    exact and the historical inputs, and its largest spectral norm is
    multiplied by the safety factor.
    """
    prop = props[batch]
    halos = prop.plan.halo_nodes
    _, exact = full_forward(model, dataset)
    exact = [e.astype(np.float64) for e in exact[:-1]]
    hist = [store.matrix(l).astype(np.float64) for l in range(1, store.num_layers + 1)]
    dh = float(np.sqrt(sum(np.sum((h[halos] - e[halos]) ** 2) for h, e in zip(hist, exact))))
    g_exact = batch_gradients(model, dataset, prop, exact)
    g_hist = batch_gradients(model, dataset, prop, hist)
    diff = [float(np.linalg.norm(a - b)) for a, b in zip(g_hist, g_exact)]
    if lambda_est is None:
        lam = np.zeros(len(g_exact))
        if len(halos):
            for t in np.linspace(0.0, 1.0, points):
                base = [e + t * (h - e) for h, e in zip(hist, exact)]
                lam = np.maximum(lam, _jacobian_norms(model, dataset, prop, base, halos, step))
        lam = list(SAFETY * lam)
    else:
        lam = list(np.broadcast_to(np.asarray(lambda_est, dtype=np.float64), (len(g_exact),)))
    return GradientReport(dh, diff, [float(x) for x in lam])


def gradient_case(seed: int, num_layers: int = 2, kind: str = "gcn", epochs: int = 3) -> GradientReport:
    """Mid-training state on a small SBM graph with stale histories."""
    ds = gen_sbm(3, 20, 0.3, 0.05, seed=seed, train_per_class=10, val_per_class=5)
    spec = ModelSpec(kind=kind, in_dim=ds.features.shape[1], hidden=8, num_classes=3,
                     num_layers=num_layers, dropout=0.0, l2=0.0, lr=0.05, seed=seed, dtype="float64")
    model = GNNModel(spec)
    ds = Dataset(ds.graph, ds.features.astype(np.float64), ds.labels)
    part = random_partition(ds.graph, 3, seed)
    props = prepare_batches(ds.graph, part, np.float64)
    store = HistoryStore(ds.graph.num_nodes, model.history_dims, dtype=np.float64)
    opt = Adam(model.parameters(), lr=spec.lr)
    for e in range(epochs):
        gas_epoch(model, ds, part, store, opt, e, props)
    return gradient_error_check(model, ds, props, store, batch=0)
