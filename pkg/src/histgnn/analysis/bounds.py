"""Approximation-error bounds for historical embeddings and their empirical check."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InputError
from ..graph import Dataset, Graph, LabelSet, build_graph
from ..history import HistoryStore
from ..layers import APPNPProp, GCNConv, GCNIIConv, GINConv, MeanConv
from ..model import GNNModel, ModelSpec
from ..nn import Adam, spectral_norm_estimate
from ..partition import random_partition
from ..trainer import fixed_exchange, full_forward, gas_epoch, prepare_batches

SAFETY = 1.5

__all__ = [
    "SAFETY",
    "ErrorReport",
    "lemma1_bound",
    "theorem1_bound",
    "recursive_bound",
    "layer_lipschitz",
    "measure_errors",
    "random_small_graph",
    "bound_case",
    "lemma1_case",
]


def lemma1_bound(delta, eps, k1, k2, deg, aggregation: str = "sum") -> float:
    """``delta k2 + (delta + eps) k1 k2 |N(v)|``; mean/max aggregation drops the degree factor."""
    if min(delta, eps, k1, k2, deg) < 0:
        raise InputError("bound inputs must be non-negative")
    if aggregation not in ("sum", "mean", "max"):
        raise InputError(f"unknown aggregation {aggregation!r}")
    n = deg if aggregation == "sum" else 1.0
    return float(delta * k2 + (delta + eps) * k1 * k2 * n)


def theorem1_bound(eps_per_layer, k1, k2, max_deg, L: int) -> float:
    """``sum_{l=1}^{L-1} eps_l (k1 k2 |N|)^(L-l)``."""
    if L < 2:
        raise InputError("the bound needs L >= 2")
    eps = list(eps_per_layer)
    if len(eps) != L - 1:
        raise InputError(f"need {L - 1} staleness values, got {len(eps)}")
    if min(eps + [k1, k2, max_deg]) < 0:
        raise InputError("bound inputs must be non-negative")
    c = k1 * k2 * max_deg
    return float(sum(e * c ** (L - l) for l, e in enumerate(eps, 1)))


def recursive_bound(eps_per_layer, k1, k2, max_deg, L: int, aggregation: str = "sum") -> float:
    """Iterate the single-layer bound from an exact first layer."""
    eps = list(eps_per_layer)
    if len(eps) != L - 1:
        raise InputError(f"need {L - 1} staleness values, got {len(eps)}")
    delta = 0.0
    for l in range(1, L):
        delta = lemma1_bound(delta, eps[l - 1], k1, k2, max_deg, aggregation)
    return delta


def _norm_extremes(g: Graph):
    deg = g.degrees().astype(np.float64) + 1.0
    e = g.edges()
    inv_c = 1.0 / np.sqrt(deg[e[:, 0]] * deg[e[:, 1]]) if len(e) else np.zeros(1)
    return float(inv_c.max()), float((1.0 / deg).max()) if len(deg) else 1.0


def layer_lipschitz(layer, graph: Graph, safety: float = SAFETY):
    """Message (k1) and update (k2) Lipschitz constants of one layer plus its relu.

    Spectral norms come from power iteration and are inflated by ``safety``.
    """
    inv_c, inv_self = _norm_extremes(graph)

    def sn(w):
        return safety * spectral_norm_estimate(w)

    if isinstance(layer, MeanConv):
        return 1.0, sn(layer.weight.value)
    if isinstance(layer, GCNConv):
        w = sn(layer.weight.value)
        return w * inv_c, max(1.0, w * inv_self)
    if isinstance(layer, GINConv):
        mlp = sn(layer.mlp.lin1.weight.value) * sn(layer.mlp.lin2.weight.value)
        eps = float(layer.eps.value[0, 0])
        return 1.0, mlp * max(abs(1.0 + eps), 1.0)
    if isinstance(layer, GCNIIConv):
        w = sn(layer.effective_weight().value)
        a = layer.cfg.alpha
        return (1.0 - a) * w * inv_c, max(1.0, (1.0 - a) * w * inv_self)
    if isinstance(layer, APPNPProp):
        a = layer.cfg.alpha
        return (1.0 - a) * inv_c, max(1.0, (1.0 - a) * inv_self)
    raise InputError(f"no Lipschitz rule for {type(layer).__name__}")


@dataclass
class ErrorReport:
    delta: list
    eps: list
    k1: list
    k2: list
    max_deg: int
    measured: float
    theorem1: float
    recursive: float
    aggregation: str = "sum"
    lemma1: list = field(default_factory=list)  # (layer, measured delta, bound)

    @property
    def theorem1_holds(self) -> bool:
        return self.measured <= self.theorem1 * (1 + 1e-12) + 1e-12

    @property
    def lemma1_holds(self) -> bool:
        return all(m <= b * (1 + 1e-12) + 1e-12 for _, m, b in self.lemma1)

    @property
    def nontrivial(self) -> bool:
        return max(self.eps, default=0.0) > 0.0


def measure_errors(model: GNNModel, dataset: Dataset, props: list, store: HistoryStore,
                   aggregation: str | None = None) -> ErrorReport:
    """Closeness and staleness of a frozen history snapshot against the exact forward pass.

    Every batch pulls from the same snapshot; nothing is pushed.
    """
    if model.post is not None:
        raise InputError("bound check expects the last message-passing layer to emit the output")
    g = dataset.graph
    n = g.num_nodes
    L = model.num_layers
    _, exact = full_forward(model, dataset)
    hist = [store.matrix(l) for l in range(1, L)]
    approx = [np.zeros_like(h) for h in exact]
    halo = np.zeros(n, dtype=bool)
    for prop in props:
        res = model.forward(dataset.features[prop.plan.extended_nodes], prop, fixed_exchange(prop, hist))
        for l, h in enumerate(res.hidden):
            approx[l][prop.plan.batch_nodes] = h.value
        halo[prop.plan.halo_nodes] = True
    delta = [float(np.linalg.norm(a - e, axis=1).max()) for a, e in zip(approx, exact)]
    eps = []
    for h, e in zip(hist, exact[:-1]):
        eps.append(float(np.linalg.norm(h - e, axis=1)[halo].max()) if halo.any() else 0.0)
    ks = [layer_lipschitz(layer, g) for layer in model.layers]
    k1 = [k[0] for k in ks]
    k2 = [k[1] for k in ks]
    agg = aggregation or ("mean" if model.spec.kind == "mean" else "sum")
    max_deg = int(g.degrees().max()) if n else 0
    deg_factor = max_deg if agg == "sum" else 1
    # layer 1 sees exact inputs, so only layers 2..L contribute constants
    K1, K2 = (max(k1[1:]), max(k2[1:])) if L > 1 else (0.0, 0.0)
    lemma = [
        (l + 1, delta[l], lemma1_bound(delta[l - 1], eps[l - 1], k1[l], k2[l], max_deg, agg))
        for l in range(1, L)
    ]
    if L >= 2:
        thm = theorem1_bound(eps, K1, K2, deg_factor, L)
        rec = recursive_bound(eps, K1, K2, max_deg, L, agg)
    else:
        thm = rec = 0.0
    return ErrorReport(delta, eps, k1, k2, max_deg, delta[-1], thm, rec, agg, lemma)


def random_small_graph(seed, min_nodes: int = 4, max_nodes: int = 8, p: float = 0.45) -> Graph:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(min_nodes, max_nodes + 1))
    iu = np.stack(np.triu_indices(n, 1), axis=1)
    return build_graph(iu[rng.random(len(iu)) < p], n, symmetrize=True)


def _small_dataset(g: Graph, rng, dim: int, classes: int) -> Dataset:
    n = g.num_nodes
    x = rng.standard_normal((n, dim))
    y = rng.integers(0, classes, n)
    ones = np.ones(n, dtype=bool)
    none = np.zeros(n, dtype=bool)
    return Dataset(g, x, LabelSet(y, classes, ones, none, none.copy()))


def bound_case(seed: int, num_layers: int, kind: str = "gcn", num_parts: int = 2,
               train_epochs: int = 2, lr: float = 0.05, dim: int = 4) -> ErrorReport:
    """Random graph with ``<= 8`` nodes, a float64 model and stale histories from a few GAS epochs."""
    rng = np.random.default_rng([seed, 7])
    g = random_small_graph(seed)
    ds = _small_dataset(g, rng, dim, 3)
    spec = ModelSpec(kind=kind, in_dim=dim, hidden=dim, num_classes=3, num_layers=num_layers,
                     dropout=0.0, l2=0.0, lr=lr, seed=seed, dtype="float64")
    model = GNNModel(spec)
    if kind == "mean":
        for layer in model.layers:
            s = spectral_norm_estimate(layer.weight.value)
            layer.weight.value = layer.weight.value / max(1.0, s)
    part = random_partition(g, min(num_parts, g.num_nodes), seed)
    props = prepare_batches(g, part, np.float64)
    store = HistoryStore(g.num_nodes, model.history_dims, dtype=np.float64)
    opt = Adam(model.parameters(), lr=lr)
    for epoch in range(train_epochs):
        gas_epoch(model, ds, part, store, opt, epoch, props)
    return measure_errors(model, ds, props, store)


def lemma1_case(seed: int, num_nodes: int = 6, delta: float = 0.1, eps: float = 0.05,
                dim: int = 3, p: float = 0.5):
    """One linear GCN layer with perturbed inputs: in-batch rows by ``delta``, halo rows by ``eps``.

    Returns per-node ``(measured error, bound)`` arrays for the batch nodes.
    """
    from ..graph import make_batch_plan
    from ..layers import LayerConfig, LayerInput, Propagation
    from ..nn import Tensor

    rng = np.random.default_rng([seed, 11])
    iu = np.stack(np.triu_indices(num_nodes, 1), axis=1)
    g = build_graph(iu[rng.random(len(iu)) < p], num_nodes)
    layer = GCNConv(LayerConfig("gcn", dim, dim), rng, np.float64)
    batch = np.sort(rng.choice(num_nodes, size=max(1, num_nodes // 2), replace=False))
    prop = Propagation(make_batch_plan(g, batch), np.float64)
    ext = prop.plan.extended_nodes
    h = rng.standard_normal((num_nodes, dim))

    def ball_surface(rows, r):
        d = rng.standard_normal((rows, dim))
        return r * d / np.linalg.norm(d, axis=1, keepdims=True)

    noisy = h[ext].copy()
    noisy[prop.batch_pos] += ball_surface(len(prop.batch_pos), delta)
    noisy[prop.plan.halo_pos] += ball_surface(prop.plan.num_halo, eps)
    exact = layer(LayerInput(Tensor(h[ext]), prop)).value
    approx = layer(LayerInput(Tensor(noisy), prop)).value
    err = np.linalg.norm(approx - exact, axis=1)
    k1, k2 = layer_lipschitz(layer, g)
    deg = g.degrees()[batch]
    bound = np.array([lemma1_bound(delta, eps, k1, k2, d) for d in deg])
    return err, bound
