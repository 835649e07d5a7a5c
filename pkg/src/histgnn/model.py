"""Stacked message-passing models with a pluggable halo exchange."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import InputError
from .layers import KINDS, LayerConfig, LayerInput, Propagation, lipschitz_reg_loss, make_layer
from .nn import Linear, MLP, Tensor, current_tape, dropout, gather_rows, relu

__all__ = ["ModelSpec", "GNNModel", "ForwardResult"]


@dataclass
class ModelSpec:
    kind: str = "gcn"
    in_dim: int = 1
    hidden: int = 16
    num_classes: int = 2
    num_layers: int = 2
    dropout: float = 0.5
    alpha: float = 0.1
    beta: float = 0.5
    gin_eps: float = 0.0
    train_eps: bool = True
    l2: float = 5e-4
    lipschitz_weight: float = 0.0
    delta: float = 0.1
    max_norm: float | None = None
    lr: float = 0.01
    epochs: int = 200
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.num_layers < 1:
            raise InputError("num_layers must be at least 1")
        if min(self.in_dim, self.hidden, self.num_classes) < 1:
            raise InputError("in_dim, hidden and num_classes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise InputError("dropout must lie in [0, 1)")
        if self.l2 < 0 or self.lipschitz_weight < 0 or self.lr < 0:
            raise InputError("l2, lipschitz_weight and lr must be non-negative")
        if self.lipschitz_weight > 0 and self.delta <= 0:
            raise InputError("delta must be positive when the Lipschitz loss is on")
        if self.max_norm is not None and self.max_norm <= 0:
            raise InputError("max_norm must be positive")
        if self.dtype not in ("float32", "float64"):
            raise InputError("dtype must be float32 or float64")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ForwardResult:
    logits: Tensor
    hidden: list  # batch-row outputs of layers 1..L (after activation)
    reg_terms: list = field(default_factory=list)


class GNNModel:
    """``L`` message-passing layers plus an optional input/output head.

    * gcn, mean, gin: ``in -> hidden -> ... -> classes``, relu between layers.
    * appnp: ``MLP(in -> hidden -> classes)`` then ``L`` parameter-free propagations.
    * gcnii: ``relu(Linear(in -> hidden))``, ``L`` GCNII layers with relu, ``Linear(hidden -> classes)``.
    """

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.dtype = np.dtype(spec.dtype)
        rng = np.random.default_rng(spec.seed)
        L = spec.num_layers
        self.pre = None
        self.post = None
        if spec.kind == "appnp":
            self.pre = MLP(spec.in_dim, spec.hidden, spec.num_classes, rng, dtype=self.dtype)
            dims = [spec.num_classes] * (L + 1)
        elif spec.kind == "gcnii":
            self.pre = Linear(spec.in_dim, spec.hidden, rng, dtype=self.dtype)
            self.post = Linear(spec.hidden, spec.num_classes, rng, dtype=self.dtype)
            dims = [spec.hidden] * (L + 1)
        else:
            dims = [spec.in_dim] + [spec.hidden] * (L - 1) + [spec.num_classes]
        self.dims = dims
        self.layers = []
        for i in range(L):
            cfg = LayerConfig(spec.kind, dims[i], dims[i + 1], alpha=spec.alpha, beta=spec.beta,
                              gin_eps=spec.gin_eps, train_eps=spec.train_eps, mlp_hidden=spec.hidden)
            self.layers.append(make_layer(cfg, rng, self.dtype))

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def history_dims(self) -> list:
        return [layer.out_dim for layer in self.layers[:-1]]

    def parameters(self) -> list:
        params = []
        for mod in (self.pre, *self.layers, self.post):
            if mod is not None:
                params.extend(mod.parameters())
        return params

    def state_dict(self) -> list:
        return [p.value.copy() for p in self.parameters()]

    def load_state_dict(self, values) -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise InputError("state has the wrong number of tensors")
        for p, v in zip(params, values):
            if p.value.shape != np.shape(v):
                raise InputError("state tensor shape mismatch")
            p.value = np.array(v, dtype=p.value.dtype)

    def _activate(self, layer_idx: int) -> bool:
        kind = self.spec.kind
        if kind == "appnp":
            return False
        if kind == "gcnii":
            return True
        return layer_idx < self.num_layers

    def initial_embeddings(self, h: Tensor, p: float, key, ids) -> Tensor:
        """Input head output ``h0`` for the rows of ``h`` (APPNP/GCNII only)."""
        if self.spec.kind == "appnp":
            return self.pre(h, between=lambda t: dropout(t, p, key + (-1,), ids))
        return relu(self.pre(h))

    def forward(self, x_ext, prop: Propagation, exchange=None, *, training=False, key=(),
                reg_seed=None) -> ForwardResult:
        """Run all layers for the batch described by ``prop``.

        ``x_ext`` holds the input features of the extended batch.  After every
        layer except the last, ``exchange(layer, out)`` turns the batch rows
        into the next layer's extended input; the default is the identity,
        which is only valid when the batch has no halo nodes.  Dropout masks
        are keyed by ``key`` and global node ids.
        """
        p = self.spec.dropout if training else 0.0
        key = tuple(key)
        ids = prop.plan.extended_nodes
        if exchange is None:
            if prop.plan.num_halo:
                raise InputError("batches with halo nodes need an exchange function")
            exchange = lambda layer, out: out  # noqa: E731
        h = Tensor(np.asarray(x_ext, dtype=self.dtype))
        tape = current_tape()
        if tape is not None:
            tape._account(h.value.size)  # batch input features count as activations
        h0 = None
        if self.pre is not None:
            h = dropout(h, p, key + (0,), ids)
            h = self.initial_embeddings(h, p, key, ids)
            h0 = gather_rows(h, prop.batch_pos)
        reg = reg_seed is not None and self.spec.lipschitz_weight > 0
        hidden, reg_terms = [], []
        out = None
        for idx, layer in enumerate(self.layers, 1):
            if self.spec.kind != "appnp":
                h = dropout(h, p, key + (idx,), ids)
            inp = LayerInput(h, prop, h0)
            out = layer(inp)
            if reg:
                reg_terms.append(lipschitz_reg_loss(layer, inp, self.spec.delta,
                                                    seed=list(reg_seed) + [idx], reference=out))
            if self._activate(idx):
                out = relu(out)
            hidden.append(out)
            if idx < self.num_layers:
                h = exchange(idx, out)
        if self.post is not None:
            out = self.post(dropout(out, p, key + (self.num_layers + 1,), prop.plan.batch_nodes))
        return ForwardResult(out, hidden, reg_terms)

    def last_layer(self, h_prev: Tensor, prop: Propagation, x=None) -> Tensor:
        """Apply only layer ``L`` (and the output head) to given layer ``L-1`` inputs."""
        h0 = None
        if self.pre is not None:
            if x is None:
                raise InputError(f"{self.spec.kind} needs input features for h0")
            h0 = gather_rows(self.initial_embeddings(Tensor(np.asarray(x, dtype=self.dtype)), 0.0, (), None),
                             prop.batch_pos)
        out = self.layers[-1](LayerInput(h_prev, prop, h0))
        if self._activate(self.num_layers):
            out = relu(out)
        if self.post is not None:
            out = self.post(out)
        return out
