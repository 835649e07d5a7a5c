"""Message-passing operators.

Each layer maps the embeddings of the extended batch ``V_b`` (in-batch rows
differentiable, halo rows constant) to new embeddings of the batch nodes
``B_b``.  In full-batch mode the "batch" is the whole graph and there are no
halo rows.  Normalisation always uses global degrees, so a batch computes the
same operator as the full graph.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exceptions import InputError
from .graph import BatchPlan
from .nn import (
    MLP,
    Tensor,
    add,
    frobenius_norm,
    gather_rows,
    glorot_uniform,
    matmul,
    mul,
    scale,
    spmm,
    sub,
)

__all__ = [
    "KINDS",
    "LayerConfig",
    "LayerInput",
    "Propagation",
    "GCNConv",
    "GINConv",
    "APPNPProp",
    "GCNIIConv",
    "MeanConv",
    "make_layer",
    "lipschitz_reg_loss",
    "sample_ball",
]

# "mean" (random-walk normalised mean over N(v) and v) is an extra operator
# used by the tightened error-bound analysis.
KINDS = ("gcn", "gin", "appnp", "gcnii", "mean")


@dataclass
class LayerConfig:
    kind: str
    in_dim: int
    out_dim: int
    alpha: float = 0.1
    beta: float = 0.5
    gin_eps: float = 0.0
    train_eps: bool = True
    mlp_hidden: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown layer kind {self.kind!r}")
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise InputError("layer dimensions must be positive")
        if not 0.0 <= self.alpha <= 1.0 or not 0.0 <= self.beta <= 1.0:
            raise InputError("alpha and beta must lie in [0, 1]")
        if self.kind in ("appnp", "gcnii") and self.in_dim != self.out_dim:
            raise InputError(f"{self.kind} layers need in_dim == out_dim")


class Propagation:
    """Sparse aggregation operators of one batch, shape ``(|B_b|, |V_b|)``."""

    def __init__(self, plan: BatchPlan, dtype=np.float32):
        self.plan = plan
        self.dtype = np.dtype(dtype)
        self.batch_pos = plan.batch_pos
        self.num_ext = len(plan.extended_nodes)
        self.num_batch = len(plan.batch_nodes)
        lg = plan.local_graph
        rows = np.repeat(np.arange(lg.num_nodes), np.diff(lg.row_offsets))
        keep = np.isin(rows, self.batch_pos)
        # local rows of batch nodes -> output row index
        out_row = np.full(lg.num_nodes, -1, dtype=np.int64)
        out_row[self.batch_pos] = np.arange(self.num_batch)
        self._dst = out_row[rows[keep]]
        self._src = lg.col_indices[keep]
        self.num_messages = int(len(self._src))

    def _build(self, data, self_data=None):
        r, c = self._dst, self._src
        if self_data is not None:
            r = np.concatenate([r, np.arange(self.num_batch)])
            c = np.concatenate([c, self.batch_pos])
            data = np.concatenate([data, self_data])
        m = sp.csr_matrix((data.astype(self.dtype), (r, c)), shape=(self.num_batch, self.num_ext))
        m.sort_indices()
        return m, m.T.tocsr()

    @cached_property
    def sum_op(self):
        """``A_b``: plain sum over ``N(v)``."""
        return self._build(np.ones(len(self._src)))

    @cached_property
    def gcn_op(self):
        """``D^-1/2 (A + I) D^-1/2`` restricted to batch rows (global degrees)."""
        deg = self.plan.global_degrees.astype(np.float64) + 1.0
        dv = deg[self.batch_pos]
        data = 1.0 / (np.sqrt(deg[self._src]) * np.sqrt(dv[self._dst]))
        return self._build(data, 1.0 / dv)

    @cached_property
    def mean_op(self):
        """Mean over ``N(v) ∪ {v}``."""
        dv = self.plan.global_degrees.astype(np.float64)[self.batch_pos] + 1.0
        return self._build(1.0 / dv[self._dst], 1.0 / dv)


@dataclass
class LayerInput:
    h: Tensor
    prop: Propagation
    h0: Tensor | None = None

    def batch_rows(self) -> Tensor:
        return gather_rows(self.h, self.prop.batch_pos)


class _Layer:
    needs_h0 = False

    def __init__(self, cfg: LayerConfig):
        self.cfg = cfg

    @property
    def in_dim(self):
        return self.cfg.in_dim

    @property
    def out_dim(self):
        return self.cfg.out_dim

    def parameters(self):
        return []

    def _check(self, inp: LayerInput):
        if inp.h.shape != (inp.prop.num_ext, self.cfg.in_dim):
            raise InputError(
                f"{self.cfg.kind} layer expects ({inp.prop.num_ext}, {self.cfg.in_dim}) input, got {inp.h.shape}"
            )
        if self.needs_h0 and inp.h0 is None:
            raise InputError(f"{self.cfg.kind} layer requires initial embeddings h0")


class GCNConv(_Layer):
    """``h_v = sum_{w in N(v) ∪ {v}} W h_w / c_{w,v}``."""

    def __init__(self, cfg, rng, dtype=np.float32):
        super().__init__(cfg)
        self.weight = Tensor(glorot_uniform(cfg.in_dim, cfg.out_dim, rng, dtype), requires_grad=True)

    def parameters(self):
        return [self.weight]

    def __call__(self, inp: LayerInput) -> Tensor:
        self._check(inp)
        op, op_t = inp.prop.gcn_op
        return matmul(spmm(op, inp.h, op_t), self.weight)


class MeanConv(GCNConv):
    """``h_v = W mean_{w in N(v) ∪ {v}} h_w``."""

    def __call__(self, inp: LayerInput) -> Tensor:
        self._check(inp)
        op, op_t = inp.prop.mean_op
        return matmul(spmm(op, inp.h, op_t), self.weight)


class GINConv(_Layer):
    """``h_v = MLP((1 + eps) h_v + sum_{w in N(v)} h_w)``."""

    def __init__(self, cfg, rng, dtype=np.float32):
        super().__init__(cfg)
        hidden = cfg.mlp_hidden or cfg.out_dim
        self.mlp = MLP(cfg.in_dim, hidden, cfg.out_dim, rng, dtype=dtype)
        self.eps = Tensor(np.full((1, 1), cfg.gin_eps, dtype=dtype), requires_grad=cfg.train_eps)

    def parameters(self):
        return self.mlp.parameters() + ([self.eps] if self.cfg.train_eps else [])

    def combine(self, inp: LayerInput) -> Tensor:
        op, op_t = inp.prop.sum_op
        hb = inp.batch_rows()
        if self.cfg.train_eps:
            self_term = add(hb, mul(self.eps, hb))
        else:
            self_term = scale(hb, 1.0 + float(self.eps.value[0, 0]))
        return add(self_term, spmm(op, inp.h, op_t))

    def __call__(self, inp: LayerInput) -> Tensor:
        self._check(inp)
        return self.mlp(self.combine(inp))


class APPNPProp(_Layer):
    """``h = alpha h0 + (1 - alpha) sum_{w in N(v) ∪ {v}} h_w / c_{w,v}`` (no parameters)."""

    needs_h0 = True

    def __init__(self, cfg, rng=None, dtype=np.float32):
        super().__init__(cfg)

    def __call__(self, inp: LayerInput) -> Tensor:
        self._check(inp)
        op, op_t = inp.prop.gcn_op
        a = self.cfg.alpha
        return add(scale(inp.h0, a), scale(spmm(op, inp.h, op_t), 1.0 - a))


class GCNIIConv(_Layer):
    """``h = (alpha h0 + (1 - alpha) sum h_w / c_{w,v}) ((1 - beta) I + beta W)``."""

    needs_h0 = True

    def __init__(self, cfg, rng, dtype=np.float32):
        super().__init__(cfg)
        self.weight = Tensor(glorot_uniform(cfg.in_dim, cfg.out_dim, rng, dtype), requires_grad=True)
        self._eye = Tensor(np.eye(cfg.in_dim, dtype=dtype))

    def parameters(self):
        return [self.weight]

    def effective_weight(self) -> Tensor:
        b = self.cfg.beta
        return add(scale(self._eye, 1.0 - b), scale(self.weight, b))

    def __call__(self, inp: LayerInput) -> Tensor:
        self._check(inp)
        op, op_t = inp.prop.gcn_op
        a = self.cfg.alpha
        mixed = add(scale(inp.h0, a), scale(spmm(op, inp.h, op_t), 1.0 - a))
        return matmul(mixed, self.effective_weight())


_LAYERS = {
    "gcn": GCNConv,
    "gin": GINConv,
    "appnp": APPNPProp,
    "gcnii": GCNIIConv,
    "mean": MeanConv,
}


def make_layer(cfg: LayerConfig, rng, dtype=np.float32):
    return _LAYERS[cfg.kind](cfg, rng, dtype)


def sample_ball(rows: int, dim: int, delta: float, rng) -> np.ndarray:
    """Independent uniform samples from the closed ``delta``-ball, one per row."""
    d = rng.standard_normal((rows, dim))
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radius = delta * rng.random((rows, 1)) ** (1.0 / dim)
    return d / norms * radius


def lipschitz_reg_loss(layer, inp: LayerInput, delta: float, seed=0, noise=None,
                       reference: Tensor | None = None) -> Tensor:
    """``|| f(h) - f(h + e) ||`` with ``e`` drawn uniformly from the ``delta``-ball per row.

    ``noise`` overrides the sampled perturbation; ``reference`` reuses an
    already computed ``f(h)``.
    """
    if delta <= 0:
        raise InputError("delta must be positive")
    if noise is None:
        rng = np.random.default_rng(seed)
        noise = sample_ball(inp.h.shape[0], inp.h.shape[1], delta, rng)
    perturbed = LayerInput(add(inp.h, Tensor(np.asarray(noise, dtype=inp.h.dtype))), inp.prop, inp.h0)
    base = layer(inp) if reference is None else reference
    return frobenius_norm(sub(base, layer(perturbed)))
