from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InputError
from .tensor import Tensor, scale, square_sum


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(state: AdamState, params) -> None:
    """One bias-corrected Adam update; parameters without a gradient are skipped."""
    if not state.m:
        state.m = [np.zeros_like(p.value, dtype=np.float64) for p in params]
        state.v = [np.zeros_like(p.value, dtype=np.float64) for p in params]
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, m, v in zip(params, state.m, state.v):
        if p.grad is None:
            continue
        g = p.grad.astype(np.float64)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.value = (p.value - update).astype(p.value.dtype)


class Adam:
    def __init__(self, params, lr=0.01, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        adam_step(self.state, self.params)


def grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return float(np.sqrt(total))


def clip_grad_norm(params, max_norm: float) -> float:
    """Rescale all gradients so their global norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    if max_norm <= 0:
        raise InputError("max_norm must be positive")
    params = list(params)
    norm = grad_norm(params)
    if norm > max_norm:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = (p.grad * factor).astype(p.grad.dtype)
    return norm


def l2_penalty(params, weight: float) -> Tensor:
    """``weight * sum ||theta||^2`` as a differentiable scalar."""
    if weight < 0:
        raise InputError("L2 weight must be non-negative")
    total = None
    for p in params:
        term = square_sum(p)
        total = term if total is None else total + term
    if total is None:
        return Tensor(np.array(0.0))
    return scale(total, weight)
