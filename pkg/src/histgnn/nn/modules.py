from __future__ import annotations

import numpy as np

from .tensor import Tensor, add, matmul, relu


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng, bias: bool = True, dtype=np.float32):
        self.weight = Tensor(glorot_uniform(in_dim, out_dim, rng, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros((1, out_dim), dtype=dtype), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = matmul(x, self.weight)
        return add(out, self.bias) if self.bias is not None else out

    def parameters(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])


class MLP:
    """``Linear -> relu -> Linear``."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, rng, dtype=np.float32):
        self.lin1 = Linear(in_dim, hidden, rng, dtype=dtype)
        self.lin2 = Linear(hidden, out_dim, rng, dtype=dtype)

    def __call__(self, x: Tensor, between=None) -> Tensor:
        h = relu(self.lin1(x))
        if between is not None:
            h = between(h)
        return self.lin2(h)

    def parameters(self):
        return self.lin1.parameters() + self.lin2.parameters()
