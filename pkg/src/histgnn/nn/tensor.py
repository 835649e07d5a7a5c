"""Dense tensors with a reverse-mode tape.

Only 2-D row-major arrays (and scalars) are supported.  Operations record a
backward closure on the active :class:`Tape` when at least one input requires
a gradient.  Tensors without ``requires_grad`` are constants: gradients never
reach them, but they still take part in the computation, which is exactly how
historical embeddings enter a mini-batch.
"""
from __future__ import annotations

import threading

import numpy as np
import scipy.sparse as sp

from ..exceptions import InputError, NumericalError, StateError
from .random import counter_uniform

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "current_tape",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "relu",
    "dropout",
    "row_concat",
    "scatter_rows",
    "gather_rows",
    "spmm",
    "sum_all",
    "square_sum",
    "frobenius_norm",
]

_local = threading.local()


def _stack():
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def current_tape():
    s = _stack()
    return s[-1] if s else None


class Tape:
    """Ordered record of differentiable operations.

    Also acts as the allocation probe: every operation output produced while
    the tape is active is counted in ``live_floats``/``peak_floats``.
    """

    def __init__(self):
        self._records = []
        self.live_floats = 0
        self.peak_floats = 0
        self.num_ops = 0
        self.consumed = False

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def __len__(self):
        return len(self._records)

    def _account(self, size: int):
        self.num_ops += 1
        self.live_floats += int(size)
        if self.live_floats > self.peak_floats:
            self.peak_floats = self.live_floats


class Tensor:
    __slots__ = ("value", "requires_grad", "grad", "name", "_recorded")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        value = np.asarray(value)
        if value.dtype.kind not in "f":
            value = value.astype(np.float64)
        if value.ndim > 2:
            raise InputError("tensors are at most 2-D")
        self.value = value
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._recorded = False

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _result(value, inputs, backward_fn) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NumericalError("operation produced non-finite values")
    out = Tensor(value)
    tape = current_tape()
    if tape is not None:
        tape._account(out.value.size)
        if any(t.requires_grad for t in inputs):
            out.requires_grad = True
            out._recorded = True
            tape._records.append((out, inputs, backward_fn))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate ``.grad`` of every leaf reachable from ``loss``.

    Gradients accumulate into existing ``.grad`` arrays.
    """
    if tape.consumed:
        raise StateError("tape already consumed; re-record the forward pass")
    if loss.value.size != 1:
        raise InputError("backward requires a scalar loss")
    tape.consumed = True
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.value, dtype=np.float64)}
    for out, inputs, fn in reversed(tape._records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, fn(g)):
            if gi is None or not t.requires_grad:
                continue
            gi = np.asarray(gi, dtype=t.value.dtype).reshape(t.value.shape)
            if t._recorded:
                key = id(t)
                grads[key] = grads[key] + gi if key in grads else gi
            elif t.grad is None:
                t.grad = gi.copy()
            else:
                t.grad = t.grad + gi
    tape._records = []


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise InputError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def back(g):
        return g @ bv.T, av.T @ g

    return _result(av @ bv, (a, b), back)


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise InputError(f"{op} shape mismatch {a.shape} vs {b.shape}") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape

    def back(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _result(a.value + b.value, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape

    def back(g):
        return _unbroadcast(g, sa), -_unbroadcast(g, sb)

    return _result(a.value - b.value, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with broadcasting."""
    _check_broadcast(a, b, "mul")
    av, bv = a.value, b.value

    def back(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return _result(av * bv, (a, b), back)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.value * a.value.dtype.type(c), (a,), lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return _result(np.where(mask, a.value, 0).astype(a.dtype), (a,), lambda g: (g * mask,))


def dropout(a: Tensor, p: float, key, row_ids=None) -> Tensor:
    """Inverted dropout with a counter-based mask keyed by ``(key, row id, col)``."""
    if not 0.0 <= p < 1.0:
        raise InputError("dropout probability must lie in [0, 1)")
    if p == 0.0:
        return a
    rows, cols = a.shape
    ids = np.arange(rows) if row_ids is None else row_ids
    keep = counter_uniform(key, ids, cols) >= p
    factor = (keep / (1.0 - p)).astype(a.dtype)
    return _result(a.value * factor, (a,), lambda g: (g * factor,))


def row_concat(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[1]:
        raise InputError(f"row_concat shape mismatch {a.shape} / {b.shape}")
    n = a.shape[0]
    value = np.concatenate([a.value, b.value.astype(a.dtype, copy=False)], axis=0)
    return _result(value, (a, b), lambda g: (g[:n], g[n:]))


def scatter_rows(num_rows: int, pieces) -> Tensor:
    """Assemble a matrix from ``(row_positions, tensor)`` pieces.

    Positions must be disjoint; rows not covered are zero.
    """
    pieces = [(np.asarray(pos, dtype=np.int64), t) for pos, t in pieces]
    cols = pieces[0][1].shape[1]
    dtype = pieces[0][1].dtype
    out = np.zeros((num_rows, cols), dtype=dtype)
    for pos, t in pieces:
        if t.shape != (len(pos), cols):
            raise InputError("scatter_rows piece has wrong shape")
        out[pos] = t.value
    positions = [pos for pos, _ in pieces]

    def back(g):
        return tuple(g[pos] for pos in positions)

    return _result(out, tuple(t for _, t in pieces), back)


def gather_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    n = a.shape[0]

    def back(g):
        full = np.zeros((n, g.shape[1]), dtype=g.dtype)
        np.add.at(full, idx, g)
        return (full,)

    return _result(a.value[idx], (a,), back)


def spmm(matrix: sp.spmatrix, x: Tensor, matrix_t: sp.spmatrix | None = None) -> Tensor:
    """Constant sparse matrix times dense tensor."""
    if matrix.shape[1] != x.shape[0]:
        raise InputError(f"spmm shape mismatch {matrix.shape} @ {x.shape}")
    mt = matrix.T.tocsr() if matrix_t is None else matrix_t
    value = np.asarray(matrix @ x.value).astype(x.dtype, copy=False)
    return _result(value, (x,), lambda g: (np.asarray(mt @ g),))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    total = np.array(a.value.sum(dtype=np.float64))
    return _result(total, (a,), lambda g: (np.full(shape, float(g)),))


def square_sum(a: Tensor) -> Tensor:
    av = a.value.astype(np.float64)
    total = np.array(np.sum(av * av))
    return _result(total, (a,), lambda g: (2.0 * float(g) * av,))


def frobenius_norm(a: Tensor) -> Tensor:
    av = a.value.astype(np.float64)
    nrm = float(np.sqrt(np.sum(av * av)))

    def back(g):
        if nrm == 0.0:
            return (np.zeros_like(av),)
        return (float(g) * av / nrm,)

    return _result(np.array(nrm), (a,), back)
