import numpy as np

from ..exceptions import InputError
from .tensor import Tensor, _result


def softmax_cross_entropy(logits: Tensor, labels, mask=None) -> Tensor:
    """Mean negative log-likelihood of ``labels`` over the masked rows.

    ``labels`` is an integer array (or a :class:`~histgnn.graph.LabelSet`)
    aligned with the rows of ``logits``; ``mask`` selects contributing rows.
    """
    if hasattr(labels, "labels"):
        labels = labels.labels
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.value.astype(np.float64)
    n, k = z.shape
    if labels.shape != (n,):
        raise InputError("one label per logit row is required")
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise InputError("cross-entropy over an empty mask")
    y = labels[rows]
    if np.any((y < 0) | (y >= k)):
        raise InputError("label outside [0, num_classes)")

    zr = z[rows]
    shifted = zr - zr.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - lse[:, None]
    loss = -logp[np.arange(rows.size), y].mean()

    def back(g):
        p = np.exp(logp)
        p[np.arange(rows.size), y] -= 1.0
        full = np.zeros_like(z)
        full[rows] = p * (float(g) / rows.size)
        return (full,)

    return _result(np.array(loss), (logits,), back)


def accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return float("nan")
    pred = np.asarray(logits).argmax(axis=1)
    return float((pred[mask] == np.asarray(labels)[mask]).mean())
